"""
Model tensors and their constants
=================================

Each supported structure group comes with a model tensor xi0.  The norm of
A . xi0 is a fixed multiple of |A|^2 on the orthogonal complement of the
stabiliser, and the SU(m) family has two such constants.
"""

from hflow.harness import inner_product_constants
from hflow.models import model, verify_model

for kind in ["trivial4", "u2", "u3", "su2", "su3", "su4", "g2", "spin7"]:
    hm = model(kind)
    measured = inner_product_constants(hm, trials=20, seed=0)
    print(f"{kind:8s} n={hm.n} dim h={hm.dim_h:2d} dim m={hm.dim_m:2d} c={hm.c}  measured {measured}")

# identities that pin down the G2 and Spin(7) forms
for kind in ("g2", "spin7"):
    rep = verify_model(model(kind))
    print(kind, {k: f"{v:.1e}" for k, v in rep.residuals.items()})
