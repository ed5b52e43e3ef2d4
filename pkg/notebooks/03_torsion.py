"""
Torsion from a gradient
=======================

At a point of the orbit the derivative of xi is A_l . xi for some matrices
A_l; the torsion keeps the part of A_l orthogonal to the stabiliser.  For
G2 there is also the classical full torsion tensor, and both agree.
"""

import numpy as np
import scipy.linalg

from hflow.algebra import diamond, group_act, hodge_star, inner
from hflow.models import model
from hflow.torsion import g2_full_torsion, g2_torsion_from_full, pi_m, torsion_from_gradient

rng = np.random.default_rng(3)
hm = model("g2")
C = rng.normal(size=(7, 7))
phi = group_act(scipy.linalg.expm(0.5 * (C - C.T)), hm.xi0)

A = []
for _ in range(7):
    M = rng.normal(size=(7, 7))
    A.append(M - M.T)
grad = [diamond(a, phi) for a in A]

tv = torsion_from_gradient(hm, phi, grad)
print("projection residual:", tv.residual)
print("T_1 equals pi_m(A_1):", np.allclose(tv[0], pi_m(hm, phi, A[0])))

# |grad phi|^2 = 6 |T|^2
print("|grad phi|^2 / |T|^2 =", sum(inner(g, g) for g in grad) / tv.norm2)

# the same torsion through the full torsion tensor
full = g2_full_torsion(phi[0], hodge_star(phi[0].data), np.stack([g[0].data for g in grad]))
print("generic vs G2 formula:", np.max(np.abs(tv.T - g2_torsion_from_full(full, phi[0]))))
