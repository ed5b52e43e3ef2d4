"""
Fields on a periodic grid
=========================

A StructureField stores the model tensor at every grid point in a
component-major layout, with alternating parts compressed.  Centred
differences, integration and checkpoints act on these arrays.
"""

import tempfile
from pathlib import Path

import numpy as np

from hflow.fields import PeriodicGrid, diff, integrate, read_checkpoint, write_checkpoint
from hflow.harness import make_bump_u2

# second- and fourth-order derivatives converge at their order
for order in (2, 4):
    errs = []
    for N in (16, 32, 64):
        x = np.arange(N) * 2 * np.pi / N
        errs.append(np.max(np.abs(diff(np.exp(np.sin(x)), 0, 2 * np.pi / N, order) - np.cos(x) * np.exp(np.sin(x)))))
    print(f"order {order}: observed rates {np.log2(np.array(errs[:-1]) / np.array(errs[1:])).round(2)}")

g = PeriodicGrid.cube(4, 8)
f = make_bump_u2(g, 2.5, amplitude=0.8)
print("stored shape of J:", f.values[0].shape, "(6 skew components on an 8^4 grid)")
print("volume of the torus:", integrate(np.ones(g.res), g))

with tempfile.TemporaryDirectory() as tmp:
    p = write_checkpoint(Path(tmp) / "bump.hstf", f)
    back = read_checkpoint(p)
    print("checkpoint round trip exact:", all(np.array_equal(a, b) for a, b in zip(f.values, back.values)))
