"""
The diamond operator on dense tensors
=====================================

A skew or general matrix A acts on a (p, q)-tensor by differentiating the
natural GL(n) action.  This script builds a few tensors by hand and checks
the basic rules numerically.
"""

import numpy as np
import scipy.linalg

from hflow.algebra import DenseTensor, bracket, diamond, diamond_array, group_act, hodge_star, levi_civita, wedge
from hflow.harness import verify_algebra

rng = np.random.default_rng(0)
n = 4

# A on a matrix (a (1,1)-tensor) is minus the commutator
A, B = rng.normal(size=(2, n, n))
print("A . B + [A, B] =", np.max(np.abs(diamond_array(A, B, 1, 1) + bracket(A, B))))

# on the volume form it is multiplication by the trace
vol = levi_civita(n)
print("A . vol - tr(A) vol =", np.max(np.abs(diamond_array(A, vol, 0, n) - np.trace(A) * vol)))

# wedge and Hodge star
e = np.eye(n)
print("*(e1 ^ e2) == e3 ^ e4 :", np.allclose(hodge_star(wedge(e[0], e[1])), wedge(e[2], e[3])))

# the infinitesimal action integrates to the group action
C = rng.normal(size=(n, n))
C = C - C.T
t = 1e-5
x = DenseTensor(rng.normal(size=(n, n, n)), 1, 2)
fd = (group_act(scipy.linalg.expm(t * C), x)[0].data - group_act(scipy.linalg.expm(-t * C), x)[0].data) / (2 * t)
print("d/dt exp(tC) . x vs C . x:", np.max(np.abs(fd - diamond(C, x)[0].data)))

# all eight identities over random instances
for dim in (4, 7):
    res = verify_algebra(dim, trials=20, seed=1)
    print(f"n={dim}: worst residual {max(res.values()):.2e}")
