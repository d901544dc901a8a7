"""
Volterra operators on the simplex
=================================

A Volterra operator maps a population ``x`` to ``x_k (1 + sum_i a_ki x_i)``
with a skew-symmetric matrix ``A``. Here we build a few, compare the cheap
matrix form with the full heredity tensor, and list the extremal family.
"""
import numpy as np

from rqso import (apply, barycenter, check_doubling_bound, enumerate_extremal, squaring_operator,
                  tensor_from_matrix)
from rqso.volterra import apply_tensor

# the squaring operator V_1 squares the first frequency and hands the loss
# to everybody else
V1 = squaring_operator(3, 0)
print(V1.A)
x = barycenter(3)
print("V_1(barycenter) =", apply(V1, x))

# same image from the m x m x m heredity tensor
p = tensor_from_matrix(V1)
print("tensor form     =", apply_tensor(p, x))

# no coordinate can more than double in one generation
rng = np.random.default_rng(0)
ops = enumerate_extremal(3)
print(len(ops), "extremal operators for m = 3")
ok = all(check_doubling_bound(V, rng.dirichlet(np.ones(3))) for V in ops for _ in range(100))
print("doubling bound holds on 800 random pairs:", ok)

# vertices are fixed points of every operator
for V in ops:
    assert np.array_equal(apply(V, np.eye(3)[1]), np.eye(3)[1])
