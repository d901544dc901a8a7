"""
A single operator can cycle
===========================

With a_12 = a_23 = a_31 = 1 each type beats the next one, so the orbit
circles the boundary of the simplex and visits every vertex in turn.
Mixing this operator into the squaring ensemble does not stop the random
iteration from settling down.
"""
import numpy as np

from rqso import OperatorEnsemble, VolterraOperator, barycenter, run_deterministic_trajectory
from rqso.dynamics import simulate_batch
from rqso.streams import trajectory_uniforms

A = np.zeros((3, 3))
A[0, 1] = A[1, 2] = A[2, 0] = 1.0
cyc = VolterraOperator(A - A.T)

run = run_deterministic_trajectory(cyc, [0.3, 0.3, 0.4], horizon=60)
for n in range(0, 61, 6):
    print(n, np.round(run.states[n], 8))
print("leaders:", [j + 1 for j in run.leaders])
print("first step with a coordinate below 1e-6:", run.first_below(1e-6))

# the dwell time near each vertex grows from lap to lap; in floating point
# the small coordinates eventually underflow and the orbit stops at a vertex
long = run_deterministic_trajectory(cyc, [0.3, 0.3, 0.4], horizon=2000)
print("after 2000 steps:", long.states[-1])

# the same operator as a fourth option of the random ensemble
ens = OperatorEnsemble.squaring(3, [0.3, 0.3, 0.3, 0.1], extra=[cyc])
u = trajectory_uniforms(seed=3, indices=range(1000), n=2000)
res = simulate_batch(ens, np.tile(barycenter(3), (1000, 1)), u)
print("random iteration converged:", np.mean(res.verdict_vertex >= 0))
