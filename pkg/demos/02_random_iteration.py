"""
Random iteration converges to a vertex
======================================

Draw one of the three squaring operators uniformly at random each
generation. Every trajectory ends at a vertex: one type takes over.
"""
import numpy as np

from rqso import OperatorEnsemble, barycenter, derive_constants, run_random_trajectory
from rqso.dynamics import simulate_batch
from rqso.streams import trajectory_uniforms

ens = OperatorEnsemble.squaring(3)

# one trajectory, step by step
rec = run_random_trajectory(ens, barycenter(3), horizon=60, seed=1)
for n in (0, 5, 10, 20, 40, 60):
    print(n, np.round(rec.states[n], 6))
print(rec.verdict)

# constants of the block argument: r, N and the success probability q
c = derive_constants(ens, eps=0.01)
print(f"r={c.r} N={c.N} q={c.q_exact} d={c.d:.4f} D={c.D:.2e}")

# ten thousand trajectories in lockstep
n = 10_000
u = trajectory_uniforms(seed=7, indices=range(n), n=300)
res = simulate_batch(ens, np.tile(barycenter(3), (n, 1)), u, eps=0.01, N=c.N)
print("converged:", np.mean(res.verdict_vertex >= 0))
print("absorbing vertex counts:", np.bincount(res.verdict_vertex, minlength=3))

# the log-coordinates drift down by at least D whenever they are below -d
t = res.drift
print("mean increment below -d:", np.round(t.mean, 3), "+-", np.round(t.stderr, 4))
