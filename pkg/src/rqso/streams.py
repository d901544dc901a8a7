"""
Deterministic random streams.

Two sources, both built on numpy bit generators:

* Trajectory streams. Trajectory ``index`` of a campaign with master seed
  ``seed`` draws from ``PCG64(SeedSequence(seed, spawn_key=(index, purpose)))``.
  ``purpose`` separates independent uses within one trajectory
  (:data:`OPERATORS` for operator choices, :data:`INITIAL` for random
  starting points, :data:`NOISE` for synthetic noise). A trajectory's
  numbers therefore depend only on ``(seed, index, purpose)``, never on how
  trajectories are batched or scheduled.
* Counter uniforms for two-sided environments. The uniform attached to an
  integer position ``n`` is the first 64-bit output of ``Philox4x64`` with
  key ``(seed, 0)`` and counter ``(zigzag(n), 0, 0, 0)``, mapped to
  ``[0, 1)`` by its top 53 bits. Positions may be negative and queried in
  any order.
"""
import numpy as np

OPERATORS = 0
INITIAL = 1
NOISE = 2

_MASK64 = (1 << 64) - 1


def _check_seed(seed):
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return seed


def trajectory_stream(seed, index, purpose=OPERATORS):
    """Generator for trajectory `index` under master `seed`."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(int(index), int(purpose)))
    return np.random.Generator(np.random.PCG64(ss))


def trajectory_uniforms(seed, indices, n, purpose=OPERATORS):
    """``(len(indices), n)`` array of uniforms, row ``r`` from trajectory ``indices[r]``."""
    out = np.empty((len(indices), n))
    for r, i in enumerate(indices):
        out[r] = trajectory_stream(seed, i, purpose).random(n)
    return out


def zigzag(n):
    """Map integers to non-negative integers: 0, -1, 1, -2, 2 -> 0, 1, 2, 3, 4."""
    n = int(n)
    return 2 * n if n >= 0 else -2 * n - 1


def counter_uniform(seed, n):
    """Uniform in ``[0, 1)`` attached to integer position `n` (any sign)."""
    bg = np.random.Philox(counter=[zigzag(n), 0, 0, 0], key=[_check_seed(seed) & _MASK64, 0])
    raw = int(bg.random_raw())
    return (raw >> 11) * 2.0**-53


def counter_uniforms(seed, positions):
    """Vector of :func:`counter_uniform` values."""
    return np.array([counter_uniform(seed, n) for n in positions], dtype=np.float64)
