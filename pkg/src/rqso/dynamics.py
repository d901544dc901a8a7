"""
Random iteration of Volterra operators.

An :class:`OperatorEnsemble` is a finite list of operators with sampling
weights. Its first ``m`` members must be the squaring operators ``V_1 ..
V_m`` (operator ``k`` squares coordinate ``k``); later members are
arbitrary. At every step one operator is drawn independently by inverse CDF
from a trajectory's own uniform stream and applied to the current state.

Besides the states, the engine tracks for every coordinate ``i``

* ``Z[n, i] = log(x_n[i])``, with ``-inf`` once the coordinate is zero, and
* ``Y[n, i]``, the log-coordinate whose one-step increments are cut off
  from below at ``-d``: ``Y[n+1] - Y[n] = max(log(x_{n+1}/x_n), -d)``.

The increments of ``Y`` are computed from the operator's multiplier
``1 + (A x)_i`` rather than from the stored states, so they stay exact even
after a coordinate has underflowed to zero.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from . import streams
from .simplex import in_neighborhood, lattice_points, neighborhood_index, validate
from .volterra import VolterraOperator, squaring_operator, volterra_step

DEFAULT_DELTA = 1e-9
DEFAULT_K = 10
D_MARGIN = 1e-6
WEIGHT_TOL = 1e-12


class EnsembleError(ValueError):
    """Raised for ensembles that violate the squaring-operator hypothesis."""


class OperatorEnsemble:
    """Operators ``ops`` drawn i.i.d. with probabilities ``weights``.

    Parameters
    ----------
    ops : sequence of VolterraOperator
        ``ops[k]`` must square coordinate ``k`` for ``k < m``.
    weights : sequence of float
        Strictly positive, summing to one within ``1e-12``.
    """

    def __init__(self, ops, weights):
        ops = list(ops)
        weights = np.asarray(weights, dtype=np.float64)
        if not ops:
            raise EnsembleError("ensemble is empty")
        if not all(isinstance(op, VolterraOperator) for op in ops):
            raise EnsembleError("ensemble members must be VolterraOperator instances")
        m = ops[0].m
        if any(op.m != m for op in ops):
            raise EnsembleError("all operators must share the same dimension m")
        if weights.shape != (len(ops),):
            raise EnsembleError(f"nu has {weights.size} entries for {len(ops)} operators")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise EnsembleError("nu entries must be strictly positive")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise EnsembleError(f"nu sums to {weights.sum()!r}, not 1")
        if len(ops) < m:
            raise EnsembleError(
                f"ensemble has {len(ops)} operators but needs a squaring operator "
                f"for each of the m={m} coordinates"
            )
        for k in range(m):
            if k not in ops[k].squares():
                raise EnsembleError(
                    f"operator {k + 1} must square coordinate {k + 1} "
                    f"(a_{k + 1},i = -1 for all i): every coordinate needs a squaring operator"
                )
        self.ops = tuple(ops)
        self.weights = weights
        self.weights.flags.writeable = False
        self.m = m
        self.A_stack = np.stack([op.A for op in ops])
        self.A_stack.flags.writeable = False
        self.cdf = np.cumsum(weights)
        self.cdf[-1] = 1.0

    def __len__(self):
        return len(self.ops)

    def __repr__(self):
        return f"<OperatorEnsemble m={self.m} n_ops={len(self)}>"

    @classmethod
    def squaring(cls, m, weights=None, extra=(), block=None):
        """The ``m`` zero-block squaring operators, optionally followed by `extra`."""
        ops = [squaring_operator(m, k, block=block) for k in range(m)] + list(extra)
        if weights is None:
            weights = np.full(len(ops), 1.0 / len(ops))
        return cls(ops, weights)

    @property
    def weights_exact(self):
        """Weights as fractions (floats snapped to the nearest small rational)."""
        return tuple(Fraction(float(w)).limit_denominator(10**9) for w in self.weights)

    def index_from_uniform(self, u):
        """Operator index for uniform(s) `u`; cell ``k`` is ``[cdf[k-1], cdf[k])``."""
        idx = np.searchsorted(self.cdf, u, side="right")
        return np.minimum(idx, len(self.ops) - 1)


def sample_operator(ensemble, rng):
    """Draw one operator index from `rng` (a numpy Generator)."""
    return int(ensemble.index_from_uniform(rng.random()))


@dataclass(frozen=True)
class DriftConstants:
    """Block length, success probability and log-drift constants.

    ``r`` is the smallest integer with ``-2**r + (m-2) r < log2(eps)``,
    ``N = r (m-1)``, ``q = prod_{i<m} nu_i**r``, ``d`` the increment
    cut-off depth and ``D = min_{i<m} nu_i d - log 2`` the guaranteed
    downward drift.
    """

    m: int
    eps: float
    r: int
    N: int
    q: float
    q_exact: Fraction
    d: float
    d_threshold: float
    D: float


def cutoff_threshold(ensemble):
    """``max(log m, max_i log(2) / nu_i)`` over the squaring operators."""
    nu = ensemble.weights[: ensemble.m]
    return max(math.log(ensemble.m), float(np.max(math.log(2.0) / nu)))


def cutoff_depth(ensemble, margin=D_MARGIN):
    """Cut-off depth ``d``: the threshold scaled by ``1 + margin``."""
    return cutoff_threshold(ensemble) * (1.0 + margin)


def smallest_block_exponent(m, eps):
    """Smallest ``r >= 1`` with ``-2**r + (m-2) r < log(eps) / log(2)``."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    target = math.log(eps) / math.log(2.0)
    r = 1
    while -(2**r) + (m - 2) * r >= target:
        r += 1
    return r


def derive_constants(ensemble, eps, d=None, margin=D_MARGIN):
    """Constants for target neighborhood size `eps`.

    Parameters
    ----------
    ensemble : OperatorEnsemble
    eps : float
        Neighborhood radius in ``(0, 1)``.
    d : float, optional
        Explicit cut-off depth; must exceed the threshold. Defaults to the
        threshold times ``1 + margin``.
    """
    m = ensemble.m
    r = smallest_block_exponent(m, eps)
    nu = ensemble.weights[:m]
    q_exact = Fraction(1)
    for w in ensemble.weights_exact[:m]:
        q_exact *= w**r
    q = float(np.prod(nu**r))
    threshold = cutoff_threshold(ensemble)
    if d is None:
        d = threshold * (1.0 + margin)
    elif not d > threshold:
        raise ValueError(f"d={d} must exceed max(log m, log 2 / nu_i) = {threshold}")
    D = float(np.min(nu * d) - math.log(2.0))
    return DriftConstants(m=m, eps=eps, r=r, N=r * (m - 1), q=q, q_exact=q_exact,
                          d=float(d), d_threshold=threshold, D=D)


@dataclass
class DriftTally:
    """Sums of cut-off log increments on steps where ``Y[n, i] <= -d``."""

    count: np.ndarray
    total: np.ndarray
    total_sq: np.ndarray
    min_increment: float = math.inf
    max_increment: float = -math.inf

    @classmethod
    def empty(cls, m):
        return cls(np.zeros(m, dtype=np.int64), np.zeros(m), np.zeros(m))

    def merge(self, other):
        return DriftTally(self.count + other.count, self.total + other.total,
                          self.total_sq + other.total_sq,
                          min(self.min_increment, other.min_increment),
                          max(self.max_increment, other.max_increment))

    @property
    def mean(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.total / self.count

    @property
    def second_moment(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.total_sq / self.count

    @property
    def stderr(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            var = (self.total_sq - self.total**2 / self.count) / (self.count - 1)
            return np.sqrt(np.maximum(var, 0.0) / self.count)


@dataclass
class BatchResult:
    """Per-row outcome of :func:`simulate_batch` (vertex indices 0-based, -1 = none)."""

    verdict_vertex: np.ndarray
    absorption_step: np.ndarray
    hit_step: np.ndarray
    hit_vertex: np.ndarray
    final_state: np.ndarray
    drift: DriftTally
    op_indices: np.ndarray = None
    states: np.ndarray = None
    Z: np.ndarray = None
    Y: np.ndarray = None


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def simulate_batch(ensemble, x0, uniforms, delta=DEFAULT_DELTA, K=DEFAULT_K,
                   eps=None, N=None, d=None, record=False):
    """Advance a batch of trajectories in lockstep.

    Parameters
    ----------
    ensemble : OperatorEnsemble
    x0 : ndarray, shape (B, m)
        Starting points, one per row.
    uniforms : ndarray, shape (B, horizon)
        Operator-choice uniforms; row ``b`` drives trajectory ``b``.
    delta, K : float, int
        Absorption detector: vertex ``j`` is declared at step ``n`` when
        ``x[j] > 1 - delta`` holds at steps ``n, ..., n + K - 1``.
    eps, N : float, int, optional
        If given, the first multiple of ``N`` at which the state lies in the
        ``eps``-neighborhood of some vertex is recorded.
    d : float, optional
        Cut-off depth for ``Y``; defaults to :func:`cutoff_depth`.
    record : bool
        Keep full ``states``, ``Z``, ``Y`` and operator indices.
    """
    x = np.array(x0, dtype=np.float64, ndmin=2)
    B, m = x.shape
    u = np.asarray(uniforms, dtype=np.float64).reshape(B, -1)
    horizon = u.shape[1]
    if d is None:
        d = cutoff_depth(ensemble)
    idx = ensemble.index_from_uniform(u)
    track_hits = eps is not None and N is not None

    Y = _log(x)
    rows = np.arange(B)
    verdict = np.full(B, -1, dtype=np.int64)
    absorbed_at = np.full(B, -1, dtype=np.int64)
    run_len = np.zeros(B, dtype=np.int64)
    run_vertex = np.full(B, -1, dtype=np.int64)
    hit_step = np.full(B, -1, dtype=np.int64)
    hit_vertex = np.full(B, -1, dtype=np.int64)
    tally = DriftTally.empty(m)
    thresh = 1.0 - delta

    if record:
        states = np.empty((B, horizon + 1, m))
        Ys = np.empty((B, horizon + 1, m))

    def observe(n, x):
        lead = np.argmax(x, axis=1)
        near = x[rows, lead] > thresh
        same = near & (lead == run_vertex)
        run_len[:] = np.where(same, run_len + 1, np.where(near, 1, 0))
        run_vertex[:] = np.where(near, lead, -1)
        fresh = (run_len == K) & (verdict < 0)
        verdict[fresh] = lead[fresh]
        absorbed_at[fresh] = n - K + 1
        if track_hits and n % N == 0:
            j = neighborhood_index(x, eps)
            new = (j >= 0) & (hit_step < 0)
            hit_step[new] = n
            hit_vertex[new] = j[new]

    observe(0, x)
    if record:
        states[:, 0] = x
        Ys[:, 0] = Y
    for n in range(horizon):
        A = ensemble.A_stack[idx[:, n]]
        x, factor, total = volterra_step(A, x)
        inc = _log(factor) - _log(total)[:, None]
        np.maximum(inc, -d, out=inc)
        below = np.isfinite(Y) & (Y <= -d)
        if below.any():
            tally.count += below.sum(axis=0)
            tally.total += np.where(below, inc, 0.0).sum(axis=0)
            tally.total_sq += np.where(below, inc * inc, 0.0).sum(axis=0)
        live = np.isfinite(Y)
        if live.any():
            tally.min_increment = min(tally.min_increment, float(inc[live].min()))
            tally.max_increment = max(tally.max_increment, float(inc[live].max()))
        # Y - Z never decreases in exact arithmetic; the max removes rounding
        Y = np.maximum(Y + inc, _log(x))
        observe(n + 1, x)
        if record:
            states[:, n + 1] = x
            Ys[:, n + 1] = Y

    result = BatchResult(verdict, absorbed_at, hit_step, hit_vertex, x, tally)
    if record:
        result.op_indices = idx
        result.states = states
        result.Y = Ys
        result.Z = _log(states)
    return result


@dataclass
class TrajectoryRecord:
    """One realized random orbit. Indices are 0-based; ``None`` means undecided."""

    seed: int
    index: int
    x0: np.ndarray
    op_indices: np.ndarray
    states: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    verdict_vertex: int = None
    absorption_step: int = None
    d: float = field(default=None, repr=False)

    @property
    def horizon(self):
        return len(self.op_indices)

    @property
    def converged(self):
        return self.verdict_vertex is not None

    @property
    def verdict(self):
        if self.converged:
            return f"converged to vertex {self.verdict_vertex + 1} at step {self.absorption_step}"
        return f"undecided after {self.horizon} steps"


def run_random_trajectory(ensemble, x0, horizon, seed, delta=DEFAULT_DELTA, K=DEFAULT_K,
                          index=0, d=None):
    """Simulate trajectory `index` of the campaign with master `seed`.

    The record is bit-identical to row `index` of a campaign run with the
    same seed, whatever the batching.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    if K < 1:
        raise ValueError("K must be >= 1")
    x0 = validate(x0)
    if x0.size != ensemble.m:
        raise ValueError(f"x0 has {x0.size} coordinates, ensemble has m={ensemble.m}")
    if d is None:
        d = cutoff_depth(ensemble)
    u = streams.trajectory_stream(seed, index).random(horizon)
    res = simulate_batch(ensemble, x0[None, :], u[None, :], delta=delta, K=K, d=d, record=True)
    v = int(res.verdict_vertex[0])
    return TrajectoryRecord(
        seed=int(seed), index=int(index), x0=x0, op_indices=res.op_indices[0],
        states=res.states[0], Z=res.Z[0], Y=res.Y[0],
        verdict_vertex=None if v < 0 else v,
        absorption_step=None if v < 0 else int(res.absorption_step[0]),
        d=d,
    )


def hitting_time_U_epsilon(record, eps, N):
    """First multiple of `N` at which the recorded state is near a vertex.

    Returns
    -------
    (step, J) or None
        ``J`` is the smallest vertex index whose `eps`-neighborhood holds
        the state at ``step``.
    """
    states = record.states if hasattr(record, "states") else np.asarray(record)
    for n in range(0, len(states), N):
        j = in_neighborhood(states[n], eps)
        if j is not None:
            return n, j
    return None


def absorption(states, delta=DEFAULT_DELTA, K=DEFAULT_K):
    """Scan a state sequence for the absorption verdict.

    Returns ``(vertex, step)`` for the first run of `K` consecutive states
    with ``x[j] > 1 - delta`` (``step`` is where the run starts), else None.
    """
    states = np.asarray(states)
    lead = np.argmax(states, axis=1)
    near = states[np.arange(len(states)), lead] > 1.0 - delta
    run = 0
    for n in range(len(states)):
        if near[n] and run and lead[n] == lead[n - 1]:
            run += 1
        else:
            run = 1 if near[n] else 0
        if run == K:
            return int(lead[n]), n - K + 1
    return None


@dataclass
class DeterministicRun:
    """Orbit of a single operator with boundary and leader diagnostics."""

    states: np.ndarray
    min_coord: np.ndarray
    leaders: tuple
    verdict_vertex: int = None
    absorption_step: int = None

    @property
    def converged(self):
        return self.verdict_vertex is not None

    def first_below(self, level):
        """First step at which the smallest coordinate is below `level`, else None."""
        hits = np.flatnonzero(self.min_coord < level)
        return int(hits[0]) if hits.size else None


def run_deterministic_trajectory(V, x0, horizon, delta=DEFAULT_DELTA, K=DEFAULT_K):
    """Iterate one operator `horizon` times from `x0`."""
    x = np.array(validate(x0))
    if x.size != V.m:
        raise ValueError(f"x0 has {x.size} coordinates, operator has m={V.m}")
    states = np.empty((horizon + 1, V.m))
    states[0] = x
    A = V.A
    for n in range(horizon):
        x, _, _ = volterra_step(A, x)
        states[n + 1] = x
    verdict = absorption(states, delta, K)
    leaders = tuple(sorted(set(np.argmax(states, axis=1).tolist())))
    return DeterministicRun(
        states=states, min_coord=states.min(axis=1), leaders=leaders,
        verdict_vertex=None if verdict is None else verdict[0],
        absorption_step=None if verdict is None else verdict[1],
    )


def start_grid(m, level=4, include_barycenter=True):
    """Lattice points of the `level`-fold barycentric refinement, plus barycenter."""
    pts = lattice_points(m, level)
    if include_barycenter:
        bary = np.full(m, 1.0 / m)
        if not np.any(np.all(np.isclose(pts, bary, rtol=0, atol=1e-15), axis=1)):
            pts = np.vstack([pts, bary])
    return pts


@dataclass
class BlockSuccess:
    """Empirical probability of reaching the neighborhood union in ``N`` steps."""

    eps: float
    N: int
    q: float
    points: np.ndarray
    successes: np.ndarray
    trials: int
    ci_low: np.ndarray
    ci_high: np.ndarray

    @property
    def probability(self):
        return self.successes / self.trials

    @property
    def worst(self):
        """Index of the start point with the smallest empirical probability."""
        return int(np.argmin(self.successes))

    @property
    def consistent(self):
        """True if no Wilson upper bound falls below ``q``."""
        return bool(np.all(self.ci_high >= self.q))


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return ci.low, ci.high


def estimate_block_success(ensemble, eps, trials, seed, points=None, level=4,
                           include_barycenter=True):
    """Probability of landing in the `eps`-neighborhood union after ``N`` steps.

    Each start point ``p`` (row of `points`, default :func:`start_grid`)
    gets its own operator stream ``trajectory_stream(seed, p)`` from which
    ``trials`` independent blocks of ``N`` uniforms are drawn.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    pts = start_grid(ensemble.m, level, include_barycenter) if points is None else np.atleast_2d(points)
    pts = np.array([validate(p) for p in pts])
    P = len(pts)
    if eps >= 1:
        ones = np.ones(P)
        return BlockSuccess(eps, 0, 1.0, pts, np.full(P, trials), trials, ones, ones)
    const = derive_constants(ensemble, eps)
    N = const.N
    succ = np.zeros(P, dtype=np.int64)
    for p, x in enumerate(pts):
        u = streams.trajectory_stream(seed, p).random((trials, N))
        xs = np.broadcast_to(x, (trials, ensemble.m))
        res = simulate_batch(ensemble, xs, u, K=N + 2)
        succ[p] = int(np.count_nonzero(neighborhood_index(res.final_state, eps) >= 0))
    lo = np.empty(P)
    hi = np.empty(P)
    for p in range(P):
        lo[p], hi[p] = wilson_interval(succ[p], trials)
    return BlockSuccess(eps, N, const.q, pts, succ, trials, lo, hi)
