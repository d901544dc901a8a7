"""
Escape bounds for processes with positive drift.

A real process ``Y`` with conditional drift at least ``A`` and conditional
variance at most ``B`` (while it stays above a level ``a``) grows linearly
on the event that it never drops below ``a``, and started high enough it
stays above any level ``b`` with probability at least ``1 - theta``. The
start level comes from two series

    f(c2, alpha2)    = sum_n B n**2        / (c2 + alpha2 n**2)**2
    g(c, beta)       = sum_n B n (2n + 1)  / (c + beta n**2)**2

whose sum bounds the escape probability ``P(exists m: S_m <= -c1 - alpha1 m)``
of the martingale part ``S``. Both series are evaluated as certified upper
bounds (partial sum plus an explicit integral-comparison tail), since the
result is used as a probability bound.
"""
import functools
import math
from dataclasses import dataclass

import numpy as np

from . import streams

MAX_TERMS = 10**7
# cheaper, still certified, bounds used inside the constant search
SEARCH_TERMS = 10**5
REL_TAIL = 1e-10
_CHUNK = 1 << 20
# covers float64 pairwise-summation and per-term rounding error
_ROUNDING_PAD = 1e-14


@dataclass(frozen=True)
class SeriesBound:
    """Certified evaluation of a positive series: ``partial <= true <= upper``."""

    partial: float
    tail: float
    terms: int

    @property
    def upper(self):
        return self.partial + self.tail + _ROUNDING_PAD * self.partial


def _sq_integral(B, c, alpha, M):
    # int_M^inf B x^2 / (c + alpha x^2)^2 dx
    if c == 0:
        return B / (alpha * alpha * M)
    root = math.sqrt(alpha * c)
    return B / (2 * alpha) * (math.atan(math.sqrt(c / alpha) / M) / root + M / (c + alpha * M * M))


def _lin_integral(B, c, beta, M):
    # int_M^inf B x / (c + beta x^2)^2 dx
    return B / (2 * beta * (c + beta * M * M))


def _sum_terms(term, start, stop):
    total = 0.0
    for lo in range(start, stop, _CHUNK):
        n = np.arange(lo, min(lo + _CHUNK, stop), dtype=np.float64)
        total += float(term(n).sum())
    return total


def _certified(term, tail_bound, max_terms):
    partial = 0.0
    done = 0
    M = 1024
    while True:
        M = min(M, max_terms)
        partial += _sum_terms(term, done + 1, M + 1)
        done = M
        tail = tail_bound(M)
        if tail < REL_TAIL * partial or M >= max_terms:
            return SeriesBound(partial, tail, M)
        M *= 8


@functools.lru_cache(maxsize=512)
def series_f(B, c2, alpha2, max_terms=MAX_TERMS):
    """``f(c2, alpha2)`` with its certification data."""
    B, c2, alpha2 = float(B), float(c2), float(alpha2)
    if B < 0 or c2 < 0 or alpha2 <= 0:
        raise ValueError("need B >= 0, c2 >= 0, alpha2 > 0")

    def term(n):
        return B * n * n / (c2 + alpha2 * n * n) ** 2

    def tail(M):
        crude = B / (alpha2 * alpha2 * M)
        if M >= math.sqrt(c2 / alpha2):
            return min(crude, _sq_integral(B, c2, alpha2, M))
        return crude

    return _certified(term, tail, int(max_terms))


@functools.lru_cache(maxsize=512)
def series_g(B, c, beta, max_terms=MAX_TERMS):
    """``g(c, beta)`` with its certification data; ``c = c1 - c2``, ``beta = alpha1 - alpha2``."""
    B, c, beta = float(B), float(c), float(beta)
    if B < 0 or c < 0 or beta <= 0:
        raise ValueError("need B >= 0, c >= 0, beta > 0")

    def term(n):
        return B * n * (2 * n + 1) / (c + beta * n * n) ** 2

    def tail(M):
        crude = 3 * B / (beta * beta * M)
        if M >= math.sqrt(c / beta):
            return min(crude, 2 * _sq_integral(B, c, beta, M) + _lin_integral(B, c, beta, M))
        return crude

    return _certified(term, tail, int(max_terms))


def evaluate_f(B, c2, alpha2):
    """Certified upper bound on ``sum_n B n^2 / (c2 + alpha2 n^2)^2``."""
    return series_f(B, c2, alpha2).upper


def evaluate_g(B, c, beta):
    """Certified upper bound on ``sum_n B n (2n+1) / (c + beta n^2)^2``."""
    return series_g(B, c, beta).upper


def _smallest(feasible, rel_tol=1e-4):
    """Smallest ``c >= 0`` (to `rel_tol`) with ``feasible(c)``, for monotone `feasible`."""
    if feasible(0.0):
        return 0.0
    hi = 1.0
    while not feasible(hi):
        hi *= 2.0
    lo = 0.0 if hi == 1.0 else hi / 2.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class EscapeConstants:
    """Start level ``S = c1 + b`` that keeps the process above ``b`` w.p. >= ``1 - theta``."""

    c1: float
    c2: float
    S: float
    alpha1: float
    alpha2: float
    theta: float
    f: float
    g: float


def choose_escape_constants(A, B, theta, b=0.0, split=0.5):
    """Find ``c2``, then ``c1 >= c2``, so that ``f + g <= theta``.

    ``alpha1 = A`` and ``alpha2 = split * A``. ``c2`` is the smallest value
    (doubling, then bisection) with ``f(c2, alpha2) <= theta / 2``; then
    ``c1 - c2`` is the smallest value with ``g(c1 - c2, alpha1 - alpha2) < theta / 2``.
    The search tests feasibility with shorter certified bounds, which can
    only overestimate the series, so the reported ``f`` and ``g`` satisfy
    both conditions.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    if A <= 0 or B <= 0:
        raise ValueError("need A > 0 and B > 0")
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    alpha1 = float(A)
    alpha2 = split * alpha1
    beta = alpha1 - alpha2
    half = theta / 2.0
    c2 = _smallest(lambda c: series_f(B, c, alpha2, SEARCH_TERMS).upper <= half)
    c = _smallest(lambda c: series_g(B, c, beta, SEARCH_TERMS).upper < half)
    c1 = c2 + c
    return EscapeConstants(c1=c1, c2=c2, S=c1 + b, alpha1=alpha1, alpha2=alpha2, theta=theta,
                           f=evaluate_f(B, c2, alpha2), g=evaluate_g(B, c, beta))


@dataclass(frozen=True)
class DriftProcessSpec:
    """Synthetic process ``Y_{n+1} = Y_n + A + noise`` with ``Var(noise) <= B``.

    ``noise`` is ``"uniform"`` (on ``[-w, w]``) or ``"two-point"`` (``+-w``);
    ``width`` defaults to the value giving variance exactly ``B``.
    """

    A: float
    B: float
    a: float
    Y0: float
    noise: str = "uniform"
    width: float = None

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("drift A must be positive")
        if not self.B > 0:
            raise ValueError("variance bound B must be positive")
        if self.noise not in ("uniform", "two-point"):
            raise ValueError(f"unknown noise {self.noise!r}")
        if self.width is None:
            w = math.sqrt(3 * self.B) if self.noise == "uniform" else math.sqrt(self.B)
            object.__setattr__(self, "width", w)
        if self.width < 0 or self.variance > self.B * (1 + 1e-12):
            raise ValueError(f"noise variance {self.variance} exceeds B={self.B}")

    @property
    def variance(self):
        return self.width**2 / 3 if self.noise == "uniform" else self.width**2

    def noise_from_uniform(self, u):
        if self.noise == "uniform":
            return self.width * (2.0 * u - 1.0)
        return np.where(u < 0.5, -self.width, self.width)


@dataclass
class DriftPathStats:
    """Monte Carlo summary of :func:`simulate_drift_process`."""

    trials: int
    horizon: int
    survival_fraction: float
    growth: np.ndarray
    ratio: np.ndarray
    escape_freq: float
    cutoff_consistent: bool
    paths: dict = None

    @property
    def survival_se(self):
        p = self.survival_fraction
        return math.sqrt(p * (1 - p) / self.trials)

    @property
    def escape_se(self):
        p = self.escape_freq
        return math.sqrt(p * (1 - p) / self.trials)

    @property
    def conditional_growth_mean(self):
        """Mean of ``(Y_h - Y_0) / h`` over paths that never dropped below ``a``."""
        return float(self.growth.mean()) if self.growth.size else math.nan

    @property
    def conditional_ratio_mean(self):
        """Mean of ``Y_h / h`` over surviving paths."""
        return float(self.ratio.mean()) if self.ratio.size else math.nan


def simulate_drift_process(spec, horizon, trials, seed, c1=None, alpha1=None, keep_paths=False,
                           chunk=256):
    """Simulate `trials` independent paths of the drift process.

    Trial ``t`` draws its noise from ``trajectory_stream(seed, t, NOISE)``.
    Besides survival and growth, the escape frequency
    ``P(exists m <= horizon: S_m <= -c1 - alpha1 m)`` of the martingale
    part of the cut-off process is estimated (``c1`` defaults to
    ``Y0 - a``, ``alpha1`` to ``A``).

    The cut-off process agrees with ``Y`` up to the first time ``tau`` it is
    below ``a`` and moves deterministically by ``+A`` afterwards, so its
    martingale increments are the noise before ``tau`` and zero after.
    """
    if horizon < 1 or trials < 1:
        raise ValueError("horizon and trials must be >= 1")
    c1 = spec.Y0 - spec.a if c1 is None else c1
    alpha1 = spec.A if alpha1 is None else alpha1
    steps = np.arange(1, horizon + 1, dtype=np.float64)
    survived = np.zeros(trials, dtype=bool)
    escaped = np.zeros(trials, dtype=bool)
    final = np.empty(trials)
    consistent = True
    kept = {"Y": [], "barY": [], "h": []} if keep_paths else None

    for lo in range(0, trials, chunk):
        ids = range(lo, min(lo + chunk, trials))
        u = streams.trajectory_uniforms(seed, ids, horizon, purpose=streams.NOISE)
        xi = spec.noise_from_uniform(u)
        Y = np.empty((len(ids), horizon + 1))
        Y[:, 0] = spec.Y0
        Y[:, 1:] = spec.Y0 + spec.A * steps + np.cumsum(xi, axis=1)
        below = Y < spec.a
        never = ~below.any(axis=1)
        tau = np.where(never, horizon + 1, np.argmax(below, axis=1))
        # h_i = xi_i while tau > i - 1
        active = steps[None, :] - 1 < tau[:, None]
        h = np.where(active, xi, 0.0)
        S = np.cumsum(h, axis=1)
        escaped[lo:lo + len(ids)] = (S <= -c1 - alpha1 * steps).any(axis=1)
        survived[lo:lo + len(ids)] = never
        final[lo:lo + len(ids)] = Y[:, -1]

        inc = np.where(active, Y[:, 1:] - Y[:, :-1], spec.A)
        barY = np.empty_like(Y)
        barY[:, 0] = spec.Y0
        barY[:, 1:] = spec.Y0 + np.cumsum(inc, axis=1)
        n = np.arange(horizon + 1)
        upto = n[None, :] <= tau[:, None]
        consistent &= bool(np.allclose(barY[upto], Y[upto], rtol=0, atol=1e-9 * max(1.0, abs(spec.Y0))))
        consistent &= bool(np.array_equal((barY >= spec.a).all(axis=1), never))
        if keep_paths:
            kept["Y"].append(Y)
            kept["barY"].append(barY)
            kept["h"].append(h)

    if keep_paths:
        kept = {k: np.vstack(v) for k, v in kept.items()}
    return DriftPathStats(
        trials=trials, horizon=horizon,
        survival_fraction=float(survived.mean()),
        growth=(final[survived] - spec.Y0) / horizon,
        ratio=final[survived] / horizon,
        escape_freq=float(escaped.mean()),
        cutoff_consistent=consistent,
        paths=kept,
    )


def appendix_report(A=0.5, B=1.0, a=0.0, theta=0.1, b=0.0, horizon=10_000, trials=10_000,
                    seed=0, noise="uniform", split=0.5):
    """Choose escape constants, start at ``S`` and simulate; returns a JSON-ready dict."""
    const = choose_escape_constants(A, B, theta, b, split=split)
    spec = DriftProcessSpec(A=A, B=B, a=a, Y0=const.S, noise=noise)
    st = simulate_drift_process(spec, horizon, trials, seed, c1=const.c1, alpha1=const.alpha1)
    return {
        "survival_fraction": st.survival_fraction,
        "survival_se": st.survival_se,
        "conditional_growth_mean": st.conditional_growth_mean,
        "conditional_ratio_mean": st.conditional_ratio_mean,
        "escape_freq": st.escape_freq,
        "escape_se": st.escape_se,
        "f": const.f,
        "g": const.g,
        "c1": const.c1,
        "c2": const.c2,
        "S": const.S,
        "theta": theta,
        "A": A,
        "B": B,
        "a": a,
        "horizon": horizon,
        "trials": trials,
    }
