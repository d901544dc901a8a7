"""
Campaign configuration and execution.

A campaign runs many independent trajectories of one ensemble. Trajectory
``i`` uses the operator stream ``trajectory_stream(seed, i)`` (and
``trajectory_stream(seed, i, INITIAL)`` for a random start), so results do
not depend on the thread count: trajectories are grouped in fixed chunks of
:data:`CHUNK` and chunk outputs are reassembled in index order.

Config (JSON)::

    {"schema_version": 1, "m": 3,
     "ensemble": ["squaring:1", "squaring:2", "squaring:3"],
     "nu": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334],
     "x0": "barycenter" | [..coords..] | {"dirichlet": 1.0},
     "epsilon": 0.01, "horizon": 500, "trajectories": 10000, "seed": 1,
     "delta": 1e-9, "K": 10}

plus optional ``"deterministic"``, ``"pullback"`` and ``"appendix"`` blocks
used by the corresponding CLI subcommands. Vertex numbers in files are
1-based; 0 means undecided and -1 marks a missing step.
"""
import csv
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import streams
from .dynamics import (DEFAULT_DELTA, DEFAULT_K, DriftTally, EnsembleError, OperatorEnsemble,
                       derive_constants, simulate_batch)
from .simplex import SimplexError, validate
from .volterra import VolterraError, operator_from_spec

CHUNK = 512
SCHEMA_VERSION = 1
CSV_COLUMNS = ["seed_index", "verdict_vertex", "absorption_step", "hit_U_eps_step", "final_max_coord"]

_OP_SPEC = {
    "oneOf": [
        {"type": "string", "pattern": "^(extremal:[01]+|squaring:[0-9]+)$"},
        {
            "type": "object",
            "required": ["A"],
            "properties": {
                "m": {"type": "integer", "minimum": 2},
                "A": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "label": {"type": "string"},
            },
        },
    ]
}
_POINT = {
    "oneOf": [
        {"enum": ["barycenter"]},
        {"type": "array", "items": {"type": "number"}, "minItems": 2},
    ]
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "m", "ensemble", "nu", "x0", "epsilon", "horizon",
                 "trajectories", "seed"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "m": {"type": "integer", "minimum": 2},
        "ensemble": {"type": "array", "minItems": 1, "items": _OP_SPEC},
        "nu": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "x0": {
            "oneOf": [
                _POINT,
                {
                    "type": "object",
                    "required": ["dirichlet"],
                    "properties": {"dirichlet": {"type": "number", "exclusiveMinimum": 0}},
                    "additionalProperties": False,
                },
            ]
        },
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "horizon": {"type": "integer", "minimum": 1},
        "trajectories": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "K": {"type": "integer", "minimum": 1},
        "d": {"type": "number", "exclusiveMinimum": 0},
        "deterministic": {
            "type": "object",
            "properties": {
                "operator": _OP_SPEC,
                "x0": _POINT,
                "horizon": {"type": "integer", "minimum": 1},
                "boundary_level": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "pullback": {
            "type": "object",
            "properties": {
                "points": {
                    "oneOf": [
                        {"enum": ["barycenter", "vertices"]},
                        {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                        {"type": "object", "required": ["lattice"],
                         "properties": {"lattice": {"type": "integer", "minimum": 1}}},
                    ]
                },
                "n_max": {"type": "integer", "minimum": 1},
                "envs": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "ks_n": {"type": "integer", "minimum": 1},
                "min_fraction": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "appendix": {
            "type": "object",
            "properties": {
                "A": {"type": "number", "exclusiveMinimum": 0},
                "B": {"type": "number", "exclusiveMinimum": 0},
                "a": {"type": "number"},
                "theta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "b": {"type": "number"},
                "horizon": {"type": "integer", "minimum": 1},
                "trials": {"type": "integer", "minimum": 1},
                "noise": {"enum": ["uniform", "two-point"]},
                "split": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid campaign configuration; ``errors`` lists ``"path: message"`` strings."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class CampaignConfig:
    ensemble: OperatorEnsemble
    x0: object
    epsilon: float
    horizon: int
    trajectories: int
    seed: int
    delta: float = DEFAULT_DELTA
    K: int = DEFAULT_K
    d: float = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def m(self):
        return self.ensemble.m

    def start_points(self, indices):
        """Starting point for each trajectory index."""
        if isinstance(self.x0, dict):
            alpha = np.full(self.m, float(self.x0["dirichlet"]))
            return np.array([
                streams.trajectory_stream(self.seed, i, streams.INITIAL).dirichlet(alpha)
                for i in indices
            ])
        return np.broadcast_to(self.x0, (len(indices), self.m))


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def parse_point(spec, m, where):
    if spec == "barycenter":
        return np.full(m, 1.0 / m)
    try:
        x = validate(spec)
    except SimplexError as exc:
        raise ConfigError([f"{where}: {exc}"]) from None
    if x.size != m:
        raise ConfigError([f"{where}: has {x.size} coordinates, expected m={m}"])
    return x


def build_config(raw):
    """Validate a config dict and build a :class:`CampaignConfig`.

    Raises
    ------
    ConfigError
        Listing every schema violation, or the first cross-field violation.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError(f"{_path(e)}: {e.message}" for e in errors)
    m = raw["m"]
    problems = []
    ops = []
    for t, spec in enumerate(raw["ensemble"]):
        try:
            ops.append(operator_from_spec(spec, m=m))
        except VolterraError as exc:
            problems.append(f"ensemble.{t}: {exc}")
    if len(raw["nu"]) != len(raw["ensemble"]):
        problems.append(f"nu: has {len(raw['nu'])} weights for {len(raw['ensemble'])} operators")
    elif abs(sum(raw["nu"]) - 1.0) > 1e-12:
        problems.append(f"nu: weights sum to {sum(raw['nu'])!r}, not 1")
    if problems:
        raise ConfigError(problems)
    try:
        ensemble = OperatorEnsemble(ops, raw["nu"])
    except EnsembleError as exc:
        raise ConfigError([f"ensemble: {exc}"]) from None
    x0 = raw["x0"] if isinstance(raw["x0"], dict) else parse_point(raw["x0"], m, "x0")
    d = raw.get("d")
    if d is not None:
        try:
            derive_constants(ensemble, raw["epsilon"], d=d)
        except ValueError as exc:
            raise ConfigError([f"d: {exc}"]) from None
    det = raw.get("deterministic", {})
    if "x0" in det:
        parse_point(det["x0"], m, "deterministic.x0")
    if "operator" in det:
        try:
            operator_from_spec(det["operator"], m=m)
        except VolterraError as exc:
            raise ConfigError([f"deterministic.operator: {exc}"]) from None
    return CampaignConfig(
        ensemble=ensemble, x0=x0, epsilon=raw["epsilon"], horizon=raw["horizon"],
        trajectories=raw["trajectories"], seed=raw["seed"],
        delta=raw.get("delta", DEFAULT_DELTA), K=raw.get("K", DEFAULT_K), d=d, raw=raw,
    )


def load_config(path, seed=None):
    """Read and validate a JSON config file; `seed` overrides the file's seed."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<file>: invalid JSON: {exc}"]) from None
    if seed is not None and isinstance(raw, dict):
        raw["seed"] = int(seed)
    return build_config(raw)


@dataclass
class CampaignResult:
    """Per-trajectory outcomes in index order (vertices 0-based, -1 = none)."""

    config: CampaignConfig
    N: int
    verdict_vertex: np.ndarray
    absorption_step: np.ndarray
    hit_step: np.ndarray
    final_state: np.ndarray
    drift: DriftTally
    states: list = None

    @property
    def converged(self):
        return self.verdict_vertex >= 0

    @property
    def converged_fraction(self):
        return float(self.converged.mean())

    @property
    def per_vertex_counts(self):
        return np.bincount(self.verdict_vertex[self.converged], minlength=self.config.m)

    @property
    def median_absorption_step(self):
        steps = self.absorption_step[self.converged]
        return float(np.median(steps)) if steps.size else None

    def survival(self, steps):
        """Fraction of trajectories not yet in the neighborhood union at each of `steps`.

        Only multiples of ``N`` are inspected, matching the recorded hitting step.
        """
        h = self.hit_step
        return np.array([np.mean((h < 0) | (h > n)) for n in steps])

    def aggregate(self):
        return {
            "trajectories": int(self.verdict_vertex.size),
            "converged_fraction": self.converged_fraction,
            "per_vertex_counts": self.per_vertex_counts.tolist(),
            "median_absorption_step": self.median_absorption_step,
        }


def _run_chunk(cfg, ids, N, d, record):
    x0 = cfg.start_points(ids)
    u = streams.trajectory_uniforms(cfg.seed, ids, cfg.horizon)
    return simulate_batch(cfg.ensemble, x0, u, delta=cfg.delta, K=cfg.K, eps=cfg.epsilon, N=N,
                          d=d, record=record)


def run_campaign(cfg, threads=None, record=False):
    """Run all trajectories of `cfg`, optionally across `threads` workers."""
    const = derive_constants(cfg.ensemble, cfg.epsilon, d=cfg.d)
    d = const.d
    chunks = [range(lo, min(lo + CHUNK, cfg.trajectories)) for lo in range(0, cfg.trajectories, CHUNK)]
    threads = threads or os.cpu_count() or 1
    if threads == 1:
        parts = [_run_chunk(cfg, ids, const.N, d, record) for ids in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ids: _run_chunk(cfg, ids, const.N, d, record), chunks))
    tally = DriftTally.empty(cfg.m)
    for p in parts:
        tally = tally.merge(p.drift)
    return CampaignResult(
        config=cfg, N=const.N,
        verdict_vertex=np.concatenate([p.verdict_vertex for p in parts]),
        absorption_step=np.concatenate([p.absorption_step for p in parts]),
        hit_step=np.concatenate([p.hit_step for p in parts]),
        final_state=np.vstack([p.final_state for p in parts]),
        drift=tally,
        states=[p.states for p in parts] if record else None,
    )


def _atomic_write(path, write):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_summary_csv(result, path):
    """One row per trajectory; written to a temp file and renamed into place."""

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        finals = result.final_state.max(axis=1)
        for i in range(result.verdict_vertex.size):
            w.writerow([
                i,
                int(result.verdict_vertex[i]) + 1,
                int(result.absorption_step[i]),
                int(result.hit_step[i]),
                repr(float(finals[i])),
            ])

    _atomic_write(path, write)


def _finite_or_none(values):
    return [None if math.isinf(v) else v for v in values]


def write_series_jsonl(result, path):
    """One JSON record per trajectory step: state and log-coordinates (``null`` for -inf)."""
    if result.states is None:
        raise ValueError("campaign was run without record=True")

    def write(fh):
        i = 0
        with np.errstate(divide="ignore"):
            for block in result.states:
                for states in block:
                    Z = np.log(states)
                    for n in range(states.shape[0]):
                        rec = {"trajectory": i, "step": n, "state": states[n].tolist(),
                               "Z": _finite_or_none(Z[n].tolist())}
                        fh.write(json.dumps(rec) + "\n")
                    i += 1

    _atomic_write(path, write)


def drift_report(result):
    """Conditional log-drift below ``-d`` per coordinate, with its bounds."""
    cfg = result.config
    const = derive_constants(cfg.ensemble, cfg.epsilon, d=cfg.d)
    t = result.drift
    mean, se, second = t.mean, t.stderr, t.second_moment
    bound = -const.D + 3 * se
    second_bound = math.log(2.0) ** 2 + const.d**2
    ok = bool(np.all(t.count > 1) and np.all(mean <= bound) and np.all(second <= second_bound + 1e-12))
    return {
        "d": const.d,
        "D": const.D,
        "count": t.count.tolist(),
        "mean_increment": mean.tolist(),
        "stderr": se.tolist(),
        "bound": bound.tolist(),
        "second_moment": second.tolist(),
        "second_moment_bound": second_bound,
        "min_increment": t.min_increment,
        "max_increment": t.max_increment,
        "passed": ok,
    }

