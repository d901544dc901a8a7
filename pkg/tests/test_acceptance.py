"""
Acceptance checks, one per criterion, each at its stated size and tolerance.

Every check prints a single ``PASS`` or ``FAIL`` line; the lines are also
repeated in the pytest terminal summary. Run standalone with

    python3 tests/test_acceptance.py
"""
import functools
import json
import math
import os
import subprocess
import sys
import tempfile
import time
from fractions import Fraction

import numpy as np
from scipy import stats

from rqso import streams
from rqso.attractor import TwoSidedEnvironment, check_point_attractor, evaluate_cocycle
from rqso.campaign import build_config, run_campaign
from rqso.drift import appendix_report, evaluate_f, evaluate_g
from rqso.dynamics import (OperatorEnsemble, derive_constants, estimate_block_success,
                           run_deterministic_trajectory, simulate_batch, start_grid)
from rqso.simplex import barycenter, vertex
from rqso.volterra import (VolterraOperator, apply_tensor, extremal_operator, matrix_from_tensor,
                           tensor_from_matrix, volterra_step)

RESULTS = []

CAMPAIGN = {
    "schema_version": 1,
    "m": 3,
    "ensemble": ["squaring:1", "squaring:2", "squaring:3"],
    "nu": [1 / 3, 1 / 3, 1 - 2 / 3],
    "x0": "barycenter",
    "epsilon": 0.01,
    "horizon": 500,
    "trajectories": 10_000,
    "seed": 2026,
    "delta": 1e-9,
    "K": 10,
}


def report(k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def cyclic_operator():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 2] = A[2, 0] = 1.0
    return VolterraOperator(A - A.T, label="cyclic")


@functools.lru_cache(maxsize=None)
def campaign():
    cfg = build_config(CAMPAIGN)
    t0 = time.perf_counter()
    res = run_campaign(cfg, threads=1)
    return res, time.perf_counter() - t0


def criterion_1():
    res, seconds = campaign()
    p = res.per_vertex_counts / res.verdict_vertex.size
    spread = float(p.max() - p.min())
    ok = res.converged_fraction >= 0.999 and spread <= 0.02 and seconds < 10
    return report(1, ok, f"converged_fraction={res.converged_fraction:.4f} (>= 0.999), "
                         f"vertex frequencies {np.round(p, 4).tolist()} max gap {spread:.4f} (<= 0.02), "
                         f"runtime {seconds:.1f}s on one thread (< 10s)")


def criterion_2():
    res, _ = campaign()
    steps = np.array([16, 24, 32, 40])
    surv = res.survival(steps)
    n = res.verdict_vertex.size
    logs = np.log(surv)
    se = np.sqrt((1 - surv) / (n * surv))
    decreasing = bool(np.all(np.diff(surv) < 0))
    # concave or linear: second differences not significantly positive
    second = logs[2:] - 2 * logs[1:-1] + logs[:-2]
    second_se = np.sqrt(se[2:] ** 2 + 4 * se[1:-1] ** 2 + se[:-2] ** 2)
    concave = bool(np.all(second <= 2 * second_se))
    fit = stats.linregress(steps, logs)
    t = stats.t.ppf(0.975, len(steps) - 2)
    upper = fit.slope + t * fit.stderr
    ok = decreasing and concave and upper < 0
    return report(2, ok, f"survival {np.round(surv, 4).tolist()} at n={steps.tolist()}, "
                         f"second differences of log {np.round(second, 3).tolist()}, "
                         f"slope {fit.slope:.4f} with 95% upper limit {upper:.4f} (< 0)")


def criterion_3():
    run = run_deterministic_trajectory(cyclic_operator(), [0.3, 0.3, 0.4], 100_000)
    low = run.first_below(1e-6)
    leaders = sorted(j + 1 for j in run.leaders)
    det_ok = run.verdict_vertex is None and low is not None and leaders == [1, 2, 3]
    verdict = ("none" if run.verdict_vertex is None
               else f"vertex {run.verdict_vertex + 1} at step {run.absorption_step}")

    ens = OperatorEnsemble.squaring(3, [0.3, 0.3, 0.3, 0.1], extra=[cyclic_operator()])
    n = 1000
    u = streams.trajectory_uniforms(CAMPAIGN["seed"], range(n), 2000)
    mixed = simulate_batch(ens, np.tile(barycenter(3), (n, 1)), u)
    frac = float(np.mean(mixed.verdict_vertex >= 0))
    ok = det_ok and frac >= 0.99
    return report(3, ok, f"cyclic orbit: verdict {verdict} (want none), min coordinate < 1e-6 first at "
                         f"step {low}, leaders {leaders}; mixed ensemble converged_fraction={frac:.4f} "
                         f"(>= 0.99)")


def criterion_4():
    ens = OperatorEnsemble.squaring(3)
    c = derive_constants(ens, 1e-3)
    consts_ok = (c.r, c.N) == (4, 8) and c.q_exact == Fraction(1, 3**12) and c.D > 0
    grid = start_grid(3, 4, include_barycenter=False)
    bs = estimate_block_success(ens, 1e-3, 100_000, seed=CAMPAIGN["seed"], points=grid)
    ok = consts_ok and len(grid) == 15 and bs.consistent
    return report(4, ok, f"r={c.r}, N={c.N}, q={c.q_exact} (3^-12: {c.q_exact == Fraction(1, 3**12)}), "
                         f"D={c.D:.3g}; {len(grid)} start points, lowest Wilson upper bound "
                         f"{bs.ci_high.min():.4f} vs q={c.q:.3g}")


def criterion_5():
    res, _ = campaign()
    cfg = res.config
    c = derive_constants(cfg.ensemble, cfg.epsilon)
    t = res.drift
    bound = -c.D + 3 * t.stderr
    second_bound = math.log(2) ** 2 + c.d**2 + 1e-12
    ok = bool(np.all(t.count > 1) and np.all(t.mean <= bound) and np.all(t.second_moment <= second_bound))
    return report(5, ok, f"conditional mean increment {np.round(t.mean, 4).tolist()} vs bound "
                         f"{np.round(bound, 4).tolist()} (counts {t.count.tolist()}), second moment "
                         f"{np.round(t.second_moment, 3).tolist()} <= {second_bound:.3f}")


def criterion_6():
    rep = appendix_report(A=0.5, B=1.0, a=0.0, theta=0.1, b=0.0, horizon=10_000, trials=10_000,
                          seed=CAMPAIGN["seed"])
    surv_ok = rep["survival_fraction"] >= 0.9 - 3 * rep["survival_se"]
    growth_ok = abs(rep["conditional_growth_mean"] - 0.5) <= 0.05
    escape_ok = rep["escape_freq"] <= rep["f"] + rep["g"] + 3 * rep["escape_se"]
    f_ref = evaluate_f(1, 0, 1)
    g_ref = evaluate_g(1, 0, 1)
    series_ok = abs(f_ref - math.pi**2 / 6) <= 1e-6 and abs(g_ref - 4.4920) <= 1e-3
    ok = surv_ok and growth_ok and escape_ok and series_ok
    return report(6, ok, f"S={rep['S']:.0f}; survival {rep['survival_fraction']:.4f} (>= 0.9 - 3se), "
                         f"mean (Y_h - Y_0)/h = {rep['conditional_growth_mean']:.4f} (0.5 +- 0.05; "
                         f"Y_h/h = {rep['conditional_ratio_mean']:.3f}), escape {rep['escape_freq']:.4f} "
                         f"<= f+g+3se = {rep['f'] + rep['g'] + 3 * rep['escape_se']:.4f}; "
                         f"f(1,0,1)-pi^2/6 = {f_ref - math.pi**2 / 6:.1e}, g(1,0,1) = {g_ref:.5f}")


def _skew(rng, m, extremal=False):
    U = rng.choice([-1.0, 1.0], size=(m, m)) if extremal else rng.uniform(-1, 1, size=(m, m))
    U = np.triu(U, 1)
    return U - U.T


def criterion_7():
    rng = np.random.default_rng(CAMPAIGN["seed"])
    worst_roundtrip = worst_apply = 0.0
    for _ in range(1000):
        m = int(rng.integers(2, 8))
        V = VolterraOperator(_skew(rng, m))
        p = tensor_from_matrix(V)
        worst_roundtrip = max(worst_roundtrip, float(np.abs(matrix_from_tensor(p).A - V.A).max()))
        x = rng.dirichlet(np.ones(m))
        y, _, _ = volterra_step(V.A, x)
        worst_apply = max(worst_apply, float(np.abs(y - apply_tensor(p, x)).max()))

    doubling = True
    for m in (2, 3, 4, 6, 8):
        A = np.stack([_skew(rng, m, extremal=bool(e)) for e in rng.integers(0, 2, 20_000)])
        x = rng.dirichlet(np.ones(m), size=20_000)
        y, _, _ = volterra_step(A, x)
        doubling &= bool(np.all(y <= 2 * x + 1e-12))

    fixed = zero_inv = True
    for _ in range(200):
        m = int(rng.integers(2, 8))
        V = VolterraOperator(_skew(rng, m, extremal=bool(rng.integers(2))))
        for i in range(m):
            fixed &= bool(np.array_equal(V(vertex(m, i)), vertex(m, i)))
        x = rng.dirichlet(np.ones(m))
        x[rng.random(m) < 0.4] = 0.0
        if x.sum() == 0:
            x[0] = 1.0
        x /= x.sum()
        y = V(x)
        zero_inv &= bool(np.array_equal(x == 0, y == 0))

    worst_cocycle = 0.0
    for _ in range(500):
        m = int(rng.integers(2, 6))
        ens = OperatorEnsemble.squaring(m, [0.9 / m] * m + [0.1],
                                        extra=[extremal_operator("1" * (m * (m - 1) // 2))])
        env = TwoSidedEnvironment(ens, int(rng.integers(2**31)))
        a, b = (int(v) for v in rng.integers(0, 40, size=2))
        shift = int(rng.integers(-60, 60))
        x = rng.dirichlet(np.ones(m))
        whole = evaluate_cocycle(env, a + b, shift, x)
        split = evaluate_cocycle(env, a, shift + b, evaluate_cocycle(env, b, shift, x))
        worst_cocycle = max(worst_cocycle, float(np.abs(whole - split).max()))

    ok = (worst_roundtrip <= 1e-15 and worst_apply <= 1e-12 and doubling and fixed and zero_inv
          and worst_cocycle <= 1e-12)
    return report(7, ok, f"roundtrip max err {worst_roundtrip:.1e}, apply vs tensor {worst_apply:.1e}, "
                         f"doubling on 1e5 pairs {doubling}, vertex fixed points {fixed}, "
                         f"zero-coordinate invariance {zero_inv}, cocycle max err {worst_cocycle:.1e}")


def criterion_8():
    rep = check_point_attractor(OperatorEnsemble.squaring(3), barycenter(3)[None], n_max=200, envs=200,
                                seed=CAMPAIGN["seed"], tolerance=1e-6, ks_n=50)
    ok = rep.fraction_converged >= 0.99 and rep.all_vertices_reached and rep.ks_pvalue >= 0.01
    return report(8, ok, f"fraction below 1e-6: {rep.fraction_converged:.3f} (>= 0.99), limit vertex counts "
                         f"{rep.per_vertex_hit_counts.tolist()}, KS p-value at n=50 {rep.ks_pvalue:.3f} "
                         f"(>= 0.01)")


def criterion_9():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "campaign.json")
        with open(path, "w") as fh:
            json.dump(CAMPAIGN, fh)
        blobs = []
        for k, threads in enumerate(["1", "1", "8"]):
            out = os.path.join(tmp, f"run{k}")
            subprocess.run([sys.executable, "-m", "rqso.cli", "simulate", "--config", path, "--out", out,
                            "--threads", threads], check=True, capture_output=True)
            with open(os.path.join(out, "summary.csv"), "rb") as fh:
                blobs.append(fh.read())
    ok = blobs[0] == blobs[1] == blobs[2]
    return report(9, ok, f"summary.csv ({len(blobs[0])} bytes) identical across two --threads 1 runs "
                         f"and a --threads 8 run: {ok}")


class TestAcceptance:
    def test_criterion_1_campaign(self):
        assert criterion_1()

    def test_criterion_2_exponential_rate(self):
        assert criterion_2()

    def test_criterion_3_deterministic_counterpoint(self):
        assert criterion_3()

    def test_criterion_4_constants_and_block_success(self):
        assert criterion_4()

    def test_criterion_5_conditional_drift(self):
        assert criterion_5()

    def test_criterion_6_escape_bound(self):
        assert criterion_6()

    def test_criterion_7_algebraic_invariants(self):
        assert criterion_7()

    def test_criterion_8_pullback_attractor(self):
        assert criterion_8()

    def test_criterion_9_reproducibility(self):
        assert criterion_9()


if __name__ == "__main__":
    checks = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
              criterion_8, criterion_9]
    results = [check() for check in checks]
    sys.exit(0 if all(results) else 1)
