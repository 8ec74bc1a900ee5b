"""Acceptance criteria 1-11.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts the criterion as stated.  Criteria 3-10 read the reports of one
shared run of the full suite; criterion 11 runs the suite a second time.
"""

import math
import time

import numpy as np
import pytest

from pidenet import parallel
from pidenet import rng as rngmod
from pidenet.convergence_lab import SuiteConfig, csv_text, end_to_end_study, run_suite
from pidenet.levy_sim import EulerGrid, sample_batch, simulate_path
from pidenet.net_builder import trajectory_nets
from pidenet.presets import CORE_PRESETS, get_preset
from pidenet.relu_net import compose, eval_net, linear_combine, random_net, size

SEED = 20240601


def record(log, key, ok, text):
    log[key] = f"criterion {key:>3}: {'PASS' if ok else 'FAIL'}  {text}"


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite_a")
    t0 = time.perf_counter()
    reports = run_suite(SuiteConfig("full", SEED, str(out)))
    return {r.key: r for r in reports}, out, time.perf_counter() - t0


def study_line(rep, extra=""):
    lo, hi = rep.slope_ci
    slope = f"slope {rep.slope:.3f} [{lo:.3f}, {hi:.3f}]" if math.isfinite(rep.slope) else ""
    bad = [c.label for c in rep.checks if not c.satisfied]
    tail = f"; failing: {'; '.join(bad)}" if bad else ""
    return f"{rep.name}: {slope}{extra} runtime {rep.runtime_s:.1f}s{tail}"


# ---------------------------------------------------------------- 1

def test_criterion_1_size_calculus(acceptance_log):
    t0 = time.perf_counter()
    gen = np.random.default_rng(SEED)
    worst_c = worst_l = 0.0
    size_bad = 0
    for _ in range(1000):
        d_in, d_mid, d_out = gen.integers(1, 5, size=3)
        inner = random_net(gen, [d_in, *gen.integers(1, 6, size=gen.integers(0, 3)), d_mid],
                           gen.uniform(0.3, 1.0))
        outer = random_net(gen, [d_mid, *gen.integers(1, 6, size=gen.integers(0, 3)), d_out],
                           gen.uniform(0.3, 1.0))
        net = compose(outer, inner)
        X = gen.standard_normal((8, d_in))
        want = eval_net(outer, eval_net(inner, X))
        rel = np.max(np.abs(eval_net(net, X) - want)) / (1 + np.max(np.abs(want)))
        worst_c = max(worst_c, rel)
        size_bad += size(net) > 2 * size(outer) + 2 * size(inner)
    for _ in range(1000):
        d_in, d_out, k = gen.integers(1, 4), gen.integers(1, 4), gen.integers(1, 5)
        nets = [random_net(gen, [d_in, *gen.integers(1, 6, size=gen.integers(0, 4)), d_out],
                           gen.uniform(0.3, 1.0)) for _ in range(k)]
        coeffs = gen.standard_normal(k)
        X = gen.standard_normal((8, d_in))
        want = sum(a * eval_net(n, X) for a, n in zip(coeffs, nets))
        got = eval_net(linear_combine(nets, coeffs), X)
        worst_l = max(worst_l, np.max(np.abs(got - want)) / (1 + np.max(np.abs(want))))
    runtime = time.perf_counter() - t0
    ok = worst_c <= 1e-9 and worst_l <= 1e-9 and size_bad == 0 and runtime < 30
    record(acceptance_log, "1", ok,
           f"compose max rel err {worst_c:.2e}, size-bound violations {size_bad}/1000; "
           f"linear_combine max rel err {worst_l:.2e} (tol 1e-9); runtime {runtime:.1f}s (< 30s)")
    assert ok


# ---------------------------------------------------------------- 2

def test_criterion_2_trajectory_nets(acceptance_log):
    t0 = time.perf_counter()
    N = 8
    worst = 0.0
    general_bad = flat_bad = flat_bias_bad = flat_total = 0
    n_noises = 0
    for p_i, name in enumerate(CORE_PRESETS):
        problem = get_preset(name)
        grid = EulerGrid(problem.T, N)
        phi_c = problem.coeff_net("c", (problem.T / N) ** (2 * problem.beta_c)).net
        flat = problem.jump.state_independent
        batch = sample_batch(grid, problem.measure, 25, SEED, (77, p_i), problem.d)
        gen = rngmod.stream(SEED, 78, p_i)
        for noise in batch.noises():
            n_noises += 1
            start = grid.nodes[int(gen.integers(0, N))]
            nets = trajectory_nets(noise, grid, phi_c, start, state_independent=flat)
            for x in 2.0 * gen.standard_normal((10, problem.d)):
                rec = simulate_path(start, x, grid, noise, phi_c)
                for tr in nets:
                    want = rec.values[tr.target_index]
                    err = np.max(np.abs(eval_net(tr.net, x) - want)) / (1 + np.linalg.norm(want))
                    worst = max(worst, err)
            for tr in nets:
                general_bad += tr.size > tr.general_bound
                if tr.flat_bound is not None:
                    flat_total += 1
                    flat_bad += tr.size > tr.flat_bound
                    flat_bias_bad += tr.size > tr.flat_bound + problem.d
    runtime = time.perf_counter() - t0
    ok = worst <= 1e-8 and general_bad == 0 and flat_bad == 0 and runtime < 60
    record(acceptance_log, "2", ok,
           f"{n_noises} noises x 10 probes: max err/(1+|X|) {worst:.2e} (tol 1e-8); "
           f"general bound violations {general_bad}; flat bound d + N N_T size(phi_c) "
           f"violations {flat_bad}/{flat_total} (with the d bias entries counted: "
           f"{flat_bias_bad}); runtime {runtime:.1f}s (< 60s)")
    assert worst <= 1e-8
    assert general_bad == 0
    assert flat_bad == 0
    assert runtime < 60


# ---------------------------------------------------------------- 3-9

def test_criterion_3_strong_rate(suite, acceptance_log):
    rep = suite[0]["strong"]
    ok = -2.6 <= rep.slope <= -1.4 and rep.runtime_s < 180
    record(acceptance_log, "3", ok, study_line(rep, " (band [-2.6, -1.4]),") + " (< 180s)")
    assert -2.6 <= rep.slope <= -1.4
    assert rep.runtime_s < 180


def test_criterion_4_quadrature(suite, acceptance_log):
    rep = suite[0]["quadrature"]
    ok = rep.passed and rep.runtime_s < 60
    record(acceptance_log, "4", ok, study_line(rep, ",") + " (< 60s)")
    assert rep.passed
    assert rep.runtime_s < 60


def test_criterion_5_disruption(suite, acceptance_log):
    rep = suite[0]["disruption"]
    target = -2 * 1.0 * 1.0 + 0.5
    ok = rep.slope <= target and rep.runtime_s < 120
    record(acceptance_log, "5", ok, study_line(rep, f" (<= {target}),") + " (< 120s)")
    assert rep.slope <= target
    assert rep.runtime_s < 120


def test_criterion_6_mc_variance(suite, acceptance_log):
    rep = suite[0]["mc_variance"]
    ok = abs(rep.slope + 1) <= 0.2 and rep.runtime_s < 120
    record(acceptance_log, "6", ok, study_line(rep, " (-1 +/- 0.2),") + " (< 120s)")
    assert abs(rep.slope + 1) <= 0.2
    assert rep.runtime_s < 120


def test_criterion_7_sqrtN(suite, acceptance_log):
    rep = suite[0]["sqrtN"]
    row = next(r for r in rep.rows if r.knob == 100)
    bound = 1.2 * 1.0 / 100
    ok = row.error <= bound and rep.runtime_s < 30
    record(acceptance_log, "7", ok,
           f"mean sq deviation at M=100 over 1000 batches {row.error:.5f} <= {bound:.5f}; "
           f"runtime {rep.runtime_s:.1f}s (< 30s)")
    assert row.error <= bound
    assert rep.runtime_s < 30


def test_criterion_8_jump_budget(suite, acceptance_log):
    checks = [c for rep in suite[0].values() for c in rep.checks if "jump budget" in c.label]
    bad = [c.label for c in checks if not c.satisfied]
    ok = bool(checks) and not bad and all(c.hard for c in checks)
    record(acceptance_log, "8", ok,
           f"{len(checks)} accepted batches across the suite, {len(bad)} over 4 M^2 T lam")
    assert checks and not bad


def test_criterion_9_equivalence(suite, acceptance_log):
    rep = suite[0]["equivalence"]
    worst = max(c.actual for c in rep.checks)
    ok = rep.passed and rep.runtime_s < 120
    record(acceptance_log, "9", ok,
           f"5 presets x 100 probes: max |net - estimator|/(1+|v|) {worst:.2e} (tol 1e-6); "
           f"runtime {rep.runtime_s:.1f}s (< 120s)")
    assert rep.passed
    assert rep.runtime_s < 120


# ---------------------------------------------------------------- 10

def test_criterion_10a_end_to_end_heat(suite, acceptance_log):
    rep = suite[0]["end_to_end"]
    errs = ", ".join(f"d={int(r.knob)}: {r.error:.4f} +/- {r.stderr:.4f}" for r in rep.rows)
    ok = rep.passed and rep.runtime_s < 300
    record(acceptance_log, "10a", ok,
           f"heat, delta=0.1: weighted L2 error {errs} (<= 0.1, stderr <= 0.01); "
           f"runtime {rep.runtime_s:.1f}s (< 300s)")
    assert [int(r.knob) for r in rep.rows] == [1, 3]
    assert rep.passed
    assert rep.runtime_s < 300


def test_criterion_10b_end_to_end_jump(acceptance_log):
    parts, ok = [], True
    for name in ("jump_c2", "jump_state"):
        rep = end_to_end_study(name, (1,), 0.1, 4000, SEED, oracle_paths=1_000_000,
                               oracle_samples=64)
        row = rep.rows[0]
        tol = next(c.bound for c in rep.checks if "weighted L2" in c.label)
        parts.append(f"{name}: {row.error:.4f} +/- {row.stderr:.4f} <= {tol:.4f} "
                     f"({rep.runtime_s:.0f}s)")
        ok = ok and rep.passed
    record(acceptance_log, "10b", ok, "jump presets vs reference, delta=0.1: " + "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 11

def test_criterion_11_determinism(suite, tmp_path, acceptance_log):
    reports_a, out_a, _ = suite
    saved = parallel.get_threads()
    parallel.set_threads(2)
    try:
        reports_b = run_suite(SuiteConfig("full", SEED, str(tmp_path)))
    finally:
        parallel.set_threads(saved)
    a = (out_a / "results.csv").read_bytes()
    b = (tmp_path / "results.csv").read_bytes()
    ok = a == b and a.decode() == csv_text(reports_b)
    record(acceptance_log, "11", ok,
           f"two full-suite runs (second with 2 threads): results.csv {len(a)} bytes, "
           f"{'byte-identical' if a == b else 'DIFFERENT'}")
    assert a == b
