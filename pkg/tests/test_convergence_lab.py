import math

import numpy as np
import pytest

from pidenet import rng as rngmod
from pidenet.convergence_lab import (
    SuiteConfig, csv_text, oracle_u, quadrature_study, read_csv, run_suite, weighted_l2_error,
    write_csv,
)
from pidenet.levy_sim import no_jumps, zero_jump
from pidenet.presets import get_preset
from pidenet.problem import ProblemSpec
from pidenet.reports import Check, ExperimentReport, Row, fit_rate


def test_fit_rate_exact_power_law():
    rows = [Row(n, n**-2.0, 1e-3 * n**-2.0, 1) for n in (8, 16, 32, 64)]
    slope, (lo, hi) = fit_rate(rows)
    assert slope == pytest.approx(-2.0, abs=1e-9)
    assert lo <= slope <= hi


def test_fit_rate_constant():
    slope, _ = fit_rate([Row(n, 0.3, 0.01, 1) for n in (1, 2, 4)])
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_noisy_inverse():
    gen = np.random.default_rng(0)
    ns = np.array([10, 20, 40, 80, 160])
    rows = [Row(n, (1 + 0.05 * gen.standard_normal()) / n, 0.05 / n, 1) for n in ns]
    slope, (lo, hi) = fit_rate(rows)
    assert lo <= -1.0 <= hi


def test_fit_rate_needs_two_points():
    slope, _ = fit_rate([Row(1, 1.0, 0.1, 1)])
    assert math.isnan(slope)


def test_report_sorts_rows_and_flags():
    rep = ExperimentReport("x", "N", [Row(4, 1.0, 0.1, 1), Row(2, 2.0, 0.1, 1)], -1.0, (-2, 0),
                           [Check("a", 1.0, 2.0), Check("b", 3.0, 2.0, hard=False)], 0.0)
    assert [r.knob for r in rep.rows] == [2, 4]
    assert not rep.passed
    assert rep.hard_failures == []


def test_streams_are_independent_and_reproducible():
    a = rngmod.stream(5, 1, 2).standard_normal(4)
    b = rngmod.stream(5, 1, 2).standard_normal(4)
    c = rngmod.stream(5, 2, 1).standard_normal(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert rngmod.derive_seed(5, 1) != rngmod.derive_seed(5, 2)
    assert 0 <= rngmod.derive_seed(5, 1) < 2**63


def test_oracle_closed_form_values():
    heat = get_preset("heat")
    ref = oracle_u(heat, 0.0, [[0.0]])
    assert ref.values[0] == pytest.approx(math.exp(-0.5))
    assert oracle_u(heat, 1.0, [[0.4]]).values[0] == pytest.approx(math.cos(0.4))


def test_brute_force_oracle_for_constant_source():
    # b = c0, g = 0 gives c0 (T - t) exactly, with zero spread
    problem = ProblemSpec(T=1.0, d=1, b=lambda t, x: np.full(len(x), 0.7),
                          g=lambda x: np.zeros(len(x)), jump=zero_jump(1), measure=no_jumps(1))
    ref = oracle_u(problem, np.array([0.0, 0.25]), [[0.0], [1.0]], paths=2000, chunk=500)
    assert np.allclose(ref.values, [0.7, 0.525])
    assert np.all(ref.stderr < 1e-12)


def test_brute_force_oracle_agrees_with_closed_form():
    problem = get_preset("jump_c2")
    t, x = np.array([0.0, 0.5]), np.array([[0.2], [-0.4]])
    exact = problem.analytic_u(t, x)
    problem.analytic_u = None
    ref = oracle_u(problem, t, x, paths=100_000)
    assert np.all(np.abs(ref.values - exact) < 4 * ref.stderr + 0.005)


def test_weighted_l2_error_offset():
    problem = get_preset("heat")
    exact = lambda tx: problem.analytic_u(tx[:, 0], tx[:, 1:])  # noqa: E731
    zero = weighted_l2_error(exact, problem, 500)
    assert zero.value == pytest.approx(0.0, abs=1e-12)
    off = weighted_l2_error(lambda tx: exact(tx) + 0.1, problem, 500)
    assert off.value == pytest.approx(math.sqrt(problem.T) * 0.1, rel=1e-9)


def test_quadrature_study_small():
    rep = quadrature_study(N_list=(4, 8, 16), ref_nodes=64, trials=2000)
    assert [r.knob for r in rep.rows] == [4, 8, 16]
    assert rep.slope < -1.5


def test_empty_and_single_suite(tmp_path):
    assert run_suite(SuiteConfig(studies=())) == []
    reps = run_suite(SuiteConfig(studies=("sqrtN",), out=str(tmp_path)))
    assert len(reps) == 1
    assert (tmp_path / "results.csv").exists()
    assert (tmp_path / "checks.csv").exists()


def test_csv_round_trip(tmp_path):
    rows = [Row(8, 0.1 / 3, 1e-17, 400), Row(16, 2.5e-310, math.inf, 400)]
    rep = ExperimentReport("demo study", "N", rows, -1.23456789, (-2.0, -0.5),
                           [Check("ok", 1, 2)], 0.1)
    empty = ExperimentReport("no rows", "M", [], math.nan, (math.nan, math.nan), [], 0.0)
    path = tmp_path / "r.csv"
    write_csv([rep, empty], path)
    back = read_csv(path)
    assert back["demo study"]["rows"] == rows
    assert back["demo study"]["slope"] == rep.slope
    assert back["demo study"]["slope_ci"] == rep.slope_ci
    assert path.read_text() == csv_text([rep, empty])


def test_plots_written(tmp_path):
    run_suite(SuiteConfig(studies=("sqrtN",), out=str(tmp_path)))
    pngs = list(tmp_path.glob("*.png"))
    assert pngs and pngs[0].read_bytes()[:4] == b"\x89PNG"
