"""Experiment harness: reference solutions, the weighted L2 metric and the rate studies."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .feynman_kac import EstimatorConfig, estimate_terminal, jump_budget_check, sqrtN_bound_check
from .levy_sim import (EulerGrid, coarsen_noise, run_scheme, sample_block, strong_error_study)
from .net_builder import build_phi, build_solution, select_noise_batch
from .presets import get_preset
from .reports import Check, ExperimentReport, Row, fit_rate

__all__ = ["ExperimentReport", "fit_rate", "oracle_u", "weighted_l2_error", "run_suite",
           "quadrature_study", "disruption_study", "mc_variance_study", "sqrtN_study",
           "equivalence_study", "end_to_end_study", "write_csv", "read_csv", "SuiteConfig"]


# ---------------------------------------------------------------- reference solution

@dataclass(frozen=True)
class OracleValues:
    values: np.ndarray
    stderr: np.ndarray
    paths: int


def oracle_u(problem, t, x, *, paths: int = 1_000_000, fine_steps: int = 64, seed: int = 0,
             chunk: int = 50_000) -> OracleValues:
    """Reference ``u(t, x)``: the closed form when registered, else brute-force Monte Carlo.

    The brute-force estimate runs the scheme with the exact coefficients on a
    ``fine_steps`` grid and averages ``g(X_T) + integral of b`` over ``paths``
    paths.  All probe points share the same noise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    if problem.analytic_u is not None:
        return OracleValues(np.asarray(problem.analytic_u(t, x), dtype=np.float64),
                            np.zeros(len(x)), 0)
    grid = EulerGrid(problem.T, fine_steps)
    d = problem.d
    n = len(x)
    # running mean and sum of squared deviations, merged chunk by chunk
    count = 0
    mean = np.zeros(n)
    m2 = np.zeros(n)
    n_chunks = -(-paths // chunk)
    for c in range(n_chunks):
        m = min(chunk, paths - c * chunk)
        batch = sample_block(grid, problem.measure, m, rngmod.stream(seed, rngmod.ORACLE, c), d)
        for i in range(n):
            acc = np.zeros((1, m))

            def on_step(k, s, ds, X, acc=acc):
                acc[:] += problem.b(np.full(m, s), X[0]).reshape(1, m) * ds

            _, X = run_scheme(batch, grid, float(t[i]), x[i], problem.jump,
                              on_step=None if problem.b_is_zero else on_step)
            tot = problem.g(X[0]) + acc[0]
            cm = math.fsum(tot) / m
            cm2 = math.fsum((tot - cm) ** 2)
            delta = cm - mean[i]
            mean[i] += delta * m / (count + m)
            m2[i] += cm2 + delta * delta * count * m / (count + m)
        count += m
    var = m2 / max(paths - 1, 1)
    return OracleValues(mean, np.sqrt(var / paths), paths)


@dataclass(frozen=True)
class L2Estimate:
    value: float
    stderr: float
    oracle_stderr: float
    samples: int


def error_samples(problem, samples: int, seed: int = 0):
    gen = rngmod.stream(seed, rngmod.ERROR_METRIC)
    t = gen.uniform(0.0, problem.T, samples)
    x = problem.weight.sample(gen, samples)
    return t, x


def weighted_l2_error(candidate, problem, samples: int, seed: int = 0,
                      oracle: OracleValues | None = None, **oracle_kw) -> L2Estimate:
    """Monte Carlo estimate of ``sqrt(integral_0^T integral |u - phi|^2 f dx dt)``.

    ``t`` is uniform on ``[0, T]`` and ``x ~ f``; ``candidate`` maps rows
    ``(t, x)`` to values.  The stderr comes from the delta method and
    ``oracle_stderr`` is the rms Monte Carlo error of the reference values.
    """
    t, x = error_samples(problem, samples, seed)
    ref = oracle if oracle is not None else oracle_u(problem, t, x, **oracle_kw)
    phi = np.asarray(candidate(np.column_stack([t, x])), dtype=np.float64).reshape(-1)
    sq = (ref.values - phi) ** 2
    T = problem.T
    m = float(np.mean(sq))
    value = math.sqrt(T * m)
    se_m = float(sq.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    stderr = T * se_m / (2 * value) if value > 0 else math.sqrt(T * se_m)
    oracle_se = math.sqrt(T * float(np.mean(ref.stderr**2)))
    return L2Estimate(value, stderr, oracle_se, samples)


# ---------------------------------------------------------------- studies

def quadrature_study(problem=None, N_list=(8, 16, 32, 64), ref_nodes: int = 512,
                     trials: int = 20_000, seed: int = 0, x=None, chunk: int = 5_000,
                     exponent: float | None = None) -> ExperimentReport:
    """Squared error of the rectangle rule for ``E integral b(s, X_s) ds`` on shared paths.

    The reference is the same rule on ``ref_nodes`` nodes.  Conformance:
    ``err(N) <= K N^-exponent`` with ``K`` fitted at the smallest ``N``; the
    default exponent is ``2 + min(beta, 2 alpha)``.
    """
    t0 = time.perf_counter()
    problem = problem or get_preset("smooth_source")
    d = problem.d
    x = np.zeros(d) if x is None else np.asarray(x, dtype=np.float64)
    if exponent is None:
        exponent = 2 + min(problem.beta, 2 * problem.alpha)
    N_list = sorted(N_list)
    if any(ref_nodes % n for n in N_list):
        raise ValueError("every N must divide the reference node count")
    grid = EulerGrid(problem.T, ref_nodes)
    dt = problem.T / ref_nodes
    diffs = {n: [] for n in N_list}
    for c in range(-(-trials // chunk)):
        m = min(chunk, trials - c * chunk)
        batch = sample_block(grid, problem.measure, m, rngmod.stream(seed, rngmod.STUDY, 4, c), d)
        _, path = run_scheme(batch, grid, 0.0, x, problem.jump, keep_path=True)
        nodes = grid.nodes
        bvals = np.column_stack([problem.b(np.full(m, nodes[k]), path[0, :, k])
                                 for k in range(ref_nodes)])
        ref = bvals.sum(axis=1) * dt
        for n in N_list:
            step = ref_nodes // n
            coarse = bvals[:, ::step].sum(axis=1) * (problem.T / n)
            diffs[n].append(coarse - ref)
    rows = []
    for n in N_list:
        dv = np.concatenate(diffs[n])
        mean = float(dv.mean())
        se = float(dv.std(ddof=1) / math.sqrt(len(dv)))
        rows.append(Row(n, mean**2, 2 * abs(mean) * se, len(dv)))
    slope, ci = fit_rate(rows)
    K = rows[0].error * rows[0].knob ** exponent
    checks = [Check(f"err(N={int(r.knob)}) <= K N^-{exponent:g}", r.error, K * r.knob ** -exponent)
              for r in rows[1:]]
    return ExperimentReport("quadrature conformance", "N", rows, slope, ci, checks,
                            time.perf_counter() - t0,
                            notes=f"reference {ref_nodes} nodes, K fitted at N={int(rows[0].knob)}")


def disruption_study(problem=None, N_list=(8, 16, 32, 64), trials: int = 40_000,
                     refinement: int = 16, seed: int = 0, x=None, chunk: int = 5_000,
                     tolerance: float = 0.5, use_nets: bool = True) -> ExperimentReport:
    """Squared gap between rectangle sums of ``b`` on reference paths and on coarse paths.

    Coarse paths use ``phi_c`` built to tolerance ``(T/N)^(2 beta_c)`` when
    ``use_nets``.  The reference grid is ``refinement`` times the finest N.
    Conformance: fitted slope ``<= -2 beta beta_c + tolerance``.
    """
    t0 = time.perf_counter()
    problem = problem or get_preset("jump_state")
    d = problem.d
    x = np.zeros(d) if x is None else np.asarray(x, dtype=np.float64)
    N_list = sorted(N_list)
    n_fine = refinement * N_list[-1]
    fine = EulerGrid(problem.T, n_fine)
    jumps = {}
    for n in N_list:
        if use_nets:
            jumps[n] = problem.coeff_net("c", (problem.T / n) ** (2 * problem.beta_c)).net
        else:
            jumps[n] = problem.jump
    diffs = {n: [] for n in N_list}
    for c in range(-(-trials // chunk)):
        m = min(chunk, trials - c * chunk)
        batch = sample_block(fine, problem.measure, m, rngmod.stream(seed, rngmod.STUDY, 5, c), d)
        _, path = run_scheme(batch, fine, 0.0, x, problem.jump, keep_path=True)
        for n in N_list:
            r = n_fine // n
            grid = EulerGrid(problem.T, n)
            nodes = grid.nodes
            ref = sum(problem.b(np.full(m, nodes[k]), path[0, :, k * r]) for k in range(n)) * (problem.T / n)
            _, cpath = run_scheme(coarsen_noise(batch, r), grid, 0.0, x, jumps[n], keep_path=True)
            approx = sum(problem.b(np.full(m, nodes[k]), cpath[0, :, k]) for k in range(n)) * (problem.T / n)
            diffs[n].append(ref - approx)
    rows = []
    for n in N_list:
        dv = np.concatenate(diffs[n])
        mean = float(dv.mean())
        se = float(dv.std(ddof=1) / math.sqrt(len(dv)))
        rows.append(Row(n, mean**2, 2 * abs(mean) * se, len(dv)))
    slope, ci = fit_rate(rows)
    target = -2 * problem.beta * problem.beta_c + tolerance
    checks = [Check("fitted slope <= -2 beta beta_c + tolerance", slope, target)]
    return ExperimentReport("disruption rate", "N", rows, slope, ci, checks,
                            time.perf_counter() - t0,
                            notes=f"reference {n_fine} steps, phi_c nets={use_nets}")


def mc_variance_study(problem=None, M_list=(100, 400, 1600), resamples: int = 200,
                      N_euler: int = 16, seed: int = 0, t: float = 0.0, x=None,
                      band: float = 0.2) -> ExperimentReport:
    """Variance of ``estimate_terminal`` across independent master seeds against ``M``."""
    t0 = time.perf_counter()
    problem = problem or get_preset("jump_c2")
    x = np.zeros(problem.d) if x is None else np.asarray(x, dtype=np.float64)
    rows = []
    for M in M_list:
        vals = np.array([
            estimate_terminal(t, x, problem,
                              EstimatorConfig(M, N_euler, master_seed=rngmod.derive_seed(seed, 6, M, r))).value
            for r in range(resamples)])
        var = float(vals.var(ddof=1))
        rows.append(Row(M, var, var * math.sqrt(2.0 / (resamples - 1)), M))
    slope, ci = fit_rate(rows)
    checks = [Check("slope >= -1 - band", -1 - band - slope, 0.0),
              Check("slope <= -1 + band", slope, -1 + band)]
    return ExperimentReport("MC variance scaling", "M", rows, slope, ci, checks,
                            time.perf_counter() - t0, notes=f"{resamples} resamples per M")


def sqrtN_study(lam_T: float = 1.0, M_list=(100, 400), repetitions: int = 1000,
                seed: int = 0, slack: float = 1.2) -> ExperimentReport:
    """Mean squared deviation of the batch mean of ``sqrt(N_T)`` against ``T lam / M``."""
    from .levy_sim import gaussian_measure
    t0 = time.perf_counter()
    measure = gaussian_measure(lam_T, 0.0, 1.0, 1)
    rows, checks = [], []
    for M in M_list:
        rep = sqrtN_bound_check(measure, 1.0, M, repetitions, seed, slack)
        rows.append(Row(M, rep.mean_sq_dev, rep.stderr, M))
        checks.append(Check(f"mean sq deviation (M={M}) <= {slack} T lam / M",
                            rep.mean_sq_dev, slack * rep.bound))
    slope, ci = fit_rate(rows)
    return ExperimentReport("sqrt(N_T) bound", "M", rows, slope, ci, checks,
                            time.perf_counter() - t0, notes=f"lam T = {lam_T}")


def equivalence_study(presets=("heat", "source", "smooth_source", "jump_c2", "jump_state"),
                      M: int = 8, N_euler: int = 8, probes: int = 100, seed: int = 0,
                      rtol: float = 1e-6) -> ExperimentReport:
    """Built phi1 / phi2 against the numeric estimators on the same batches."""
    from .feynman_kac import running_on_batch, terminal_on_batch
    t0 = time.perf_counter()
    rows, checks = [], []
    for pi, name in enumerate(presets):
        problem = get_preset(name)
        delta_c = (problem.T / N_euler) ** (2 * problem.beta_c)
        cfg = EstimatorConfig(M, N_euler, 0.05, 0.05, delta_c, rngmod.derive_seed(seed, 9, pi))
        sol = build_solution(problem, cfg, select=False)
        grid = cfg.grid(problem)
        gen = rngmod.stream(seed, rngmod.PROBES, pi)
        t = gen.uniform(0, problem.T, probes)
        x = problem.weight.sample(gen, probes)
        idx = sol.phi1.index(t)
        tx = np.column_stack([t, x])
        worst = 0.0
        for comp, fam in (("terminal", sol.phi1), ("running", sol.phi2)):
            net_vals = fam(tx)
            num = np.empty(probes)
            for j in np.unique(idx):
                rows_j = idx == j
                if comp == "terminal":
                    v = terminal_on_batch(sol.batches[comp], grid, grid.nodes[j], x[rows_j],
                                          sol.coeff_reports["c"].net, sol.coeff_reports["g"].net)
                elif problem.b_is_zero:
                    v = np.zeros((rows_j.sum(), 1))
                else:
                    v = running_on_batch(sol.batches[comp], grid, grid.nodes[j], x[rows_j],
                                         sol.coeff_reports["c"].net, sol.coeff_reports["b"].net)
                num[rows_j] = v.mean(axis=1)
            rel = np.abs(net_vals - num) / (1 + np.abs(num))
            worst = max(worst, float(rel.max()))
            checks.append(Check(f"{name} {comp}: max |net - estimator| / (1 + |estimator|)",
                                float(rel.max()), rtol))
        rows.append(Row(pi, worst, 0.0, M))
    return ExperimentReport("estimator-network equivalence", "preset", rows, math.nan,
                            (math.nan, math.nan), checks, time.perf_counter() - t0,
                            notes=",".join(presets))


def jump_budget_study(presets=("jump_c2", "jump_state"), M_list=(1, 25, 400), N_euler: int = 8,
                      seed: int = 0) -> ExperimentReport:
    """Every batch accepted by the selection loop satisfies the jump budget (hard)."""
    t0 = time.perf_counter()
    rows, checks = [], []
    for pi, name in enumerate(presets):
        problem = get_preset(name)
        for M in M_list:
            cfg = EstimatorConfig(M, N_euler, 0.05, 0.05, 0.0, rngmod.derive_seed(seed, 10, pi, M))
            sel = select_noise_batch(problem, cfg, "terminal", budget=math.inf)
            total = float(np.sum(sel.batch.counts))
            bound = 4.0 * M * M * problem.T * problem.lam
            checks.append(Check(f"{name} M={M}: sum N_T <= 4 M^2 T lam", total, bound, hard=True))
            rows.append(Row(M, total / bound, 0.0, M))
    return ExperimentReport("jump budget", "M", rows, math.nan, (math.nan, math.nan), checks,
                            time.perf_counter() - t0)


def end_to_end_study(preset: str = "heat", dims=(1, 3), delta: float = 0.1, samples: int = 4000,
                     seed: int = 0, oracle_paths: int = 1_000_000, oracle_samples: int = 64,
                     max_stderr: float = 0.01) -> ExperimentReport:
    """Weighted L2 error of the built network against the reference solution.

    Closed-form references use ``samples`` error samples; brute-force
    references use ``oracle_samples`` points with ``oracle_paths`` paths each,
    and the tolerance widens by three oracle standard errors.
    """
    t0 = time.perf_counter()
    rows, checks = [], []
    for d in dims:
        problem = get_preset(preset, d)
        sol = build_phi(problem, delta, master_seed=rngmod.derive_seed(seed, 11, d))
        n = samples if problem.analytic_u is not None else oracle_samples
        est = weighted_l2_error(sol.phi, problem, n, seed=rngmod.derive_seed(seed, 12, d),
                                paths=oracle_paths)
        rows.append(Row(d, est.value, est.stderr, sol.config.M))
        tol = delta + 3 * est.oracle_stderr
        checks.append(Check(f"{problem.name}: weighted L2 error <= delta + 3 oracle stderr",
                            est.value, tol))
        checks.append(Check(f"{problem.name}: metric stderr <= {max_stderr}", est.stderr, max_stderr))
        for c in sol.checks:
            if c.hard:
                checks.append(Check(f"{problem.name}: {c.label}", c.actual, c.bound, hard=True))
    return ExperimentReport(f"end-to-end ({preset})", "d", rows, math.nan, (math.nan, math.nan),
                            checks, time.perf_counter() - t0, notes=f"delta={delta}")


def strong_study(preset: str = "jump_state", N_list=(8, 16, 32, 64, 128, 256), trials: int = 10_000,
                 seed: int = 0, **kw) -> ExperimentReport:
    rep = strong_error_study(get_preset(preset), N_list, trials, seed=seed, **kw)
    rep.name = f"strong Euler rate ({preset})"
    return rep


# ---------------------------------------------------------------- suite

@dataclass
class SuiteConfig:
    scale: str = "quick"
    seed: int = 0
    out: str | None = None
    plots: bool = True
    studies: tuple | None = None
    include_jump_end_to_end: bool = False


def _suite_plan(scale: str, seed: int, include_jump: bool):
    full = scale == "full"
    plan = [
        ("strong", lambda: strong_study(
            "jump_state", (8, 16, 32, 64, 128, 256) if full else (8, 16, 32),
            10_000 if full else 1_000, seed)),
        ("strong_c2", lambda: strong_study(
            "jump_c2", (8, 16, 32, 64, 128, 256) if full else (8, 16, 32),
            10_000 if full else 1_000, seed, slope_band=(-2.6, -1.4))),
        ("quadrature", lambda: quadrature_study(
            trials=20_000 if full else 2_000, seed=seed)),
        ("disruption", lambda: disruption_study(
            trials=400_000 if full else 4_000, seed=seed)),
        ("mc_variance", lambda: mc_variance_study(
            M_list=(100, 400, 1600) if full else (50, 200), resamples=200 if full else 40,
            seed=seed)),
        ("sqrtN", lambda: sqrtN_study(repetitions=1000 if full else 200, seed=seed)),
        ("jump_budget", lambda: jump_budget_study(seed=seed,
                                                  M_list=(1, 25, 400) if full else (1, 25))),
        ("equivalence", lambda: equivalence_study(
            M=8 if full else 4, N_euler=8 if full else 4, probes=100 if full else 20, seed=seed)),
        ("end_to_end", lambda: end_to_end_study(
            "heat", (1, 3) if full else (1,), 0.1, 4000 if full else 1000, seed)),
    ]
    if include_jump:
        plan.append(("end_to_end_jump_c2", lambda: end_to_end_study(
            "jump_c2", (1,), 0.1, 4000, seed)))
        plan.append(("end_to_end_jump_state", lambda: end_to_end_study(
            "jump_state", (1,), 0.1, 4000, seed,
            oracle_paths=1_000_000 if full else 20_000, oracle_samples=64)))
    return plan


def run_suite(config: SuiteConfig | None = None) -> list[ExperimentReport]:
    """Run the registered studies and, when ``config.out`` is set, write CSV and plots."""
    config = config or SuiteConfig()
    plan = _suite_plan(config.scale, config.seed, config.include_jump_end_to_end)
    if config.studies is not None:
        wanted = set(config.studies)
        plan = [(k, f) for k, f in plan if k in wanted]
    reports = []
    for key, fn in plan:
        rep = fn()
        rep.key = key
        reports.append(rep)
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        write_csv(reports, os.path.join(config.out, "results.csv"))
        write_checks_csv(reports, os.path.join(config.out, "checks.csv"))
        if config.plots:
            from .plotting import plot_reports
            plot_reports(reports, config.out)
    return reports


# ---------------------------------------------------------------- CSV

CSV_COLUMNS = ("study", "knob_name", "knob", "M", "error", "stderr", "slope", "slope_lo",
               "slope_hi", "passed")


def _f(v: float) -> str:
    return repr(float(v))


def report_rows(reports) -> list[list[str]]:
    out = []
    for rep in reports:
        lo, hi = rep.slope_ci
        rows = rep.rows or [Row(math.nan, math.nan, math.nan, 0)]
        for r in rows:
            out.append([rep.name, rep.knob_name, _f(r.knob), str(int(r.M)), _f(r.error),
                        _f(r.stderr), _f(rep.slope), _f(lo), _f(hi), str(rep.passed)])
    return out


def write_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(report_rows(reports))


def write_checks_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("study", "label", "actual", "bound", "satisfied", "hard"))
        for rep in reports:
            for c in rep.checks:
                w.writerow((rep.name, c.label, _f(c.actual), _f(c.bound), str(c.satisfied),
                            str(c.hard)))


def read_csv(path) -> dict:
    """Parse a results file back into ``{study: [Row, ...]}`` plus slopes."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            entry = out.setdefault(rec["study"], {"knob_name": rec["knob_name"], "rows": [],
                                                  "slope": float(rec["slope"]),
                                                  "slope_ci": (float(rec["slope_lo"]),
                                                               float(rec["slope_hi"])),
                                                  "passed": rec["passed"] == "True"})
            entry["rows"].append(Row(float(rec["knob"]), float(rec["error"]),
                                     float(rec["stderr"]), int(rec["M"])))
    return out


def csv_text(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(report_rows(reports))
    return buf.getvalue()
