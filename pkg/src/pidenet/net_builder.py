"""Turn frozen noise into explicit ReLU networks for the estimators.

For one noise realization the Euler path ``x -> Xbar_{s_i}`` is a ReLU net:
each step is the identity with the Gaussian increment in its bias plus one
copy of ``phi_c`` per event, with ``(s_k, mark)`` baked into an input
embedding, and steps are chained by composition.  Averaging ``phi_g`` (or
the ``phi_b`` rectangle sums) over a batch of such nets gives networks equal
to the Monte Carlo estimators on that batch.

A single net cannot carry the start time ``t`` through the first partial
step, so the solution net is a family of nets, one per grid node, and is
evaluated at the node nearest to ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import rng as rngmod
from .feynman_kac import (EstimatorConfig, ParameterPlan, choose_parameters,
                          expected_sqrt_poisson, jump_budget_check, running_on_batch,
                          terminal_on_batch)
from .levy_sim import EulerGrid, FrozenNoise, NoiseBatch, sample_batch
from .relu_net import (ReluNet, combine_padding_allowance, compose, constant_net,
                       dumps, eval_net, identity_net, lift_time, linear_combine,
                       pair_input_net, precompose_affine)
from .reports import Check


class BuildError(RuntimeError):
    """A stage of the network construction failed; the message names the stage."""


class BatchSelectionError(RuntimeError):
    def __init__(self, msg, best_batch, best_value):
        super().__init__(msg)
        self.best_batch = best_batch
        self.best_value = best_value


# ---------------------------------------------------------------- trajectory nets

@dataclass(frozen=True, eq=False)
class TrajectoryNet:
    net: ReluNet
    noise_ref: FrozenNoise
    target_index: int
    start_t: float
    n_events: int
    phi_c_size: int
    general_bound: float
    flat_bound: float | None

    @property
    def size(self) -> int:
        return self.net.size()

    @property
    def size_bound(self) -> float:
        return self.general_bound if self.flat_bound is None else self.flat_bound

    def checks(self) -> list[Check]:
        out = [Check(f"trajectory size <= 2^{self.target_index}(3d + N_T size(phi_c))",
                     self.size, self.general_bound, hard=True)]
        if self.flat_bound is not None:
            # the literal bound ignores the d bias entries of the shift; kept as a soft record
            out.append(Check("trajectory size <= d + N_euler N_T size(phi_c)",
                             self.size, self.flat_bound, hard=False))
            out.append(Check("trajectory size <= 2d + N_euler N_T size(phi_c)",
                             self.size, self.flat_bound + self.net.input_dim, hard=True))
        return out


def _x_columns_zero(phi_c: ReluNet, d: int) -> bool:
    w = phi_c.layers[0].weights.tocsc()[:, 1:1 + d]
    return np.count_nonzero(w.data) == 0


def _summand(phi_c: ReluNet, s: float, mark: np.ndarray, d: int) -> ReluNet:
    """``y -> phi_c(s, y, mark)`` through an input embedding."""
    m = len(mark)
    A = sp.vstack([sp.csr_matrix((1, d)), sp.identity(d, format="csr"),
                   sp.csr_matrix((m, d))], format="csr")
    b = np.concatenate([[s], np.zeros(d), mark])
    return precompose_affine(phi_c, A, b)


def _step_events(noise: FrozenNoise, bounds: np.ndarray):
    """Event indices grouped by step for events after ``bounds[0]``."""
    groups = [[] for _ in range(len(bounds) - 1)]
    for e, tau in enumerate(noise.event_times):
        if tau > bounds[0]:
            k = int(np.searchsorted(bounds, tau, "left")) - 1
            groups[k].append(e)
    return groups


def trajectory_nets(noise: FrozenNoise, grid: EulerGrid, phi_c: ReluNet, start_t: float,
                    upto: int | None = None, state_independent: bool = False,
                    mode: str = "shifted") -> list[TrajectoryNet]:
    """Nets for ``x -> Xbar_{s_i}`` for every boundary index ``i = 0 .. upto``.

    With ``state_independent`` each net is built as one flat linear
    combination; this needs ``phi_c`` to have structurally zero state columns.
    """
    d = noise.gaussians.shape[1]
    m = noise.marks.shape[1] if noise.marks.ndim == 2 else len(noise.mean_mark)
    if phi_c.input_dim != 1 + d + m or phi_c.output_dim != d:
        raise ValueError(f"phi_c must map R^{1 + d + m} to R^{d}; got "
                         f"{phi_c.input_dim} -> {phi_c.output_dim}")
    if mode != "shifted":
        raise ValueError("trajectory nets implement the shifted-mark scheme only")
    if state_independent and not _x_columns_zero(phi_c, d):
        raise ValueError("the flat construction needs phi_c with zero state columns")
    bounds = grid.boundaries(start_t)
    K = len(bounds) - 1 if upto is None else int(upto)
    if not 0 <= K <= len(bounds) - 1:
        raise ValueError("target index outside the executed steps")
    groups = _step_events(noise, bounds)
    S = phi_c.size()
    N_T = noise.n_events
    marks = noise.marks - noise.mean_mark

    def wrap(net, i):
        flat = d + grid.n_steps * N_T * S if state_independent else None
        return TrajectoryNet(net, noise, i, float(bounds[0]), N_T, S,
                             2.0**i * (3 * d + N_T * S), flat)

    out = [wrap(identity_net(d), 0)]
    if state_independent:
        parts, coeffs = [], []
        shift = np.zeros(d)
        for k in range(K):
            shift = shift + noise.gaussians[k] * math.sqrt(bounds[k + 1] - bounds[k])
            for e in groups[k]:
                parts.append(_summand(phi_c, bounds[k], marks[e], d))
                coeffs.append(1.0)
            out.append(wrap(linear_combine([identity_net(d, shift)] + parts,
                                           [1.0] + coeffs), k + 1))
        return out

    net = out[0].net
    for k in range(K):
        inc = noise.gaussians[k] * math.sqrt(bounds[k + 1] - bounds[k])
        summands = [_summand(phi_c, bounds[k], marks[e], d) for e in groups[k]]
        step = identity_net(d, inc)
        if summands:
            step = linear_combine([step] + summands, [1.0] * (1 + len(summands)))
        net = compose(step, net)
        out.append(wrap(net, k + 1))
    return out


def trajectory_net(noise: FrozenNoise, grid: EulerGrid, phi_c: ReluNet, start_t: float,
                   target_index: int | None = None, state_independent: bool = False) -> TrajectoryNet:
    """Net for ``x -> Xbar_{s_i}`` with ``i = target_index`` (default: the last boundary)."""
    return trajectory_nets(noise, grid, phi_c, start_t, target_index, state_independent)[-1]


# ---------------------------------------------------------------- (t, x) families

@dataclass(eq=False)
class TimeGridNet:
    """One ReLU net of ``(t, x)`` per grid node, evaluated at the node nearest to ``t``."""

    nodes: np.ndarray
    members: list

    def index(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return np.abs(t[..., None] - self.nodes).argmin(axis=-1)

    @property
    def input_dim(self) -> int:
        return self.members[0].input_dim

    def __call__(self, tx) -> np.ndarray:
        tx = np.asarray(tx, dtype=np.float64)
        single = tx.ndim == 1
        tx2 = tx.reshape(1, -1) if single else tx
        idx = self.index(tx2[:, 0])
        out = np.empty(len(tx2))
        for j in np.unique(idx):
            rows = idx == j
            out[rows] = eval_net(self.members[j], tx2[rows]).reshape(-1)
        return out[0] if single else out

    def size(self) -> int:
        return sum(m.size() for m in self.members)

    def member_sizes(self) -> list[int]:
        return [m.size() for m in self.members]

    def dumps(self) -> str:
        head = ["pidenet-time-grid 1", f"nodes {len(self.nodes)}",
                " ".join(float(t).hex() for t in self.nodes)]
        return "\n".join(head) + "\n" + "".join(
            f"member {j}\n" + dumps(m) for j, m in enumerate(self.members))


def combine_time_grid(a: TimeGridNet, b: TimeGridNet) -> tuple[TimeGridNet, list[Check]]:
    if not np.array_equal(a.nodes, b.nodes):
        raise ValueError("time grids differ")
    members, checks = [], []
    for j, (ma, mb) in enumerate(zip(a.members, b.members)):
        net = linear_combine([ma, mb], [1.0, 1.0])
        members.append(net)
        bound = ma.size() + mb.size() + combine_padding_allowance([ma, mb])
        checks.append(Check(f"size(phi) <= size(phi1) + size(phi2) + allowance @node {j}",
                            net.size(), bound))
    return TimeGridNet(a.nodes, members), checks


@dataclass
class ComponentNet:
    net: TimeGridNet
    checks: list
    trajectory_stats: dict


def _trajectory_checks(trajs, stats: dict) -> None:
    for tr in trajs:
        ratio = tr.size / tr.general_bound
        stats["general_max_ratio"] = max(stats.get("general_max_ratio", 0.0), ratio)
        stats["general_violations"] = stats.get("general_violations", 0) + (ratio > 1)
        if tr.flat_bound is not None:
            bad = tr.size > tr.flat_bound
            stats["flat_max_ratio"] = max(stats.get("flat_max_ratio", 0.0),
                                          tr.size / tr.flat_bound)
            stats["flat_violations"] = stats.get("flat_violations", 0) + bad
            if bad and tr.n_events == 0:
                stats["flat_violations_no_events"] = stats.get("flat_violations_no_events", 0) + 1
            stats["flat_bias_violations"] = (stats.get("flat_bias_violations", 0)
                                             + (tr.size > tr.flat_bound + tr.net.input_dim))
        stats["trajectory_nets"] = stats.get("trajectory_nets", 0) + 1


def _stats_checks(stats: dict) -> list[Check]:
    out = [Check("trajectory nets over the general size bound", stats.get("general_violations", 0),
                 0, hard=True)]
    if "flat_violations" in stats:
        out.append(Check("trajectory nets over the flat (state-independent) size bound",
                         stats["flat_violations"], 0, hard=False))
        out.append(Check("trajectory nets over the flat bound with bias entries counted",
                         stats["flat_bias_violations"], 0, hard=True))
    return out


def build_phi1(problem, config: EstimatorConfig, batch: NoiseBatch, phi_g: ReluNet,
               phi_c: ReluNet, start_nodes: np.ndarray | None = None) -> ComponentNet:
    """Net family equal to ``(1/M) sum_i phi_g(Xbar_T(omega_i))`` at each start node."""
    grid = config.grid(problem)
    nodes = grid.nodes if start_nodes is None else np.asarray(start_nodes)
    M = batch.n_trials
    flat = problem.jump.state_independent
    noises = batch.noises()
    members, checks, stats = [], [], {}
    for j, t0 in enumerate(nodes):
        parts, s_x = [], 0
        for nz in noises:
            tr = trajectory_net(nz, grid, phi_c, t0, state_independent=flat)
            _trajectory_checks([tr], stats)
            s_x = max(s_x, tr.size)
            parts.append(compose(phi_g, tr.net))
        net = linear_combine(parts, [1.0 / M] * M)
        bound = 2 * M * (phi_g.size() + s_x)
        checks.append(Check(f"size(phi1) <= 2M(size(phi_g) + size(phi_X)) @node {j}",
                            net.size(), bound))
        members.append(lift_time(net))
    return ComponentNet(TimeGridNet(nodes, members), checks + _stats_checks(stats), stats)


def build_phi2(problem, config: EstimatorConfig, batch: NoiseBatch, phi_b: ReluNet,
               phi_c: ReluNet, start_nodes: np.ndarray | None = None) -> ComponentNet:
    """Net family equal to ``(1/M) sum_j sum_i phi_b(t_i, Xbar_{t_i}(omega_j)) dt_i``."""
    grid = config.grid(problem)
    nodes = grid.nodes if start_nodes is None else np.asarray(start_nodes)
    M = batch.n_trials
    d = problem.d
    flat = problem.jump.state_independent
    pb = pair_input_net(phi_b)
    noises = batch.noises()
    members, checks, stats = [], [], {}
    for j, t0 in enumerate(nodes):
        bounds = grid.boundaries(t0)
        K = len(bounds) - 1
        if K == 0:
            members.append(lift_time(constant_net(d, [0.0])))
            checks.append(Check(f"size(phi2) <= N M 2(size(phi_b) + size(phi_X)) @node {j}", 0, 0))
            continue
        slices = [pb.slice(s) for s in bounds[:-1]]
        widths = np.diff(bounds)
        parts, coeffs, s_x = [], [], 0
        for nz in noises:
            taps = trajectory_nets(nz, grid, phi_c, t0, K - 1, state_independent=flat)
            _trajectory_checks(taps, stats)
            for k, tr in enumerate(taps):
                s_x = max(s_x, tr.size)
                parts.append(compose(slices[k], tr.net))
                coeffs.append(widths[k] / M)
        net = linear_combine(parts, coeffs)
        bound = grid.n_steps * M * 2 * (phi_b.size() + s_x)
        checks.append(Check(f"size(phi2) <= N M 2(size(phi_b) + size(phi_X)) @node {j}",
                            net.size(), bound))
        members.append(lift_time(net))
    return ComponentNet(TimeGridNet(nodes, members), checks + _stats_checks(stats), stats)


# ---------------------------------------------------------------- batch selection

@dataclass
class SelectedBatch:
    batch: NoiseBatch
    attempt: int
    criterion: float
    budget: float
    history: list


def selection_probes(problem, master_seed: int, n: int = 64):
    gen = rngmod.stream(master_seed, rngmod.PROBES)
    t = gen.uniform(0.0, problem.T, n)
    x = problem.weight.sample(gen, n)
    return t, x


def _component_values(problem, config, batch, grid, component, t_nodes, x, idx):
    """Estimator values on ``batch`` at probes grouped by snapped start node."""
    out = np.empty(len(x))
    for j in np.unique(idx):
        rows = idx == j
        if component == "terminal":
            vals = terminal_on_batch(batch, grid, t_nodes[j], x[rows], problem.jump, problem.g,
                                     config.mode)
        else:
            vals = running_on_batch(batch, grid, t_nodes[j], x[rows], problem.jump, problem.b,
                                    config.mode)
        out[rows] = vals.mean(axis=1)
    return out


def _reference_values(problem, config, grid, component, t_nodes, x, idx, ref_factor):
    ref = problem.terminal_ref if component == "terminal" else problem.running_ref
    ts = t_nodes[idx]
    if ref is not None:
        return np.asarray(ref(ts, x), dtype=np.float64)
    tag = rngmod.TERMINAL if component == "terminal" else rngmod.RUNNING
    big = sample_batch(grid, problem.measure, ref_factor * config.M, config.master_seed,
                       (rngmod.ORACLE, tag), problem.d)
    return _component_values(problem, config, big, grid, component, t_nodes, x, idx)


def selection_criterion(problem, config, batch, component, probes, reference=None,
                        ref_factor: int = 16) -> float:
    """``T * mean over probes of (estimate - reference)^2 + (E sqrt(N_T) - mean sqrt(N_T(i)))^2``."""
    grid = config.grid(problem)
    t, x = probes
    nodes = grid.nodes
    idx = np.abs(t[:, None] - nodes).argmin(axis=1)
    if reference is None:
        reference = _reference_values(problem, config, grid, component, nodes, x, idx, ref_factor)
    est = _component_values(problem, config, batch, grid, component, nodes, x, idx)
    l2 = problem.T * float(np.mean((est - reference) ** 2))
    mu = problem.lam * problem.T
    jump_term = (expected_sqrt_poisson(mu) - float(np.mean(np.sqrt(batch.counts)))) ** 2
    return l2 + jump_term


def select_noise_batch(problem, config: EstimatorConfig, component: str = "terminal",
                       budget: float | None = None, delta_bar: float | None = None,
                       max_retries: int = 20, n_probes: int = 64,
                       ref_factor: int = 16) -> SelectedBatch:
    """Draw batches until the composite criterion is within ``budget``.

    The default budget is ``delta_bar^2 + T lam / M``.  Accepted batches
    also satisfy the jump budget.  Raises BatchSelectionError carrying the
    best batch when ``max_retries`` attempts all fail.
    """
    if component not in ("terminal", "running"):
        raise ValueError("component must be 'terminal' or 'running'")
    tag = rngmod.TERMINAL if component == "terminal" else rngmod.RUNNING
    grid = config.grid(problem)
    if budget is None:
        if delta_bar is None:
            delta_bar = config.delta_g if component == "terminal" else config.delta_b
        budget = delta_bar**2 + problem.T * problem.lam / config.M
    if budget <= 0:
        raise ValueError("criterion budget must be positive")

    trivial = math.isinf(budget) or (component == "running" and problem.b_is_zero)
    probes = selection_probes(problem, config.master_seed, n_probes)
    reference = None
    history = []
    best = (math.inf, None, -1)
    for attempt in range(max_retries):
        batch = sample_batch(grid, problem.measure, config.M, config.master_seed,
                             (tag, attempt), problem.d)
        if trivial:
            value = 0.0 if component == "running" and problem.b_is_zero else math.nan
        else:
            if reference is None:
                t, x = probes
                idx = np.abs(t[:, None] - grid.nodes).argmin(axis=1)
                reference = _reference_values(problem, config, grid, component, grid.nodes,
                                              x, idx, ref_factor)
            value = selection_criterion(problem, config, batch, component, probes, reference)
        within = jump_budget_check(batch.counts, problem.T, problem.lam)
        history.append((attempt, value, within))
        ok = within and (trivial or value <= budget)
        if ok:
            return SelectedBatch(batch, attempt, value, budget, history)
        if within and (math.isnan(value) or value < best[0]):
            best = (value, batch, attempt)
    raise BatchSelectionError(
        f"no batch met the criterion budget {budget:g} in {max_retries} attempts "
        f"(best {best[0]:g})", best[1], best[0])


# ---------------------------------------------------------------- the full construction

@dataclass
class SolutionNet:
    phi1: TimeGridNet
    phi2: TimeGridNet
    phi: TimeGridNet
    plan: ParameterPlan | None
    config: EstimatorConfig
    batch_seeds: dict
    batches: dict
    coeff_reports: dict
    checks: list
    selection: dict = field(default_factory=dict)
    trajectory_stats: dict = field(default_factory=dict)

    def __call__(self, tx):
        return self.phi(tx)

    @property
    def hard_failures(self) -> list:
        return [c for c in self.checks if c.hard and not c.satisfied]

    def size_lines(self) -> list[str]:
        return [f"{'ok ' if c.satisfied else 'BAD'} {c.label}: {c.actual:g} <= {c.bound:g}"
                for c in self.checks]

    def manifest(self) -> dict:
        cfg = self.config
        return {
            "config": {"M": cfg.M, "N_euler": cfg.N_euler, "delta_b": cfg.delta_b,
                       "delta_g": cfg.delta_g, "delta_c": cfg.delta_c,
                       "master_seed": cfg.master_seed, "mode": cfg.mode},
            "plan": None if self.plan is None else self.plan.lines(),
            "batch_seeds": {k: list(v) for k, v in self.batch_seeds.items()},
            "selection": self.selection,
            "coefficient_nets": {k: r.record() for k, r in self.coeff_reports.items()},
            "sizes": {"phi1": self.phi1.size(), "phi2": self.phi2.size(),
                      "phi": self.phi.size(), "phi_max_member": max(self.phi.member_sizes())},
            "trajectory_stats": {k: {kk: float(vv) for kk, vv in v.items()}
                                 for k, v in self.trajectory_stats.items()},
            "time_input": "nearest start-time node",
            "checks": [{"label": c.label, "actual": float(c.actual), "bound": float(c.bound),
                        "satisfied": c.satisfied, "hard": c.hard} for c in self.checks],
        }


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (BuildError, BatchSelectionError):
        raise
    except Exception as exc:
        raise BuildError(f"{name}: {exc}") from exc


def build_solution(problem, config: EstimatorConfig, plan: ParameterPlan | None = None, *,
                   select: bool = True, budgets: dict | None = None,
                   max_retries: int = 20) -> SolutionNet:
    """Build ``phi = phi1 + phi2`` for an explicit estimator configuration."""
    budgets = budgets or {}
    reports = {
        "g": _stage("coefficient net phi_g", problem.coeff_net, "g", config.delta_g),
        "b": _stage("coefficient net phi_b", problem.coeff_net, "b", config.delta_b),
        "c": _stage("coefficient net phi_c", problem.coeff_net, "c", config.delta_c),
    }
    for key, rep in reports.items():
        if not rep.accepted:
            raise BuildError(f"coefficient net phi_{key}: tolerance {rep.tolerance_measured:g} "
                             f"misses target {rep.tolerance_target:g}")
    _stage("estimator configuration", config.check, problem)
    grid = config.grid(problem)
    selection, batches, checks = {}, {}, []
    for comp in ("terminal", "running"):
        if select:
            sel = _stage(f"noise selection ({comp})", select_noise_batch, problem, config, comp,
                         budgets.get(comp), max_retries=max_retries)
            batches[comp] = sel.batch
            selection[comp] = {"attempt": sel.attempt, "criterion": sel.criterion,
                               "budget": sel.budget}
        else:
            tag = rngmod.TERMINAL if comp == "terminal" else rngmod.RUNNING
            batches[comp] = sample_batch(grid, problem.measure, config.M, config.master_seed,
                                         (tag, 0), problem.d)
        ok = jump_budget_check(batches[comp].counts, problem.T, problem.lam)
        checks.append(Check(f"jump budget ({comp} batch)", float(np.sum(batches[comp].counts)),
                            4.0 * config.M**2 * problem.T * problem.lam, hard=True))
        assert ok == checks[-1].satisfied
    c1 = _stage("phi1 assembly", build_phi1, problem, config, batches["terminal"],
                reports["g"].net, reports["c"].net)
    if problem.b_is_zero:
        zero = lift_time(constant_net(problem.d, [0.0]))
        c2 = ComponentNet(TimeGridNet(grid.nodes, [zero] * len(grid.nodes)), [], {})
    else:
        c2 = _stage("phi2 assembly", build_phi2, problem, config, batches["running"],
                    reports["b"].net, reports["c"].net)
    phi, sum_checks = _stage("phi = phi1 + phi2", combine_time_grid, c1.net, c2.net)
    checks += c1.checks + c2.checks + sum_checks
    return SolutionNet(c1.net, c2.net, phi, plan, config,
                       {k: b.seeds for k, b in batches.items()}, batches, reports, checks,
                       selection, {"phi1": c1.trajectory_stats, "phi2": c2.trajectory_stats})


def build_phi(problem, delta: float, master_seed: int = 0, **kw) -> SolutionNet:
    """Run the parameter rules for ``delta`` and build the solution network."""
    plan = _stage("parameter plan", choose_parameters, delta, problem)
    return build_solution(problem, plan.config(master_seed), plan, **kw)
