"""Frozen noise and the Euler scheme for the jump diffusion.

The scheme advances ``X`` over each interval ``(s_k, s_{k+1}]`` of the time
grid (the first interval starts at the initial time ``t``) as

    X_{s_{k+1}} = X_{s_k} + Z_k sqrt(s_{k+1} - s_k)
                  + sum over events tau in (s_k, s_{k+1}] of c(s_k, X_{s_k}, rho - E_z)

where ``E_z = integral of z nu(dz)``.  All simulation routines vectorize over
a batch of trials and over a set of starting points sharing the same noise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as rngmod
from .parallel import map_ordered
from .relu_net import ReluNet, eval_net
from .reports import Check, ExperimentReport, Row, fit_rate

MarkSampler = Callable[[np.random.Generator, int], np.ndarray]


# ---------------------------------------------------------------- measures

@dataclass(frozen=True, eq=False)
class LevyMeasure:
    """Finite Levy measure ``nu = lam * (mark law)``.

    ``mean_mark`` is ``integral of z nu(dz) = lam * E[rho]`` and
    ``mark_second_moment`` is ``integral of |z|^2 nu(dz)``.
    """

    lam: float
    mark_dim: int
    sampler: MarkSampler
    mean_mark: np.ndarray
    mark_second_moment: float
    label: str = ""

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("jump intensity must be non-negative")
        mean = np.asarray(self.mean_mark, dtype=np.float64).reshape(-1)
        if mean.shape != (self.mark_dim,):
            raise ValueError("mean_mark must have length mark_dim")
        object.__setattr__(self, "mean_mark", mean)

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n == 0:
            return np.empty((0, self.mark_dim))
        out = np.asarray(self.sampler(rng, n), dtype=np.float64)
        return out.reshape(n, self.mark_dim)


def gaussian_measure(lam: float, mean, std: float, dim: int) -> LevyMeasure:
    """Intensity ``lam`` with iid ``N(mean, std^2)`` mark coordinates."""
    mean_vec = np.broadcast_to(np.asarray(mean, dtype=np.float64), (dim,)).copy()

    def sampler(rng, n):
        return mean_vec + std * rng.standard_normal((n, dim))

    second = lam * (float(mean_vec @ mean_vec) + dim * std**2)
    return LevyMeasure(lam, dim, sampler, lam * mean_vec, second,
                       label=f"gaussian(lam={lam}, mean={mean}, std={std})")


def no_jumps(dim: int) -> LevyMeasure:
    return LevyMeasure(0.0, dim, lambda rng, n: np.zeros((n, dim)), np.zeros(dim), 0.0,
                       label="none")


JumpFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class JumpCoefficient:
    """Jump coefficient ``c(t, x, z)`` with its class constants.

    ``c`` takes ``t`` of shape (n,), ``x`` of shape (n, d), ``z`` of shape
    (n, m) and returns (n, d).  ``compensator(t, x)`` optionally returns
    ``integral of c(t, x, z) nu(dz)`` for the unshifted-mark variant.
    """

    c: JumpFn
    K_c: float
    L_c: float
    beta_c: float
    q: float = 4.0
    state_independent: bool = False
    compensator: Callable | None = None

    def __post_init__(self):
        if not 0 < self.beta_c <= 1:
            raise ValueError("beta_c must lie in (0, 1]")
        if self.q <= 2:
            raise ValueError("q must exceed 2")

    def __call__(self, t, x, z):
        return self.c(t, x, z)


def zero_jump(d: int) -> JumpCoefficient:
    return JumpCoefficient(lambda t, x, z: np.zeros_like(x), 1.0, 1.0, 1.0,
                           state_independent=True,
                           compensator=lambda t, x: np.zeros_like(x))


def check_state_independent(jump: JumpCoefficient, d: int, m: int, T: float,
                            rng: np.random.Generator, n: int = 64) -> bool:
    """Spot-check ``c(t, x, z) == c(t, 0, z)`` on random triples."""
    t = rng.uniform(0, T, n)
    x = 3.0 * rng.standard_normal((n, d))
    z = rng.standard_normal((n, m))
    return bool(np.allclose(jump.c(t, x, z), jump.c(t, np.zeros_like(x), z),
                            rtol=1e-12, atol=1e-12))


def as_jump_fn(jump) -> JumpFn:
    """Accept a JumpCoefficient, a ReluNet on ``(t, x, z)`` or a plain callable."""
    if isinstance(jump, JumpCoefficient):
        return jump.c
    if isinstance(jump, ReluNet):
        def net_fn(t, x, z, _net=jump):
            return eval_net(_net, np.column_stack([t, x, z]))
        return net_fn
    if callable(jump):
        return jump
    raise TypeError(f"cannot use {type(jump).__name__} as a jump coefficient")


# ---------------------------------------------------------------- grids and noise

@dataclass(frozen=True)
class EulerGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.n_steps < 1:
            raise ValueError("the grid needs at least one step")

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * (self.T / self.n_steps)

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def refine(self, factor: int) -> "EulerGrid":
        return EulerGrid(self.T, self.n_steps * int(factor))

    def is_refinement_of(self, coarse: "EulerGrid") -> bool:
        return self.T == coarse.T and self.n_steps % coarse.n_steps == 0

    def boundaries(self, t: float) -> np.ndarray:
        """``[t, first node after t, ..., T]``; ``t`` snaps to a node within 1e-12 T."""
        if t < -1e-12 * self.T or t > self.T * (1 + 1e-12):
            raise ValueError(f"start time {t} outside [0, {self.T}]")
        nodes = self.nodes
        j = int(np.argmin(np.abs(nodes - t)))
        if abs(nodes[j] - t) <= 1e-12 * self.T:
            t = nodes[j]
        later = nodes[nodes > t]
        return np.concatenate([[t], later])

    def nearest_index(self, t: float) -> int:
        return int(np.clip(np.rint(t / self.dt), 0, self.n_steps))


@dataclass(frozen=True, eq=False)
class FrozenNoise:
    """One realization of the randomness: Gaussians per executed step, events and marks."""

    gaussians: np.ndarray
    event_times: np.ndarray
    marks: np.ndarray
    seed: int
    T: float
    mean_mark: np.ndarray

    def __post_init__(self):
        if len(self.event_times) != len(self.marks):
            raise ValueError("need exactly one mark per event")
        if np.any(np.diff(self.event_times) < 0):
            raise ValueError("event times must be sorted")

    @property
    def n_events(self) -> int:
        return len(self.event_times)

    def count(self, a: float, b: float) -> int:
        """Number of events in ``(a, b]``."""
        return int(np.searchsorted(self.event_times, b, "right")
                   - np.searchsorted(self.event_times, a, "right"))


def sample_noise(grid: EulerGrid, measure: LevyMeasure, seed: int,
                 dim: int | None = None) -> FrozenNoise:
    """Draw Gaussians, Poisson event times on ``[0, T]`` and marks from one seeded stream."""
    d = measure.mark_dim if dim is None else dim
    g = rngmod.stream(seed)
    gauss = g.standard_normal((grid.n_steps, d))
    n = int(g.poisson(measure.lam * grid.T)) if measure.lam > 0 else 0
    times = np.sort(g.uniform(0.0, grid.T, n))
    marks = measure.sample_marks(g, n)
    return FrozenNoise(gauss, times, marks, seed, grid.T, measure.mean_mark)


@dataclass(eq=False)
class NoiseBatch:
    """``M`` noises in flat arrays; events sorted by trial, then time."""

    gaussians: np.ndarray          # (M, n_steps, d)
    ev_trial: np.ndarray           # (E,)
    ev_time: np.ndarray            # (E,)
    ev_mark: np.ndarray            # (E, m)
    T: float
    mean_mark: np.ndarray
    seeds: tuple = ()
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.bincount(self.ev_trial, minlength=self.n_trials)

    @property
    def n_trials(self) -> int:
        return self.gaussians.shape[0]

    @property
    def n_steps(self) -> int:
        return self.gaussians.shape[1]

    @property
    def dim(self) -> int:
        return self.gaussians.shape[2]

    @classmethod
    def from_noises(cls, noises) -> "NoiseBatch":
        noises = list(noises)
        gauss = np.stack([nz.gaussians for nz in noises])
        trial = np.concatenate([np.full(nz.n_events, i, dtype=np.int64)
                                for i, nz in enumerate(noises)])
        times = np.concatenate([nz.event_times for nz in noises])
        m = noises[0].mean_mark.shape[0]
        marks = np.concatenate([nz.marks.reshape(-1, m) for nz in noises])
        return cls(gauss, trial, times, marks, noises[0].T, noises[0].mean_mark,
                   tuple(nz.seed for nz in noises))

    def noise(self, i: int) -> FrozenNoise:
        sel = self.ev_trial == i
        seed = self.seeds[i] if self.seeds else -1
        return FrozenNoise(self.gaussians[i], self.ev_time[sel], self.ev_mark[sel],
                           seed, self.T, self.mean_mark)

    def noises(self) -> list[FrozenNoise]:
        return [self.noise(i) for i in range(self.n_trials)]


def sample_batch(grid: EulerGrid, measure: LevyMeasure, M: int, master_seed: int,
                 keys=(), dim: int | None = None) -> NoiseBatch:
    """``M`` per-trial noises; trial ``i`` uses seed ``derive_seed(master, *keys, i)``."""
    keys = tuple(keys) if isinstance(keys, (tuple, list)) else (keys,)
    seeds = [rngmod.derive_seed(master_seed, *keys, i) for i in range(M)]
    noises = map_ordered(lambda s: sample_noise(grid, measure, s, dim), seeds)
    return NoiseBatch.from_noises(noises)


def sample_block(grid: EulerGrid, measure: LevyMeasure, M: int, gen: np.random.Generator,
                 dim: int | None = None) -> NoiseBatch:
    """``M`` noises drawn in bulk from one generator (for large studies)."""
    d = measure.mark_dim if dim is None else dim
    gauss = gen.standard_normal((M, grid.n_steps, d))
    if measure.lam > 0:
        counts = gen.poisson(measure.lam * grid.T, M)
    else:
        counts = np.zeros(M, dtype=np.int64)
    total = int(counts.sum())
    trial = np.repeat(np.arange(M), counts)
    times = gen.uniform(0.0, grid.T, total)
    order = np.lexsort((times, trial))
    marks = measure.sample_marks(gen, total)
    return NoiseBatch(gauss, trial, times[order], marks, grid.T, measure.mean_mark,
                      counts=counts)


def coarsen_noise(batch: NoiseBatch, factor: int) -> NoiseBatch:
    """Aggregate ``factor`` consecutive fine Gaussians into one coarse draw.

    Events keep their true times, so coarse and fine paths are coupled.
    """
    factor = int(factor)
    if factor < 1 or batch.n_steps % factor:
        raise ValueError("factor must divide the number of fine steps")
    if factor == 1:
        return batch
    M, n, d = batch.gaussians.shape
    coarse = batch.gaussians.reshape(M, n // factor, factor, d).sum(axis=2) / math.sqrt(factor)
    return NoiseBatch(coarse, batch.ev_trial, batch.ev_time, batch.ev_mark, batch.T,
                      batch.mean_mark, batch.seeds, batch.counts)


# ---------------------------------------------------------------- the scheme

COMPENSATION_MODES = ("shifted", "compensator")


def run_scheme(batch: NoiseBatch, grid: EulerGrid, t: float, x, jump, *,
               mode: str = "shifted", on_step=None, keep_path: bool = False):
    """Run the scheme for every trial in ``batch`` and every start point in ``x``.

    Parameters
    ----------
    x : array (d,) or (P, d)
        Start points; all share the batch's noise.
    jump : JumpCoefficient, ReluNet on ``(t, x, z)`` or callable
    mode : "shifted" evaluates the coefficient at ``rho - E_z``;
        "compensator" uses ``rho`` and subtracts ``dt * integral c dnu``.
    on_step : callable(k, s_k, ds_k, X) or None
        Called before step ``k`` with the state at its left end, shape (P, M, d).
    keep_path : bool
        If true also return the states at every boundary, (P, M, K+1, d).

    Returns
    -------
    (bounds, X_T) or (bounds, path)
    """
    if mode not in COMPENSATION_MODES:
        raise ValueError(f"mode must be one of {COMPENSATION_MODES}")
    if batch.n_steps < grid.n_steps:
        raise ValueError("noise has fewer Gaussian draws than the grid has steps")
    x = np.asarray(x, dtype=np.float64)
    x2 = x.reshape(1, -1) if x.ndim == 1 else x
    d = batch.dim
    if x2.shape[1] != d:
        raise ValueError(f"start point has dimension {x2.shape[1]}, noise has {d}")
    P, M = x2.shape[0], batch.n_trials
    bounds = grid.boundaries(t)
    K = len(bounds) - 1
    X = np.repeat(x2[:, None, :], M, axis=1)
    path = np.empty((P, M, K + 1, d)) if keep_path else None
    if keep_path:
        path[:, :, 0] = X

    # events after the start, grouped by step
    live = batch.ev_time > bounds[0]
    ev_idx = np.flatnonzero(live)
    if len(ev_idx) and K > 0:
        steps = np.searchsorted(bounds, batch.ev_time[ev_idx], "left") - 1
        order = np.argsort(steps, kind="stable")
        ev_idx, steps = ev_idx[order], steps[order]
        cuts = np.searchsorted(steps, np.arange(K + 1))
    else:
        cuts = np.zeros(K + 1, dtype=np.int64)
    fn = None
    comp = None
    if mode == "shifted":
        marks_used = batch.ev_mark - batch.mean_mark
    else:
        marks_used = batch.ev_mark
        comp = getattr(jump, "compensator", None)
        if comp is None:
            raise ValueError("compensator mode needs a JumpCoefficient with a compensator")

    for k in range(K):
        s, ds = bounds[k], bounds[k + 1] - bounds[k]
        if on_step is not None:
            on_step(k, s, ds, X)
        lo, hi = cuts[k], cuts[k + 1]
        jumps = None
        if hi > lo:
            if fn is None:
                fn = as_jump_fn(jump)
            idx = ev_idx[lo:hi]
            tr = batch.ev_trial[idx]
            n_ev = len(idx)
            xs = X[:, tr, :].reshape(P * n_ev, d)
            zs = np.tile(marks_used[idx], (P, 1))
            ts = np.full(P * n_ev, s)
            jumps = np.asarray(fn(ts, xs, zs), dtype=np.float64).reshape(P, n_ev, d)
        drift = None
        if comp is not None:
            drift = comp(np.full(P * M, s), X.reshape(P * M, d)).reshape(P, M, d) * ds
        X = X + batch.gaussians[None, :, k, :] * math.sqrt(ds)
        if jumps is not None:
            np.add.at(X, (slice(None), tr), jumps)
        if drift is not None:
            X -= drift
        if keep_path:
            path[:, :, k + 1] = X
    return (bounds, path) if keep_path else (bounds, X)


@dataclass(frozen=True)
class PathRecord:
    start: tuple
    times: np.ndarray
    values: np.ndarray

    def at(self, s: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times - s)))
        if abs(self.times[j] - s) > 1e-9 * max(1.0, abs(s)):
            raise KeyError(f"no recorded state at time {s}")
        return self.values[j]


def simulate_path(t: float, x, grid: EulerGrid, noise: FrozenNoise, jump,
                  mode: str = "shifted") -> PathRecord:
    """Single path of the scheme from ``(t, x)``, recorded at ``t`` and every later node."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != noise.gaussians.shape[1]:
        raise ValueError("start point and noise dimensions differ")
    batch = NoiseBatch.from_noises([noise])
    bounds, path = run_scheme(batch, grid, t, x, jump, mode=mode, keep_path=True)
    return PathRecord((float(bounds[0]), x.copy()), bounds, path[0, 0])


def reference_path(t: float, x, fine_grid: EulerGrid, noise: FrozenNoise, exact_c,
                   coarse_grid: EulerGrid | None = None, mode: str = "shifted") -> PathRecord:
    """The scheme on a refined grid with the exact coefficient, as a proxy for the true path.

    ``noise`` must carry one Gaussian per fine step; the matching coarse noise
    is ``coarsen_noise`` of it.  When ``coarse_grid`` is given, ``fine_grid``
    must refine it and ``t`` must be a coarse node.
    """
    if coarse_grid is not None:
        if not fine_grid.is_refinement_of(coarse_grid):
            raise ValueError("reference grid does not refine the coarse grid")
        j = coarse_grid.nearest_index(t)
        if abs(coarse_grid.nodes[j] - t) > 1e-12 * coarse_grid.T:
            raise ValueError("coupled reference paths must start at a coarse node")
    return simulate_path(t, x, fine_grid, noise, exact_c, mode=mode)


def sample_coupled_batch(fine_grid: EulerGrid, measure: LevyMeasure, M: int,
                         gen: np.random.Generator, dim: int | None = None) -> NoiseBatch:
    return sample_block(fine_grid, measure, M, gen, dim)


# ---------------------------------------------------------------- studies

@dataclass
class MomentReport:
    K: float
    rows: list
    conforming: bool
    slope: float = math.nan


def _terminal_states(problem, t, x, r, n_steps, M, seed, tag):
    """Samples of X_r from (t, x) using a grid on [0, r] containing t as a node."""
    grid = EulerGrid(r, n_steps)
    batch = sample_block(grid, problem.measure, M, rngmod.stream(seed, tag), problem.d)
    _, X = run_scheme(batch, grid, t, x, problem.jump)
    return X[0]


def moment_check_xnorm(problem, samples: int, seed: int = 0, n_steps: int = 32,
                       cases=None, K_claim: float | None = None) -> MomentReport:
    """Estimate ``E|X_r|^2`` over a grid of ``(t, x, r)`` and fit ``K`` in ``K (1 + |x|^2)``.

    The reported ``K`` is the smallest constant covering every case.  When
    ``K_claim`` is given, conformance means every case sits below it.
    """
    d, T = problem.d, problem.T
    if cases is None:
        cases = [(t, s * np.ones(d), r) for t in (0.0, 0.5 * T) for s in (0.0, 1.0, 2.0)
                 for r in (0.75 * T, T)]
    rows = []
    K = 0.0
    for i, (t, x, r) in enumerate(cases):
        x = np.asarray(x, dtype=np.float64)
        Xr = _terminal_states(problem, t, x, r, n_steps, samples, seed, i)
        sq = np.sum(Xr**2, axis=1)
        m, se = float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(samples))
        ratio = m / (1.0 + x @ x)
        K = max(K, ratio)
        rows.append((t, x.copy(), r, m, se))
    ok = True if K_claim is None else K <= K_claim
    return MomentReport(K, rows, ok)


def moment_check_increment(problem, samples: int, seed: int = 0, n_steps: int = 64,
                           x=None, gaps=(0.0625, 0.125, 0.25, 0.5),
                           K_claim: float | None = None) -> MomentReport:
    """Estimate ``E|X_{s1} - X_{s2}|^2`` from ``(0, x)`` against ``K (s1 - s2)(1 + |x|^2)``.

    Uses ``s2 = T/2`` and ``s1 = s2 + gap``; also fits the log-log slope in the gap.
    """
    d, T = problem.d, problem.T
    x = np.zeros(d) if x is None else np.asarray(x, dtype=np.float64)
    grid = EulerGrid(T, n_steps)
    batch = sample_block(grid, problem.measure, samples, rngmod.stream(seed, 99), d)
    bounds, path = run_scheme(batch, grid, 0.0, x, problem.jump, keep_path=True)
    s2 = 0.5 * T
    i2 = int(np.argmin(np.abs(bounds - s2)))
    rows, K = [], 0.0
    report_rows = []
    for gap in gaps:
        s1 = s2 + gap * T / 2
        i1 = int(np.argmin(np.abs(bounds - s1)))
        diff = np.sum((path[0, :, i1] - path[0, :, i2]) ** 2, axis=1)
        m, se = float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(samples))
        h = bounds[i1] - bounds[i2]
        if h > 0:
            K = max(K, m / (h * (1.0 + x @ x)))
        rows.append((h, m, se))
        report_rows.append(Row(h, m, se, samples))
    slope, _ = fit_rate(report_rows)
    ok = True if K_claim is None else K <= K_claim
    return MomentReport(K, rows, ok, slope)


def strong_error_study(problem, N_list, trials: int, *, refinement: int = 16, seed: int = 0,
                       x=None, jump_net=None, chunk: int = 1000,
                       slope_band=(-2.6, -1.4)) -> ExperimentReport:
    """Coupled mean-square error ``E|X_T - Xbar_T|^2`` against the number of Euler steps.

    One reference grid, ``refinement`` times finer than the finest ``N``,
    drives all coarse runs through aggregated Gaussians and shared events.
    The coarse runs use ``jump_net`` when given, else the exact coefficient.
    """
    t0 = time.perf_counter()
    N_list = sorted(int(n) for n in N_list)
    n_fine = refinement * N_list[-1]
    if any(n_fine % n for n in N_list):
        raise ValueError("every N must divide the reference resolution")
    d = problem.d
    x = np.zeros(d) if x is None else np.asarray(x, dtype=np.float64)
    fine = EulerGrid(problem.T, n_fine)
    coarse_jump = problem.jump if jump_net is None else jump_net

    sums = {n: [] for n in N_list}

    def one_chunk(c):
        m = min(chunk, trials - c * chunk)
        gen = rngmod.stream(seed, rngmod.STUDY, c)
        batch = sample_block(fine, problem.measure, m, gen, d)
        _, X_ref = run_scheme(batch, fine, 0.0, x, problem.jump)
        out = {}
        for n in N_list:
            cb = coarsen_noise(batch, n_fine // n)
            _, X = run_scheme(cb, EulerGrid(problem.T, n), 0.0, x, coarse_jump)
            out[n] = np.sum((X[0] - X_ref[0]) ** 2, axis=1)
        return out

    n_chunks = -(-trials // chunk)
    for part in map_ordered(one_chunk, range(n_chunks)):
        for n in N_list:
            sums[n].append(part[n])
    rows = []
    for n in N_list:
        e = np.concatenate(sums[n])
        rows.append(Row(n, float(e.mean()), float(e.std(ddof=1) / math.sqrt(len(e))), len(e)))
    slope, ci = fit_rate(rows)
    checks = []
    if not math.isnan(slope):
        checks.append(Check("fitted MSE slope >= lower band", slope_band[0] - slope, 0.0))
        checks.append(Check("fitted MSE slope <= upper band", slope, slope_band[1]))
    for a, b in zip(rows, rows[1:]):
        checks.append(Check(f"MSE(N={int(b.knob)}) <= MSE(N={int(a.knob)}) + 1 sigma",
                            b.error, a.error + math.hypot(a.stderr, b.stderr)))
    return ExperimentReport("strong Euler rate", "N", rows, slope, ci, checks,
                            time.perf_counter() - t0,
                            notes=f"reference {n_fine} steps, {trials} trials")


# ---------------------------------------------------------------- debugging dumps

def dump_noise(noise: FrozenNoise) -> str:
    """Flat text record of a noise with hex floats."""
    lines = [f"seed {noise.seed}", f"T {float(noise.T).hex()}",
             "mean_mark " + " ".join(float(v).hex() for v in noise.mean_mark)]
    n, d = noise.gaussians.shape
    lines.append(f"gaussians {n} {d}")
    lines.extend(" ".join(float(v).hex() for v in row) for row in noise.gaussians)
    lines.append(f"events {noise.n_events}")
    for tau, mark in zip(noise.event_times, noise.marks):
        lines.append(" ".join([float(tau).hex()] + [float(v).hex() for v in mark]))
    return "\n".join(lines) + "\n"


def load_noise(text: str) -> FrozenNoise:
    it = iter(text.splitlines())
    seed = int(next(it).split()[1])
    T = float.fromhex(next(it).split()[1])
    mean = np.array([float.fromhex(v) for v in next(it).split()[1:]])
    _, n, d = next(it).split()
    gauss = np.array([[float.fromhex(v) for v in next(it).split()] for _ in range(int(n))])
    gauss = gauss.reshape(int(n), int(d))
    n_ev = int(next(it).split()[1])
    rows = [[float.fromhex(v) for v in next(it).split()] for _ in range(n_ev)]
    arr = np.array(rows).reshape(n_ev, 1 + len(mean))
    return FrozenNoise(gauss, arr[:, 0], arr[:, 1:], seed, T, mean)
