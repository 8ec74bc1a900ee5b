"""Monte Carlo Feynman-Kac estimators and the parameter rules.

The solution splits as ``u(t, x) = E g(X_T) + E integral_t^T b(s, X_s) ds``.
The first term is estimated by averaging ``g`` over ``M`` Euler paths and
the second by a left-endpoint rectangle rule along the same kind of paths,
on an independent noise stream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as rngmod
from .levy_sim import EulerGrid, LevyMeasure, NoiseBatch, run_scheme, sample_batch
from .relu_net import ReluNet, eval_net


@dataclass(frozen=True)
class EstimatorConfig:
    M: int
    N_euler: int
    delta_b: float = 0.0
    delta_g: float = 0.0
    delta_c: float = 0.0
    master_seed: int = 0
    mode: str = "shifted"

    def __post_init__(self):
        if self.M < 1 or self.N_euler < 1:
            raise ValueError("need M >= 1 and N_euler >= 1")

    def check(self, problem) -> None:
        """Raise if ``delta_c`` exceeds ``(T / N_euler)^(2 beta_c)``."""
        cap = (problem.T / self.N_euler) ** (2 * problem.beta_c)
        if self.delta_c > cap * (1 + 1e-12):
            raise ValueError(f"delta_c={self.delta_c} exceeds (T/N)^(2 beta_c) = {cap}")

    def grid(self, problem) -> EulerGrid:
        return EulerGrid(problem.T, self.N_euler)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    trials: int

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")

    def __float__(self):
        return self.value


def _mean_se(samples: np.ndarray) -> Estimate:
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    n = len(samples)
    mean = math.fsum(samples) / n
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, se, n)


def as_state_fn(fn, n_in: int):
    """Wrap a cost given as a ReluNet or a callable into a vectorized function."""
    if isinstance(fn, ReluNet):
        if fn.input_dim != n_in:
            raise ValueError(f"net takes {fn.input_dim} inputs, expected {n_in}")
        return lambda pts: eval_net(fn, pts).reshape(len(pts))
    return fn


def terminal_on_batch(batch: NoiseBatch, grid: EulerGrid, t: float, x, jump, g,
                      mode: str = "shifted") -> np.ndarray:
    """``g(Xbar_T)`` per start point and trial, shape (P, M)."""
    _, X = run_scheme(batch, grid, t, x, jump, mode=mode)
    P, M, d = X.shape
    gfn = as_state_fn(g, d)
    return np.asarray(gfn(X.reshape(P * M, d)), dtype=np.float64).reshape(P, M)


def running_on_batch(batch: NoiseBatch, grid: EulerGrid, t: float, x, jump, b,
                     mode: str = "shifted") -> np.ndarray:
    """Rectangle-rule sums ``sum_k b(s_k, Xbar_{s_k}) (s_{k+1} - s_k)``, shape (P, M).

    The first interval starts at ``t`` and contributes ``b(t, x) (t_1 - t)``.
    """
    x = np.asarray(x, dtype=np.float64)
    P = 1 if x.ndim == 1 else x.shape[0]
    acc = np.zeros((P, batch.n_trials))
    d = batch.dim
    if isinstance(b, ReluNet):
        bnet = b
        bfn = lambda tt, xx: eval_net(bnet, np.column_stack([tt, xx])).reshape(len(tt))
    else:
        bfn = b

    def on_step(k, s, ds, X):
        n = X.shape[0] * X.shape[1]
        vals = np.asarray(bfn(np.full(n, s), X.reshape(n, d)), dtype=np.float64)
        acc[:] += vals.reshape(acc.shape) * ds

    run_scheme(batch, grid, t, x, jump, mode=mode, on_step=on_step)
    return acc


def _batch(problem, config: EstimatorConfig, tag: int, attempt: int = 0) -> NoiseBatch:
    return sample_batch(config.grid(problem), problem.measure, config.M, config.master_seed,
                        (tag, attempt), problem.d)


def estimate_terminal(t: float, x, problem, config: EstimatorConfig, *, g=None, jump=None,
                      batch: NoiseBatch | None = None) -> Estimate:
    """Mean of ``g(Xbar_T)`` over ``M`` frozen noises from ``(t, x)``.

    ``g`` and ``jump`` default to the exact problem coefficients; either may
    be replaced by its network.
    """
    batch = _batch(problem, config, rngmod.TERMINAL) if batch is None else batch
    vals = terminal_on_batch(batch, config.grid(problem), t, np.asarray(x, dtype=np.float64),
                             problem.jump if jump is None else jump,
                             problem.g if g is None else g, config.mode)
    return _mean_se(vals[0])


def estimate_running(t: float, x, problem, config: EstimatorConfig, *, b=None, jump=None,
                     batch: NoiseBatch | None = None) -> Estimate:
    """Mean over ``M`` frozen noises of the rectangle-rule integral of ``b`` along the path."""
    batch = _batch(problem, config, rngmod.RUNNING) if batch is None else batch
    vals = running_on_batch(batch, config.grid(problem), t, np.asarray(x, dtype=np.float64),
                            problem.jump if jump is None else jump,
                            problem.b if b is None else b, config.mode)
    return _mean_se(vals[0])


def solve_u(t: float, x, problem, config: EstimatorConfig, **kw) -> Estimate:
    """Sum of the terminal and running estimators; stderrs add in quadrature."""
    jump = kw.get("jump")
    e1 = estimate_terminal(t, x, problem, config, g=kw.get("g"), jump=jump)
    if problem.b_is_zero:
        return e1
    e2 = estimate_running(t, x, problem, config, b=kw.get("b"), jump=jump)
    return Estimate(e1.value + e2.value, math.hypot(e1.stderr, e2.stderr), config.M)


# ---------------------------------------------------------------- parameter rules

@dataclass(frozen=True)
class ParameterPlan:
    delta: float
    eta: float
    eta_alt: float
    kappa: float
    delta_1: float
    delta_2: float
    M_1: int
    M_2: int
    N_1: int
    N_2: int
    N_euler: int
    delta_g: float
    delta_b: float
    delta_c: float
    feasible: bool = True
    constants: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return max(self.M_1, self.M_2)

    def config(self, master_seed: int = 0, mode: str = "shifted") -> EstimatorConfig:
        return EstimatorConfig(self.M, self.N_euler, self.delta_b, self.delta_g, self.delta_c,
                               master_seed, mode)

    def lines(self) -> list[str]:
        return [
            f"delta={self.delta:g}",
            f"eta={self.eta:g}",
            f"eta_alt={self.eta_alt:g}",
            f"kappa={self.kappa:g}",
            f"delta_1={self.delta_1:g} delta_2={self.delta_2:g}",
            f"M={self.M} (M_1={self.M_1}, M_2={self.M_2})",
            f"N_euler={self.N_euler} (N_1={self.N_1}, N_2={self.N_2})",
            f"delta_g={self.delta_g:g} delta_b={self.delta_b:g} delta_c={self.delta_c:g}",
            f"feasible={self.feasible}",
        ]


def eta_exponent(alpha: float, beta: float, beta_c: float) -> float:
    return 2.0 + min(beta, 2 * alpha, 4 * beta * beta_c - 2)


def eta_alt_exponent(alpha: float, beta: float, beta_c: float) -> float:
    # alternative reading of the exponent; reported, never used for planning
    return 2.0 + min(beta, 2 * alpha, 4 * beta, beta_c - 2)


def kappa_exponent(beta: float) -> float:
    return 1.0 if beta >= 0.5 else 1.0 / (2 * beta)


def _ceil(v: float) -> int:
    # guard against 399.99999999 style round-off
    return int(math.ceil(v - 1e-9 * max(1.0, abs(v))))


def choose_parameters(delta: float, problem=None, *, alpha: float | None = None,
                      beta: float | None = None, beta_c: float | None = None,
                      T: float | None = None, C: float = 1.0, C_b: float = 1.0,
                      C_prime: float = 1.0) -> ParameterPlan:
    """Parameter plan for target accuracy ``delta``.

    The exponents come from ``problem`` unless given explicitly.  Every
    unknown proof constant defaults to 1.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    alpha = problem.alpha if alpha is None else alpha
    beta = problem.beta if beta is None else beta
    beta_c = problem.beta_c if beta_c is None else beta_c
    T = problem.T if T is None else T
    for name, v in (("alpha", alpha), ("beta", beta), ("beta_c", beta_c)):
        if not 0 < v <= 1:
            raise ValueError(f"{name} must lie in (0, 1]")

    eta = eta_exponent(alpha, beta, beta_c)
    kappa = kappa_exponent(beta)
    d1 = d2 = delta / 2
    M1 = _ceil(C * d1 ** -2)
    M2 = _ceil(C * d2 ** -2 * T ** (1 + beta))
    N1 = _ceil(C * d1 ** (-1 / beta_c))
    delta_b = d2 / (T ** (1 + beta) * C_prime)
    feasible = eta > 0
    if feasible:
        log_n2 = math.log(T) - (2 / eta) * math.log(C_b * delta_b)
        if log_n2 > 62 * math.log(2):
            raise ValueError(f"the plan needs about exp({log_n2:.4g}) Euler steps (eta={eta:g})")
        N2 = _ceil(T * (C_b * delta_b) ** (-2 / eta))
        N = max(N1, N2)
    else:
        warnings.warn(f"eta = {eta:g} <= 0: the running-cost rate is infeasible; "
                      "N_euler falls back to the terminal rule", RuntimeWarning)
        N2 = 0
        N = N1
    delta_c = (T / N) ** (2 * beta_c)
    return ParameterPlan(delta, eta, eta_alt_exponent(alpha, beta, beta_c), kappa,
                         d1, d2, M1, M2, N1, N2, N, d1, delta_b, delta_c, feasible,
                         {"C": C, "C_b": C_b, "C_prime": C_prime})


# ---------------------------------------------------------------- jump-count bounds

def expected_sqrt_poisson(mu: float) -> float:
    """``E sqrt(N)`` for ``N ~ Poisson(mu)`` by summing the series to negligible tail."""
    if mu == 0:
        return 0.0
    k_max = int(mu + 40 * math.sqrt(mu) + 60)
    k = np.arange(k_max + 1)
    return math.fsum(np.sqrt(k) * stats.poisson.pmf(k, mu))


@dataclass(frozen=True)
class SqrtNReport:
    mean_sq_dev: float
    stderr: float
    bound: float
    slack: float
    M: int
    repetitions: int

    @property
    def satisfied(self) -> bool:
        return self.mean_sq_dev <= self.slack * self.bound


def sqrtN_bound_check(measure: LevyMeasure, T: float, M: int, repetitions: int,
                      seed: int = 0, slack: float = 1.2) -> SqrtNReport:
    """Mean over batches of ``(E sqrt(N_T) - batch mean of sqrt(N_T(i)))^2`` against ``T lam / M``."""
    mu = measure.lam * T
    bound = mu / M
    if mu == 0:
        return SqrtNReport(0.0, 0.0, 0.0, slack, M, repetitions)
    target = expected_sqrt_poisson(mu)
    gen = rngmod.stream(seed, rngmod.STUDY, M)
    counts = gen.poisson(mu, (repetitions, M))
    dev = (np.sqrt(counts).mean(axis=1) - target) ** 2
    se = float(dev.std(ddof=1) / math.sqrt(repetitions)) if repetitions > 1 else math.inf
    return SqrtNReport(float(dev.mean()), se, bound, slack, M, repetitions)


def jump_budget(M: int, T: float, lam: float) -> float:
    return 4.0 * M * M * T * lam


def jump_budget_check(batch, T: float | None = None, lam: float | None = None) -> bool:
    """True iff the total number of events in the batch is at most ``4 M^2 T lam``.

    ``batch`` is a NoiseBatch, or an array of per-trial counts together with
    ``T`` and ``lam``.
    """
    if isinstance(batch, NoiseBatch):
        counts = batch.counts
        T = batch.T if T is None else T
        if lam is None:
            raise ValueError("lam is required")
    else:
        counts = np.asarray(batch)
    return int(np.sum(counts)) <= jump_budget(len(counts), T, lam)
