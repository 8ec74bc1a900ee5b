"""Problem description: dynamics, costs, class constants and reference solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .levy_sim import JumpCoefficient, LevyMeasure

# b(t, x): t (n,), x (n, d) -> (n,);  g(x): (n, d) -> (n,)
RunningCost = Callable[[np.ndarray, np.ndarray], np.ndarray]
TerminalCost = Callable[[np.ndarray], np.ndarray]
Solution = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class WeightDensity:
    """Density ``f`` on R^d used to weight the L2 error; sampler plus evaluator."""

    d: int
    sample: Callable[[np.random.Generator, int], np.ndarray]
    pdf: Callable[[np.ndarray], np.ndarray]
    second_moment: float
    label: str = ""


def standard_gaussian_density(d: int) -> WeightDensity:
    def sample(rng, n):
        return rng.standard_normal((n, d))

    def pdf(x):
        x = np.atleast_2d(x)
        return np.exp(-0.5 * np.sum(x**2, axis=1)) / (2 * np.pi) ** (d / 2)

    return WeightDensity(d, sample, pdf, float(d), label="standard gaussian")


@dataclass(eq=False)
class ProblemSpec:
    """Cauchy problem for the PIDE with terminal cost ``g`` and running cost ``b``.

    ``analytic_u`` is the exact solution when known; ``terminal_ref`` and
    ``running_ref`` are the two Feynman-Kac components when known separately.
    ``coeff_builders`` maps ``"g"``, ``"b"``, ``"c"`` to callables taking a
    tolerance and returning a ``CoeffNetReport``.
    """

    T: float
    d: int
    b: RunningCost
    g: TerminalCost
    jump: JumpCoefficient
    measure: LevyMeasure
    K_b: float = 1.0
    L_b: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    K_g: float = 1.0
    L_g: float = 1.0
    weight: WeightDensity | None = None
    analytic_u: Solution | None = None
    terminal_ref: Solution | None = None
    running_ref: Solution | None = None
    coeff_builders: dict = field(default_factory=dict)
    b_is_zero: bool = False
    name: str = "problem"
    _coeff_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.T <= 0 or self.d < 1:
            raise ValueError("need T > 0 and d >= 1")
        for label, v in (("alpha", self.alpha), ("beta", self.beta),
                         ("beta_c", self.jump.beta_c)):
            if not 0 < v <= 1:
                raise ValueError(f"{label} must lie in (0, 1]")
        for label, v in (("K_b", self.K_b), ("L_b", self.L_b), ("K_g", self.K_g),
                         ("L_g", self.L_g), ("K_c", self.jump.K_c), ("L_c", self.jump.L_c)):
            if v <= 0:
                raise ValueError(f"class constant {label} must be positive")
        if self.measure.mark_dim != self.d:
            raise ValueError("marks must live in R^d")
        if self.weight is None:
            self.weight = standard_gaussian_density(self.d)

    @property
    def lam(self) -> float:
        return self.measure.lam

    @property
    def beta_c(self) -> float:
        return self.jump.beta_c

    def coeff_net(self, which: str, tol: float):
        """Cached coefficient net for ``which`` in {"g", "b", "c"} at tolerance ``tol``."""
        key = (which, float(tol))
        if key not in self._coeff_cache:
            if which not in self.coeff_builders:
                raise KeyError(f"problem {self.name!r} has no builder for phi_{which}")
            self._coeff_cache[key] = self.coeff_builders[which](tol)
        return self._coeff_cache[key]
