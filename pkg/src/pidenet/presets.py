"""Shipped desk problems, each exercising a different branch of the construction.

============== ======== ========================= ==========================
name           jumps    jump coefficient          reference solution
============== ======== ========================= ==========================
heat           none     0                         closed form
source         none     0  (b = 1/2)              closed form
smooth_source  none     0  (b smooth in t, x)     closed form
jump_c2        lam = 2  z + a sin(2 pi t)         semi-analytic (quadrature)
jump_state     lam = 2  z + sin(x)/2 + 0.3 t      brute-force Monte Carlo
============== ======== ========================= ==========================

All use ``T = 1``, ``g(x) = cos(x_1 + ... + x_d)`` and the standard Gaussian
weight.  Solutions refer to the process the scheme discretizes: events at
rate ``lam`` moving the state by ``c(t, x, rho - E_z)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .coeff_nets import (CoeffNetReport, build_to_tolerance, exact_report, ridge_net,
                         ridge_profile_error)
from .levy_sim import JumpCoefficient, gaussian_measure, no_jumps, zero_jump
from .problem import ProblemSpec
from .relu_net import affine_net, constant_net, linear_combine, zero_net

T_DEFAULT = 1.0
MARK_MEAN = 0.25
MARK_STD = 0.5
LAM = 2.0


def _cos_sum(x):
    return np.cos(np.sum(x, axis=1))


def _heat_terminal(d, T):
    def u(t, x):
        t = np.asarray(t, dtype=np.float64)
        return np.cos(np.sum(np.atleast_2d(x), axis=1)) * np.exp(-d * (T - t) / 2)
    return u


def _zero_solution(t, x):
    return np.zeros(np.atleast_2d(x).shape[0])


def _ridge_half_width(d: int, T: float, jump_var: float = 0.0, drift: float = 0.0) -> float:
    """Seven standard deviations of ``sum(X_s)`` for ``x ~ N(0, I)``, plus drift."""
    return 7.0 * math.sqrt(d * (1.0 + T) + jump_var) + abs(drift)


def _g_builder(d, half):
    def build(tol: float) -> CoeffNetReport:
        interval = (-half, half)

        def make(res):
            net = ridge_net(np.cos, np.ones(d), 0.0, interval, res)
            return net, ridge_profile_error(np.cos, interval, res)
        return build_to_tolerance(make, tol, "sup_norm", o1=1.0)
    return build


def _sin_b_builder(d, half, amp=0.5):
    prof = lambda s: amp * np.sin(s)

    def build(tol: float) -> CoeffNetReport:
        interval = (-half, half + T_DEFAULT)

        def make(res):
            net = ridge_net(prof, np.ones(d + 1), 0.0, interval, res)
            return net, ridge_profile_error(prof, interval, res)
        return build_to_tolerance(make, tol, "sup_norm", o1=1.0)
    return build


def _const_b_builder(d, value):
    def build(tol: float) -> CoeffNetReport:
        if value == 0:
            return exact_report(zero_net(d + 1, 1), tol=tol)
        return exact_report(constant_net(d + 1, [value]), tol=tol)
    return build


def _zero_c_builder(d):
    def build(tol: float) -> CoeffNetReport:
        return exact_report(zero_net(1 + 2 * d, d), "nu_L2", tol)
    return build


def _linear_c_part(d: int, t_coef: float) -> object:
    # (t, x, z) -> z + t_coef * t
    w = np.zeros((d, 1 + 2 * d))
    w[:, 1 + d:] = np.eye(d)
    w[:, 0] = t_coef
    return affine_net(w)


def heat(d: int = 1, T: float = T_DEFAULT) -> ProblemSpec:
    u = _heat_terminal(d, T)
    half = _ridge_half_width(d, T)
    return ProblemSpec(
        T=T, d=d, b=lambda t, x: np.zeros(np.atleast_2d(x).shape[0]), g=_cos_sum,
        jump=zero_jump(d), measure=no_jumps(d), K_b=1.0, L_b=1.0, K_g=1.0, L_g=1.0,
        analytic_u=u, terminal_ref=u, running_ref=_zero_solution, b_is_zero=True,
        coeff_builders={"g": _g_builder(d, half), "b": _const_b_builder(d, 0.0),
                        "c": _zero_c_builder(d)},
        name=f"heat(d={d})")


def source(d: int = 1, T: float = T_DEFAULT, level: float = 0.5) -> ProblemSpec:
    term = _heat_terminal(d, T)

    def running(t, x):
        return level * (T - np.asarray(t, dtype=np.float64)) * np.ones(np.atleast_2d(x).shape[0])

    half = _ridge_half_width(d, T)
    return ProblemSpec(
        T=T, d=d, b=lambda t, x: np.full(np.atleast_2d(x).shape[0], level), g=_cos_sum,
        jump=zero_jump(d), measure=no_jumps(d), K_b=level, L_b=1.0,
        analytic_u=lambda t, x: term(t, x) + running(t, x), terminal_ref=term,
        running_ref=running,
        coeff_builders={"g": _g_builder(d, half), "b": _const_b_builder(d, level),
                        "c": _zero_c_builder(d)},
        name=f"source(d={d})")


def _sin_running(t, x):
    return 0.5 * np.sin(np.asarray(t) + np.sum(np.atleast_2d(x), axis=1))


def smooth_source(d: int = 1, T: float = T_DEFAULT) -> ProblemSpec:
    term = _heat_terminal(d, T)
    a = d / 2.0

    def running(t, x):
        t = np.asarray(t, dtype=np.float64)
        s = np.sum(np.atleast_2d(x), axis=1)
        z = np.exp(1j * (t + s)) * (np.exp((1j - a) * (T - t)) - 1.0) / (1j - a)
        return 0.5 * z.imag

    half = _ridge_half_width(d, T)
    return ProblemSpec(
        T=T, d=d, b=_sin_running, g=_cos_sum, jump=zero_jump(d), measure=no_jumps(d),
        K_b=0.5, L_b=0.5, alpha=1.0, beta=1.0,
        analytic_u=lambda t, x: term(t, x) + running(t, x), terminal_ref=term,
        running_ref=running,
        coeff_builders={"g": _g_builder(d, half), "b": _sin_b_builder(d, half),
                        "c": _zero_c_builder(d)},
        name=f"smooth_source(d={d})")


def jump_c2(d: int = 1, T: float = T_DEFAULT, amp: float = 0.25) -> ProblemSpec:
    """State-independent jumps ``c(t, x, z) = z + amp sin(2 pi t)`` in every coordinate."""
    measure = gaussian_measure(LAM, MARK_MEAN, MARK_STD, d)
    Ez = float(measure.mean_mark[0])
    two_pi = 2 * math.pi

    def c(t, x, z):
        return z + amp * np.sin(two_pi * np.asarray(t))[:, None]

    def comp(t, x):
        return np.repeat((LAM * MARK_MEAN + LAM * amp * np.sin(two_pi * np.asarray(t)))[:, None],
                         d, axis=1)

    jump = JumpCoefficient(c, K_c=1.0, L_c=1.0, beta_c=1.0, state_independent=True,
                           compensator=comp)
    shift = d * (MARK_MEAN - Ez)

    def log_char(t0):
        # lam * integral_{t0}^T (phi(tau) - 1) dtau for the per-event factor phi
        def re(tau):
            return math.exp(-d * MARK_STD**2 / 2) * math.cos(shift + d * amp * math.sin(two_pi * tau)) - 1
        def im(tau):
            return math.exp(-d * MARK_STD**2 / 2) * math.sin(shift + d * amp * math.sin(two_pi * tau))
        r = integrate.quad(re, t0, T, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        i = integrate.quad(im, t0, T, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        return LAM * complex(r, i)

    def u(t, x):
        x = np.atleast_2d(x)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        out = np.empty(x.shape[0])
        cache = {}
        for k, (tk, xk) in enumerate(zip(t, x)):
            if tk not in cache:
                cache[tk] = np.exp(log_char(float(tk)) - d * (T - tk) / 2)
            out[k] = (np.exp(1j * xk.sum()) * cache[tk]).real
        return out

    jump_var = LAM * T * d * (MARK_STD**2 + (MARK_MEAN - Ez) ** 2 + amp**2)
    half = _ridge_half_width(d, T, jump_var, LAM * T * abs(shift))
    lin = _linear_c_part(d, 0.0)

    def c_builder(tol: float) -> CoeffNetReport:
        prof = lambda s: amp * np.sin(two_pi * s)
        w = np.zeros(1 + 2 * d)
        w[0] = 1.0

        def make(res):
            ridge = ridge_net(prof, w, 0.0, (0.0, T), res, out_dir=np.ones(d))
            err = ridge_profile_error(prof, (0.0, T), res)
            return linear_combine([lin, ridge], [1.0, 1.0]), LAM * d * err**2
        return build_to_tolerance(make, tol, "nu_L2", o1=1.0)

    return ProblemSpec(
        T=T, d=d, b=lambda t, x: np.zeros(np.atleast_2d(x).shape[0]), g=_cos_sum,
        jump=jump, measure=measure, analytic_u=u, terminal_ref=u, running_ref=_zero_solution,
        b_is_zero=True,
        coeff_builders={"g": _g_builder(d, half), "b": _const_b_builder(d, 0.0), "c": c_builder},
        name=f"jump_c2(d={d})")


def jump_state(d: int = 1, T: float = T_DEFAULT, gain: float = 0.5,
               t_coef: float = 0.3) -> ProblemSpec:
    """State-dependent jumps ``c(t, x, z) = z + gain sin(x) + t_coef t`` (coordinatewise)."""
    measure = gaussian_measure(LAM, MARK_MEAN, MARK_STD, d)
    Ez = float(measure.mean_mark[0])

    def c(t, x, z):
        return z + gain * np.sin(x) + t_coef * np.asarray(t)[:, None]

    def comp(t, x):
        return LAM * (MARK_MEAN + gain * np.sin(x) + t_coef * np.asarray(t)[:, None])

    jump = JumpCoefficient(c, K_c=1.0, L_c=gain, beta_c=1.0, state_independent=False,
                           compensator=comp)
    per_event_mean = abs(MARK_MEAN - Ez) + gain + t_coef * T
    jump_var = LAM * T * d * (MARK_STD**2 + per_event_mean**2)
    half = _ridge_half_width(d, T, jump_var, LAM * T * d * per_event_mean)
    x_half = 7.0 * math.sqrt(1.0 + T + LAM * T * (MARK_STD**2 + per_event_mean**2)) \
        + LAM * T * per_event_mean
    lin = _linear_c_part(d, t_coef)

    def c_builder(tol: float) -> CoeffNetReport:
        prof = lambda s: gain * np.sin(s)
        interval = (-x_half, x_half)

        def make(res):
            parts = [lin]
            for j in range(d):
                w = np.zeros(1 + 2 * d)
                w[1 + j] = 1.0
                e = np.zeros(d)
                e[j] = 1.0
                parts.append(ridge_net(prof, w, 0.0, interval, res, out_dir=e))
            err = ridge_profile_error(prof, interval, res)
            return linear_combine(parts, [1.0] * len(parts)), LAM * d * err**2
        return build_to_tolerance(make, tol, "nu_L2", o1=1.0)

    return ProblemSpec(
        T=T, d=d, b=_sin_running, g=_cos_sum, jump=jump, measure=measure,
        K_b=0.5, L_b=0.5, alpha=1.0, beta=1.0,
        coeff_builders={"g": _g_builder(d, half), "b": _sin_b_builder(d, half),
                        "c": c_builder},
        name=f"jump_state(d={d})")


PRESETS = {
    "heat": heat,
    "source": source,
    "smooth_source": smooth_source,
    "jump_c2": jump_c2,
    "jump_state": jump_state,
}

# the four presets that exercise the distinct branches of the trajectory construction
CORE_PRESETS = ("heat", "source", "jump_c2", "jump_state")


def get_preset(name: str, d: int = 1, **overrides) -> ProblemSpec:
    """Instantiate a registered preset; ``overrides`` go to its factory (``T``, ``amp``, ...)."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(d, **overrides)
