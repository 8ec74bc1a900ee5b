"""Coefficient networks for b, g and c with measured tolerances.

Functions of one variable are interpolated by a hinge sum, which is an
exact two-layer ReLU network.  Functions of two or three variables use the
Kuhn (Freudenthal) triangulation of a regular grid, whose hat functions are
``rho(1 - range{0, y_1, ..., y_k})`` in local grid coordinates ``y``.  Every
interpolant is clamped to the box: outside it the net returns the value at
the nearest boundary point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .relu_net import AffineLayer, ReluNet, eval_net, precompose_affine

NORM_KINDS = ("sup_norm", "nu_L2")


@dataclass(frozen=True)
class CoeffNetReport:
    net: ReluNet
    tolerance_target: float
    tolerance_measured: float
    norm_kind: str = "sup_norm"
    size_exponents: tuple = (math.nan, math.nan)
    resolution: int = 0
    stderr: float = 0.0

    def __post_init__(self):
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"norm_kind must be one of {NORM_KINDS}")

    @property
    def accepted(self) -> bool:
        return self.tolerance_measured <= self.tolerance_target

    def record(self) -> str:
        o1, o2 = self.size_exponents
        return (f"norm={self.norm_kind} target={self.tolerance_target:.6g} "
                f"measured={self.tolerance_measured:.6g} stderr={self.stderr:.3g} "
                f"size={self.net.size()} resolution={self.resolution} o1={o1:.3g} o2={o2:.3g} "
                f"accepted={self.accepted}")


def exact_report(net: ReluNet, norm_kind: str = "sup_norm", tol: float = 0.0) -> CoeffNetReport:
    """Report for a net that represents its target exactly."""
    return CoeffNetReport(net, tol, 0.0, norm_kind)


def _check_box(box) -> np.ndarray:
    box = np.asarray(box, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(box)):
        raise ValueError("the interpolation box must be bounded")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("each box side needs lo < hi")
    return box


def _values(f, pts: np.ndarray) -> np.ndarray:
    out = np.asarray(f(pts), dtype=np.float64)
    return out.reshape(len(pts), -1)


# ---------------------------------------------------------------- 1-D hinge sums

def hinge_interpolant(knots: np.ndarray, values: np.ndarray) -> ReluNet:
    """Clamped piecewise-linear interpolant through ``(knots, values)`` as a 2-layer net.

    ``values`` has shape (n,) or (n, out).  The net computes
    ``v_0 + sum_k jump_k * rho(x - x_k)`` where ``jump_k`` are slope changes;
    the last hinge switches the slope back to zero so the net is flat
    beyond both ends.
    """
    knots = np.asarray(knots, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    vals = vals.reshape(len(knots), -1)
    slopes = np.diff(vals, axis=0) / np.diff(knots)[:, None]
    changes = np.vstack([slopes[:1], np.diff(slopes, axis=0), -slopes[-1:]])
    keep = np.any(changes != 0.0, axis=1)
    if not np.any(keep):
        w1 = sp.csr_matrix((0, 1))
        return ReluNet((AffineLayer(sp.csr_matrix((vals.shape[1], 1)), vals[0]),))
    k = knots[keep]
    w1 = sp.csr_matrix(np.ones((len(k), 1)))
    first = AffineLayer(w1, -k)
    second = AffineLayer(sp.csr_matrix(changes[keep].T), vals[0])
    return ReluNet((first, second))


# ---------------------------------------------------------------- Kuhn triangulation

def _kuhn_template(k: int):
    """Vertex-independent part of the hat-function subnetwork.

    Returns the hidden layers after the pair-difference layer as
    (weight, bias) pairs, the pair list, and the size of the last hidden layer.
    """
    pairs = [(a, b) for a in range(k + 1) for b in range(a + 1, k + 1)]
    n_units = 2 * len(pairs)
    # each value is a linear map on the previous layer's units
    vals = [np.zeros(n_units) for _ in pairs]
    for p in range(len(pairs)):
        vals[p][2 * p] = 1.0
        vals[p][2 * p + 1] = 1.0
    layers = []
    while len(vals) > 1:
        rows, new_vals = [], []
        for q in range(0, len(vals) - 1, 2):
            a, b = vals[q], vals[q + 1]
            rows.append(a - b)  # rho(a - b) + rho(b) = max(a, b) since b >= 0
            rows.append(b)
            new_vals.append((len(rows) - 2, len(rows) - 1))
        if len(vals) % 2:
            rows.append(vals[-1])
            new_vals.append((len(rows) - 1,))
        W = np.vstack(rows)
        layers.append((W, np.zeros(len(rows))))
        nxt = []
        for idx in new_vals:
            v = np.zeros(len(rows))
            v[list(idx)] = 1.0
            nxt.append(v)
        vals = nxt
    # hat = rho(1 - max)
    layers.append((-vals[0][None, :], np.ones(1)))
    return pairs, layers


def kuhn_interpolant(f: Callable, box, resolution) -> ReluNet:
    """Clamped CPWL interpolant of ``f`` on the Kuhn triangulation of a regular grid."""
    box = _check_box(box)
    k = box.shape[0]
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (k,))
    if np.any(res < 2):
        raise ValueError("resolution must be at least 2 per axis")
    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(box, res)]
    h = np.array([(hi - lo) / (r - 1) for (lo, hi), r in zip(box, res)])
    verts = np.array(list(product(*axes)))
    fv = _values(f, verts)
    live = np.any(fv != 0.0, axis=1)
    verts, fv = verts[live], fv[live]
    out_dim = fv.shape[1]
    lo, hi = box[:, 0], box[:, 1]

    # clamp layer: u_i = rho(x_i - lo_i), w_i = rho(x_i - hi_i); x_c = lo + u - w
    clamp = AffineLayer(sp.vstack([sp.identity(k), sp.identity(k)], format="csr"),
                        np.concatenate([-lo, -hi]))
    if len(verts) == 0:
        return ReluNet((AffineLayer(sp.csr_matrix((out_dim, k)), np.zeros(out_dim)),))

    pairs, tail = _kuhn_template(k)
    # pair layer rows for one vertex: +/-(y_b - y_a), y_0 = 0, y_i = (lo_i - v_i + u_i - w_i)/h_i
    Wp = np.zeros((2 * len(pairs), 2 * k))
    for p, (a, b) in enumerate(pairs):
        row = np.zeros(2 * k)
        row[b - 1] += 1.0 / h[b - 1]
        row[k + b - 1] -= 1.0 / h[b - 1]
        if a > 0:
            row[a - 1] -= 1.0 / h[a - 1]
            row[k + a - 1] += 1.0 / h[a - 1]
        Wp[2 * p], Wp[2 * p + 1] = row, -row
    offs = (lo - verts) / h  # (V, k): y_i offset per vertex
    bias_rows = []
    for a, b in pairs:
        diff = offs[:, b - 1] - (offs[:, a - 1] if a > 0 else 0.0)
        bias_rows.append(np.column_stack([diff, -diff]))
    bp = np.hstack(bias_rows).reshape(-1)  # vertex-major
    V = len(verts)
    pair_layer = AffineLayer(sp.kron(np.ones((V, 1)), sp.csr_matrix(Wp), format="csr"), bp)
    layers = [clamp, pair_layer]
    eye = sp.identity(V, format="csr")
    for W, b in tail:
        layers.append(AffineLayer(sp.kron(eye, sp.csr_matrix(W), format="csr"), np.tile(b, V)))
    layers.append(AffineLayer(sp.csr_matrix(fv.T), np.zeros(out_dim)))
    return ReluNet(tuple(layers))


# ---------------------------------------------------------------- builders

def _probe_grid(box: np.ndarray, resolution, factor: int = 4, cap: int = 200_000) -> np.ndarray:
    k = box.shape[0]
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (k,))
    n = [(r - 1) * factor + 1 for r in res]
    while np.prod(n) > cap:
        n = [max(2, m // 2) for m in n]
    axes = [np.linspace(lo, hi, m) for (lo, hi), m in zip(box, n)]
    return np.array(list(product(*axes)))


def build_cpwl_interpolant(f: Callable, box, resolution, tol: float = math.inf) -> CoeffNetReport:
    """CPWL interpolant of ``f`` on ``box`` (input dimension at most 3).

    ``tolerance_measured`` is the max error on a grid four times finer than
    the interpolation grid.
    """
    box = _check_box(box)
    k = box.shape[0]
    if k > 3:
        raise ValueError("the built-in interpolant handles at most 3 inputs; supply a net instead")
    if np.any(np.asarray(resolution) < 2):
        raise ValueError("resolution must be at least 2 per axis")
    if k == 1:
        knots = np.linspace(box[0, 0], box[0, 1], int(np.max(resolution)))
        net = hinge_interpolant(knots, _values(f, knots[:, None]))
    else:
        net = kuhn_interpolant(f, box, resolution)
    probes = _probe_grid(box, resolution)
    err = float(np.max(np.abs(eval_net(net, probes).reshape(len(probes), -1) - _values(f, probes))))
    return CoeffNetReport(net, tol, err, "sup_norm", resolution=int(np.max(resolution)))


def _size_exponent(sizes, errors) -> float:
    pts = [(s, e) for s, e in zip(sizes, errors) if e > 0 and s > 0]
    if len(pts) < 2:
        return math.nan
    s, e = np.log(np.array(pts)).T
    return float(np.polyfit(-e, s, 1)[0])


def build_to_tolerance(make: Callable[[int], tuple], tol: float, norm_kind: str = "sup_norm",
                       start: int = 5, max_resolution: int = 1 << 16,
                       o1: float = math.nan) -> CoeffNetReport:
    """Double the resolution until ``make(res) -> (net, measured[, stderr])`` meets ``tol``.

    The second size exponent is the slope of log(size) against log(1/error)
    over the sweep.
    """
    res = start
    sizes, errors = [], []
    while True:
        out = make(res)
        net, measured = out[0], float(out[1])
        stderr = float(out[2]) if len(out) > 2 else 0.0
        sizes.append(net.size())
        errors.append(measured)
        if measured <= tol or res >= max_resolution:
            o2 = _size_exponent(sizes, errors)
            return CoeffNetReport(net, tol, measured, norm_kind, (o1, o2), res, stderr)
        res = 2 * res - 1


def ridge_net(profile: Callable, weights, shift: float, interval, resolution: int,
              out_dir=None) -> ReluNet:
    """Net for ``x -> out_dir * P(weights . x + shift)`` with ``P`` the clamped hinge
    interpolant of ``profile`` on ``interval``."""
    w = np.asarray(weights, dtype=np.float64).reshape(1, -1)
    knots = np.linspace(interval[0], interval[1], resolution)
    vals = np.asarray(profile(knots), dtype=np.float64).reshape(-1, 1)
    if out_dir is not None:
        vals = vals * np.asarray(out_dir, dtype=np.float64).reshape(1, -1)
    net = hinge_interpolant(knots, vals)
    return precompose_affine(net, sp.csr_matrix(w), np.array([shift]))


def ridge_profile_error(profile: Callable, interval, resolution: int, factor: int = 4) -> float:
    """Sup error of the hinge interpolant of ``profile`` on ``interval`` (finer probe grid)."""
    knots = np.linspace(interval[0], interval[1], resolution)
    net = hinge_interpolant(knots, np.asarray(profile(knots)).reshape(-1, 1))
    probes = np.linspace(interval[0], interval[1], (resolution - 1) * factor + 1)
    approx = eval_net(net, probes[:, None]).reshape(-1)
    return float(np.max(np.abs(approx - profile(probes))))


# ---------------------------------------------------------------- verification

def verify_b_tolerance(net, b: Callable, probes) -> float:
    """Sup-norm estimate of ``|b - phi_b|`` over ``probes`` rows ``(t, x)``."""
    probes = np.asarray(probes, dtype=np.float64)
    approx = _evaluate(net, probes)
    exact = np.asarray(b(probes[:, 0], probes[:, 1:]), dtype=np.float64).reshape(-1)
    return float(np.max(np.abs(approx.reshape(-1) - exact)))


def verify_g_tolerance(net, g: Callable, probes) -> float:
    """Sup-norm estimate of ``|g - phi_g|`` over ``probes`` rows ``x``."""
    probes = np.asarray(probes, dtype=np.float64)
    approx = _evaluate(net, probes)
    return float(np.max(np.abs(approx.reshape(-1) - np.asarray(g(probes)).reshape(-1))))


def verify_c_tolerance(net, c: Callable, measure, probes, mark_samples: int,
                       rng: np.random.Generator) -> tuple[float, float]:
    """Max over probes ``(t, x)`` of a Monte Carlo estimate of
    ``integral |c(t, x, z) - phi_c(t, x, z)|^2 nu(dz)``, with its standard error.

    The same ``mark_samples`` marks are used at every probe.
    """
    if mark_samples <= 0:
        raise ValueError("need at least one mark sample")
    if measure.lam == 0:
        return 0.0, 0.0
    probes = np.asarray(probes, dtype=np.float64)
    z = measure.sample_marks(rng, mark_samples)
    n_p, S = len(probes), mark_samples
    t = np.repeat(probes[:, 0], S)
    x = np.repeat(probes[:, 1:], S, axis=0)
    zz = np.tile(z, (n_p, 1))
    exact = np.asarray(c(t, x, zz), dtype=np.float64)
    approx = _evaluate(net, np.column_stack([t, x, zz])).reshape(exact.shape)
    sq = np.sum((exact - approx) ** 2, axis=1).reshape(n_p, S) * measure.lam
    means = sq.mean(axis=1)
    p = int(np.argmax(means))
    se = float(sq[p].std(ddof=1) / math.sqrt(S)) if S > 1 else math.inf
    return float(means[p]), se


def _evaluate(net, pts: np.ndarray) -> np.ndarray:
    if isinstance(net, ReluNet):
        return eval_net(net, pts)
    return np.asarray(net(pts), dtype=np.float64)


def make_probes(rng: np.random.Generator, T: float, box, n: int) -> np.ndarray:
    """``n`` uniform probes on ``[0, T] x box``."""
    box = _check_box(box)
    t = rng.uniform(0.0, T, n)
    x = rng.uniform(box[:, 0], box[:, 1], (n, box.shape[0]))
    return np.column_stack([t, x])


def assemble_sum(parts: Sequence[ReluNet]) -> ReluNet:
    from .relu_net import linear_combine
    return linear_combine(list(parts), [1.0] * len(parts))
