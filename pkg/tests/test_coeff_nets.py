import math

import numpy as np
import pytest

from pidenet.coeff_nets import (
    CoeffNetReport, build_cpwl_interpolant, build_to_tolerance, hinge_interpolant,
    kuhn_interpolant, make_probes, ridge_net, ridge_profile_error, verify_b_tolerance,
    verify_c_tolerance, verify_g_tolerance,
)
from pidenet.levy_sim import gaussian_measure
from pidenet.presets import PRESETS, get_preset
from pidenet.relu_net import affine_net, eval_net


def test_square_interpolation_error_is_quarter_h_squared():
    # piecewise-linear interpolation of x^2: max error h^2 f''/8 = h^2/4
    rep = build_cpwl_interpolant(lambda p: p[:, 0] ** 2, [[-1.0, 1.0]], 33)
    h = 2.0 / 32
    assert rep.tolerance_measured == pytest.approx(h * h / 4, rel=1e-9)


def test_hinge_interpolant_hits_knots_and_clamps():
    knots = np.linspace(0.0, 2.0, 5)
    vals = np.sin(knots)
    net = hinge_interpolant(knots, vals)
    assert np.allclose(eval_net(net, knots[:, None]).ravel(), vals)
    outside = eval_net(net, np.array([[-3.0], [9.0]])).ravel()
    assert np.allclose(outside, [vals[0], vals[-1]])


@pytest.mark.parametrize("k", [2, 3])
def test_kuhn_interpolant_reproduces_affine_maps(k):
    gen = np.random.default_rng(k)
    w, c = gen.standard_normal(k), gen.standard_normal()
    box = [[-1.0, 2.0]] * k
    net = kuhn_interpolant(lambda p: p @ w + c, box, 4)
    pts = gen.uniform(-1.0, 2.0, (200, k))
    assert np.allclose(eval_net(net, pts).ravel(), pts @ w + c, atol=1e-10)


def test_kuhn_interpolant_error_shrinks_fourfold():
    f = lambda p: np.sin(p[:, 0]) * np.cos(p[:, 1])  # noqa: E731
    errs = [build_cpwl_interpolant(f, [[0, 2], [0, 2]], r).tolerance_measured for r in (9, 17, 33)]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.0 < r < 5.0 for r in ratios)


def test_interpolant_rejects_high_dimension():
    with pytest.raises(ValueError):
        build_cpwl_interpolant(lambda p: p[:, 0], [[0, 1]] * 4, 3)


def test_build_to_tolerance_doubles_until_met():
    def make(res):
        rep = build_cpwl_interpolant(lambda p: np.exp(p[:, 0]), [[0.0, 1.0]], res)
        return rep.net, rep.tolerance_measured
    rep = build_to_tolerance(make, 1e-4)
    assert rep.accepted and rep.tolerance_measured <= 1e-4
    o2 = rep.size_exponents[1]
    assert 0.3 < o2 < 0.7  # size ~ err^-1/2 in one dimension


def test_ridge_net_and_profile_error():
    w = np.array([1.0, 1.0])
    net = ridge_net(np.cos, w, 0.0, (-6.0, 6.0), 201)
    x = np.random.default_rng(0).uniform(-2, 2, (100, 2))
    err = np.max(np.abs(eval_net(net, x).ravel() - np.cos(x.sum(axis=1))))
    assert err <= ridge_profile_error(np.cos, (-6.0, 6.0), 201) + 1e-12


def test_verify_b_and_g_exact_nets():
    b_net = affine_net(np.array([[2.0, 1.0]]), np.array([0.5]))
    probes = make_probes(np.random.default_rng(1), 1.0, [[-1, 1]], 50)
    assert verify_b_tolerance(b_net, lambda t, x: 2 * t + x[:, 0] + 0.5, probes) < 1e-12
    g_net = affine_net(np.array([[3.0]]))
    assert verify_g_tolerance(g_net, lambda x: 3 * x[:, 0], probes[:, 1:]) < 1e-12


def test_verify_c_tolerance_known_offset():
    # phi_c = c + 0.1 gives integral |0.1|^2 nu(dz) = 0.01 lam exactly
    measure = gaussian_measure(2.0, 0.0, 1.0, 1)
    c = lambda t, x, z: z + x  # noqa: E731
    net = affine_net(np.array([[0.0, 1.0, 1.0]]), np.array([0.1]))
    probes = make_probes(np.random.default_rng(2), 1.0, [[-1, 1]], 10)
    val, se = verify_c_tolerance(net, c, measure, probes, 100, np.random.default_rng(3))
    assert val == pytest.approx(0.02, rel=1e-9)
    with pytest.raises(ValueError):
        verify_c_tolerance(net, c, measure, probes, 0, np.random.default_rng(3))


def test_report_validates_norm_kind():
    with pytest.raises(ValueError):
        CoeffNetReport(affine_net(np.eye(1)), 0.1, 0.0, "L1")


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_coefficient_nets_meet_tolerance(name):
    problem = get_preset(name)
    for which, tol in (("g", 0.05), ("b", 0.05), ("c", 0.0025)):
        rep = problem.coeff_net(which, tol)
        assert rep.accepted, rep.record()
        assert math.isfinite(rep.tolerance_measured)
