import math

import numpy as np
import pytest

from pidenet.feynman_kac import EstimatorConfig, running_on_batch, terminal_on_batch
from pidenet.levy_sim import EulerGrid, FrozenNoise, NoiseBatch, sample_batch, simulate_path
from pidenet.net_builder import (
    BatchSelectionError, TimeGridNet, build_solution, select_noise_batch, selection_criterion,
    selection_probes, trajectory_net, trajectory_nets,
)
from pidenet.presets import get_preset
from pidenet.relu_net import constant_net, eval_net, lift_time, size


def frozen(gaussians, times, marks, mean):
    return FrozenNoise(np.asarray(gaussians, float), np.asarray(times, float),
                       np.asarray(marks, float).reshape(len(times), len(mean)), 0, 1.0,
                       np.asarray(mean, float))


def test_zero_event_trajectory_is_identity_plus_shift():
    problem = get_preset("jump_state", 2)
    phi_c = problem.coeff_net("c", 0.01).net
    grid = EulerGrid(1.0, 4)
    noise = frozen(np.array([[0.5, 0.0], [0.1, -0.2], [0.3, 0.1], [0.0, 0.0]]), [], [], [0.5, 0.5])
    tr = trajectory_net(noise, grid, phi_c, 0.0)
    shift = noise.gaussians.sum(axis=0) * math.sqrt(0.25)
    assert size(tr.net) == 2 + np.count_nonzero(shift)
    x = np.array([0.7, -1.1])
    assert np.allclose(eval_net(tr.net, x), x + shift)


def test_three_events_before_second_node():
    problem = get_preset("jump_state")
    phi_c = problem.coeff_net("c", 1.0 / 64).net
    grid = EulerGrid(1.0, 4)
    noise = frozen([[0.3], [-0.8], [1.1], [0.2]], [0.05, 0.2, 0.4], [[0.6], [-0.1], [1.3]], [0.5])
    nets = trajectory_nets(noise, grid, phi_c, 0.0, upto=2)
    for x0 in (-1.0, 0.0, 0.8):
        rec = simulate_path(0.0, [x0], grid, noise, phi_c)
        assert eval_net(nets[2].net, [x0])[0] == pytest.approx(rec.values[2, 0], abs=1e-12)
    for tr in nets:
        assert tr.size <= tr.general_bound


def test_flat_construction_agrees_with_general():
    problem = get_preset("jump_c2")
    phi_c = problem.coeff_net("c", 1.0 / 64).net
    grid = EulerGrid(1.0, 8)
    gen = np.random.default_rng(4)
    noise = frozen(gen.standard_normal((8, 1)), [0.1, 0.55, 0.56], gen.standard_normal((3, 1)), [0.5])
    gen_nets = trajectory_nets(noise, grid, phi_c, 0.25)
    flat_nets = trajectory_nets(noise, grid, phi_c, 0.25, state_independent=True)
    xs = np.linspace(-2, 2, 5)[:, None]
    for a, b in zip(gen_nets, flat_nets):
        assert np.allclose(eval_net(a.net, xs), eval_net(b.net, xs), atol=1e-12)
    assert all(tr.net.depth == 1 for tr in flat_nets)


def test_flat_construction_needs_state_free_phi_c():
    problem = get_preset("jump_state")
    phi_c = problem.coeff_net("c", 1.0 / 64).net
    noise = frozen([[0.0]] * 4, [], [], [0.5])
    with pytest.raises(ValueError):
        trajectory_nets(noise, EulerGrid(1.0, 4), phi_c, 0.0, state_independent=True)


def test_time_grid_net_uses_nearest_node():
    nodes = np.array([0.0, 0.5, 1.0])
    members = [lift_time(constant_net(1, [float(j)])) for j in range(3)]
    fam = TimeGridNet(nodes, members)
    tx = np.array([[0.1, 3.0], [0.3, 3.0], [0.9, 3.0]])
    assert np.array_equal(fam(tx), [0.0, 1.0, 2.0])


def test_selection_with_infinite_budget_takes_first_batch():
    problem = get_preset("jump_c2")
    cfg = EstimatorConfig(5, 4, master_seed=1)
    sel = select_noise_batch(problem, cfg, "terminal", budget=math.inf)
    assert sel.attempt == 0


def test_selection_running_component_trivial_without_running_cost():
    problem = get_preset("heat")
    sel = select_noise_batch(problem, EstimatorConfig(5, 4, 0.05, 0.05), "running")
    assert sel.attempt == 0 and sel.criterion == 0.0


def test_selection_gives_up_with_best_batch():
    problem = get_preset("heat")
    cfg = EstimatorConfig(3, 4, 0.05, 0.05)
    with pytest.raises(BatchSelectionError) as info:
        select_noise_batch(problem, cfg, "terminal", budget=1e-12, max_retries=3)
    assert info.value.best_batch is not None


def test_selection_criterion_zero_for_exact_reference():
    problem = get_preset("source")
    cfg = EstimatorConfig(4, 4, 0.05, 0.05)
    probes = selection_probes(problem, 0, 16)
    # the running estimate of a constant source equals level * (T - t) on every batch
    batch = sample_batch(cfg.grid(problem), problem.measure, 4, 0)
    assert selection_criterion(problem, cfg, batch, "running", probes) < 1e-24


@pytest.mark.parametrize("name", ["source", "jump_state"])
def test_built_network_equals_estimator(name):
    problem = get_preset(name)
    cfg = EstimatorConfig(4, 4, 0.05, 0.05, (1.0 / 4) ** 2, master_seed=2)
    sol = build_solution(problem, cfg, select=False)
    assert not sol.hard_failures
    grid = cfg.grid(problem)
    x = np.array([[0.3], [-0.6]])
    for j, t in enumerate(grid.nodes):
        want = (terminal_on_batch(sol.batches["terminal"], grid, t, x, sol.coeff_reports["c"].net,
                                  sol.coeff_reports["g"].net).mean(axis=1)
                + running_on_batch(sol.batches["running"], grid, t, x, sol.coeff_reports["c"].net,
                                   sol.coeff_reports["b"].net).mean(axis=1))
        got = sol.phi(np.column_stack([np.full(2, t), x]))
        assert np.allclose(got, want, rtol=1e-9, atol=1e-9)
    assert all(c.satisfied for c in sol.checks if c.label.startswith("size(phi)"))
    manifest = sol.manifest()
    assert manifest["config"]["M"] == 4


def test_batch_from_single_noise_matches_path():
    problem = get_preset("jump_state")
    noise = frozen([[0.3], [0.1]], [0.7], [[0.2]], problem.measure.mean_mark)
    grid = EulerGrid(1.0, 2)
    batch = NoiseBatch.from_noises([noise])
    v = terminal_on_batch(batch, grid, 0.0, np.array([[0.0]]), problem.jump, lambda x: x[:, 0])
    rec = simulate_path(0.0, [0.0], grid, noise, problem.jump)
    assert v[0, 0] == pytest.approx(rec.values[-1, 0])
