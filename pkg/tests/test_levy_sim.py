import math

import numpy as np
import pytest

from pidenet import rng as rngmod
from pidenet.levy_sim import (
    EulerGrid, FrozenNoise, JumpCoefficient, NoiseBatch, check_state_independent, coarsen_noise,
    dump_noise, gaussian_measure, load_noise, moment_check_increment, moment_check_xnorm,
    no_jumps, run_scheme, sample_batch, sample_block, sample_noise, simulate_path,
)
from pidenet.presets import get_preset


def hand_loop(noise, grid, t, x, c):
    # direct transcription of the scheme for one path
    bounds = grid.boundaries(t)
    X = np.array(x, dtype=float)
    out = [X.copy()]
    for k in range(len(bounds) - 1):
        s, e = bounds[k], bounds[k + 1]
        step = noise.gaussians[k] * math.sqrt(e - s)
        for tau, mark in zip(noise.event_times, noise.marks):
            if s < tau <= e:
                step = step + c(np.array([s]), X[None, :], (mark - noise.mean_mark)[None, :])[0]
        X = X + step
        out.append(X.copy())
    return np.array(out)


def jump_fn(t, x, z):
    return z + 0.5 * np.sin(x) + 0.3 * t[:, None]


def test_scheme_matches_hand_loop():
    grid = EulerGrid(1.0, 16)
    measure = gaussian_measure(3.0, 0.25, 0.5, 2)
    for seed in range(10):
        noise = sample_noise(grid, measure, seed)
        for t in (0.0, 0.3, 0.5):
            rec = simulate_path(t, [0.2, -0.4], grid, noise, jump_fn)
            want = hand_loop(noise, grid, t, [0.2, -0.4], jump_fn)
            assert np.allclose(rec.values, want, rtol=0, atol=1e-13)


def test_start_at_node_uses_grid_steps():
    grid = EulerGrid(2.0, 8)
    b = grid.boundaries(0.5)
    assert np.allclose(b, grid.nodes[2:])
    b = grid.boundaries(0.6)
    assert b[0] == 0.6 and np.allclose(b[1:], grid.nodes[3:])
    with pytest.raises(ValueError):
        grid.boundaries(2.5)


def test_path_from_node_agrees_with_grid_values():
    # a path started at a later node reuses the Gaussians of the steps it executes
    grid = EulerGrid(1.0, 8)
    noise = sample_noise(grid, no_jumps(1), 3)
    rec = simulate_path(0.5, [1.0], grid, noise, jump_fn)
    incr = np.cumsum(noise.gaussians[:4, 0]) * math.sqrt(grid.dt)
    assert np.allclose(rec.values[1:, 0], 1.0 + incr)


def test_refinement_factor_one_is_identity():
    grid = EulerGrid(1.0, 8)
    batch = sample_block(grid, gaussian_measure(1.0, 0.0, 1.0, 1), 5, np.random.default_rng(0))
    assert coarsen_noise(batch, 1) is batch


def test_coarsening_preserves_gaussian_sums():
    grid = EulerGrid(1.0, 16)
    batch = sample_block(grid, no_jumps(2), 50, np.random.default_rng(1))
    coarse = coarsen_noise(batch, 4)
    fine_incr = batch.gaussians.sum(axis=1) * math.sqrt(grid.dt)
    coarse_incr = coarse.gaussians.sum(axis=1) * math.sqrt(4 * grid.dt)
    assert np.allclose(fine_incr, coarse_incr)


def test_poisson_counts_moments():
    lam, T, n = 2.5, 1.2, 40_000
    grid = EulerGrid(T, 4)
    batch = sample_block(grid, gaussian_measure(lam, 0.0, 1.0, 1), n, np.random.default_rng(5))
    counts = batch.counts
    se = math.sqrt(lam * T / n)
    assert abs(counts.mean() - lam * T) < 4 * se
    assert abs(counts.var() - lam * T) < 0.05 * lam * T


def test_marks_law_of_large_numbers():
    measure = gaussian_measure(2.0, [0.25, -0.5], 0.5, 2)
    gen = np.random.default_rng(2)
    marks = measure.sample_marks(gen, 200_000)
    assert np.allclose(measure.lam * marks.mean(axis=0), measure.mean_mark, atol=0.01)
    second = measure.lam * np.mean(np.sum(marks**2, axis=1))
    assert abs(second - measure.mark_second_moment) < 0.02 * measure.mark_second_moment


def test_gaussian_moments_of_pure_diffusion():
    grid = EulerGrid(1.0, 10)
    batch = sample_block(grid, no_jumps(1), 100_000, np.random.default_rng(3))
    _, X = run_scheme(batch, grid, 0.25, [0.5], jump_fn)
    xs = X[0, :, 0]
    assert abs(xs.mean() - 0.5) < 4 * math.sqrt(0.75 / len(xs))
    assert abs(xs.var() - 0.75) < 0.02


def test_state_independent_scheme_is_affine_in_x():
    problem = get_preset("jump_c2", 2)
    grid = EulerGrid(problem.T, 8)
    batch = sample_block(grid, problem.measure, 20, np.random.default_rng(4), 2)
    x0, x1 = np.zeros(2), np.array([1.3, -0.7])
    _, X = run_scheme(batch, grid, 0.0, np.vstack([x0, x1]), problem.jump)
    assert np.allclose(X[1] - X[0], x1 - x0)


def test_check_state_independent():
    gen = np.random.default_rng(0)
    assert check_state_independent(get_preset("jump_c2").jump, 1, 1, 1.0, gen)
    assert not check_state_independent(get_preset("jump_state").jump, 1, 1, 1.0, gen)


def test_jump_coefficient_validation():
    with pytest.raises(ValueError):
        JumpCoefficient(jump_fn, 1.0, 1.0, 1.5)


def test_batch_seeds_are_reproducible():
    grid = EulerGrid(1.0, 4)
    m = gaussian_measure(2.0, 0.0, 1.0, 1)
    a = sample_batch(grid, m, 6, 42, (rngmod.TERMINAL, 0))
    b = sample_batch(grid, m, 6, 42, (rngmod.TERMINAL, 0))
    c = sample_batch(grid, m, 6, 42, (rngmod.TERMINAL, 1))
    assert np.array_equal(a.gaussians, b.gaussians) and np.array_equal(a.ev_time, b.ev_time)
    assert not np.array_equal(a.gaussians, c.gaussians)
    assert a.seeds[3] == rngmod.derive_seed(42, rngmod.TERMINAL, 0, 3)


def test_batch_round_trips_through_noises():
    grid = EulerGrid(1.0, 4)
    batch = sample_batch(grid, gaussian_measure(3.0, 0.0, 1.0, 1), 5, 7)
    again = NoiseBatch.from_noises(batch.noises())
    assert np.array_equal(again.ev_mark, batch.ev_mark)
    assert np.array_equal(again.counts, batch.counts)


def test_noise_dump_round_trip():
    noise = sample_noise(EulerGrid(1.0, 5), gaussian_measure(4.0, 0.25, 0.5, 2), 11)
    back = load_noise(dump_noise(noise))
    assert np.array_equal(back.gaussians, noise.gaussians)
    assert np.array_equal(back.event_times, noise.event_times)
    assert np.array_equal(back.marks, noise.marks)
    assert back.seed == noise.seed


def test_frozen_noise_count():
    noise = FrozenNoise(np.zeros((2, 1)), np.array([0.1, 0.5, 0.9]), np.zeros((3, 1)), 0, 1.0,
                        np.zeros(1))
    assert noise.count(0.0, 0.5) == 2
    assert noise.count(0.5, 1.0) == 1


def test_compensator_mode_needs_compensator():
    grid = EulerGrid(1.0, 4)
    batch = sample_block(grid, gaussian_measure(1.0, 0.0, 1.0, 1), 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_scheme(batch, grid, 0.0, [0.0], jump_fn, mode="compensator")


def test_moment_checks_are_bounded():
    problem = get_preset("jump_state")
    rep = moment_check_xnorm(problem, 4000, seed=1)
    assert 1.0 < rep.K < 10.0
    inc = moment_check_increment(problem, 4000, seed=1)
    assert abs(inc.slope - 1.0) < 0.3
