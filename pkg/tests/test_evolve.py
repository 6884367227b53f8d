import warnings

import numpy as np
import pytest
import scipy.linalg

from ticksim import evolve
from ticksim.clockmodel import RegisterMode, ladder_clock
from ticksim.errors import DomainError, ValidationError
from ticksim.evolve import (
    Propagator,
    TimeGrid,
    cascade,
    channel_at,
    check_condition3,
    check_condition4,
    euler_channel,
    joint_input,
    propagate,
    register_block,
    register_marginal,
    self_timing_check,
)
from ticksim.qcore import basis_projector, lindblad_superop, random_density

from conftest import random_spec


def test_time_grid():
    g = TimeGrid.span(2.0, 4)
    assert g.dt == 0.5 and np.allclose(g.times, [0, 0.5, 1, 1.5, 2])
    with pytest.raises(ValidationError):
        TimeGrid(0.0, -1.0, 3)
    with pytest.raises(ValidationError):
        TimeGrid(0.0, 0.1, 0)


def test_propagate_zero_time_and_negative(rng):
    spec = random_spec(rng, d=2, n_ticks=1)
    rho = random_density(2, rng)
    assert np.array_equal(propagate(spec.generators.clockwork, rho, 0.0), rho)
    with pytest.raises(DomainError):
        propagate(spec.generators.clockwork, rho, -1.0)


def test_propagate_amplitude_damping():
    gen = lindblad_superop(np.zeros((2, 2)), [[[0, 1], [0, 0]]])
    out = propagate(gen, np.diag([0.0, 1.0]), np.log(2))
    assert np.allclose(np.diag(out).real, [0.5, 0.5], atol=1e-14)


def test_propagate_matches_scipy(rng):
    spec = random_spec(rng, d=3, n_ticks=2)
    gen = spec.generators.full
    rho = joint_input(spec, spec.rho_c0, 0)
    ref = (scipy.linalg.expm(0.8 * gen.mat) @ rho.reshape(-1, order="F")).reshape(rho.shape, order="F")
    assert np.allclose(propagate(gen, rho, 0.8), ref, atol=1e-12)


def test_semigroup_law_all_generators():
    rng = np.random.default_rng(5)
    spec = random_spec(rng, d=3, n_ticks=2)
    for which in ("full", "clockwork", "no_tick"):
        for t1, t2 in rng.uniform(0, 2, size=(10, 2)):
            assert self_timing_check(spec, t1, t2, 1e-9, which=which).passed


def test_self_timing_examples(rng):
    spec = random_spec(rng, d=3, n_ticks=2)
    assert self_timing_check(spec, 0.5, 0.5).max_deviation <= 1e-10
    assert self_timing_check(spec, 0.0, 0.9).max_deviation <= 1e-12
    assert self_timing_check(spec, 0.3, 1.7, 1e-9).passed
    with pytest.raises(DomainError):
        self_timing_check(spec, -0.1, 0.2)


def test_rk4_fallback_matches_exponential(monkeypatch, rng):
    spec = random_spec(rng, d=3, n_ticks=2)
    rho = joint_input(spec, spec.rho_c0, 1)
    exact = propagate(spec.generators.full, rho, 0.7)
    monkeypatch.setattr(evolve, "RK4_DIM_THRESHOLD", 1)
    approx = propagate(spec.generators.full, rho, 0.7)
    assert np.max(np.abs(approx - exact)) <= 1e-9


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_cutoff_full_register_stays_full(t):
    spec = ladder_clock(2, n_ticks=2)
    out = channel_at(spec, t, 2)
    assert np.max(np.abs(register_marginal(spec, out) - basis_projector(3, 2))) <= 1e-12


def test_periodic_translation_invariance(rng):
    spec = random_spec(rng, mode=RegisterMode.PERIODIC, d=2, n_ticks=2)
    rho = random_density(2, rng)
    r = spec.n_register
    base = channel_at(spec, 0.9, 0, rho)
    for k in range(1, r):
        out = channel_at(spec, 0.9, k, rho)
        for n in range(r):
            for m in range(r):
                a = register_block(spec, out, (n + k) % r, (m + k) % r)
                assert np.allclose(a, register_block(spec, base, n, m), atol=1e-10)


def test_channel_at_zero_time(rng):
    spec = random_spec(rng, d=2, n_ticks=2)
    rho = random_density(2, rng)
    assert np.allclose(channel_at(spec, 0.0, 1, rho), np.kron(rho, basis_projector(3, 1)))
    with pytest.raises(DomainError):
        channel_at(spec, 1.0, 3, rho)


def test_euler_single_step_is_identity_plus_generator(rng):
    spec = random_spec(rng, d=2, n_ticks=2)
    dt = 1e-6
    step = euler_channel(spec, dt, 0)
    rho = joint_input(spec, random_density(2, rng), 0)
    lhs = step(rho)
    rhs = rho + dt * spec.generators.full(rho)
    assert np.max(np.abs(lhs - rhs)) <= 1e-15


def test_euler_never_skips_a_tick(rng):
    spec = random_spec(rng, mode=RegisterMode.PERIODIC, d=2, n_ticks=3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        step = euler_channel(spec, 0.5, 1)
    out = step(joint_input(spec, random_density(2, rng), 1))
    for n in (0, 3):
        assert not np.any(register_block(spec, out, n))


def test_euler_coarse_step_warns(rng):
    spec = random_spec(rng, d=2, n_ticks=1)
    with pytest.warns(UserWarning):
        euler_channel(spec, 10.0)


def test_euler_first_order_convergence():
    spec = ladder_clock(2, n_ticks=2)
    exact = channel_at(spec, 1.0, 0)
    rho = joint_input(spec, spec.rho_c0, 0).reshape(-1, order="F")
    errors = []
    for n in (64, 128, 256):
        m = euler_channel(spec, 1.0 / n).mat
        out = np.linalg.matrix_power(m, n) @ rho
        errors.append(np.max(np.abs(out.reshape(exact.shape, order="F") - exact)))
    for coarse, fine in zip(errors, errors[1:]):
        assert 1.5 <= coarse / fine <= 2.5


def test_cascade_ladder_d1_decay():
    spec = ladder_clock(1, n_ticks=3)
    grid = TimeGrid.span(5.0, 500)
    states = cascade(spec, grid)
    p0 = np.array([s.traces[0] for s in states])
    assert np.max(np.abs(p0 - np.exp(-grid.times))) <= 1e-9
    for s in states:
        assert abs(s.traces.sum() - 1.0) <= 1e-9


def test_cascade_absorbs_at_large_time():
    spec = ladder_clock(2, n_ticks=3)
    t = 50 * 3 * 2
    last = cascade(spec, TimeGrid.span(t, 300))[-1]
    assert 1 - last.traces[3] < 1e-6


def test_cascade_matches_channel_blocks():
    rng = np.random.default_rng(8)
    for mode in (RegisterMode.PERIODIC, RegisterMode.CUTOFF):
        spec = random_spec(rng, mode=mode, d=2, n_ticks=2)
        grid = TimeGrid.span(1.5, 6)
        prop = Propagator(spec.generators.full)
        x0 = joint_input(spec, spec.rho_c0, spec.k0)
        for state in cascade(spec, grid):
            joint = prop.apply(x0, state.time)
            for n, block in enumerate(state.blocks):
                assert np.max(np.abs(block - register_block(spec, joint, n))) <= 1e-10
                for m in range(spec.n_register):
                    if m != n:
                        assert np.max(np.abs(register_block(spec, joint, n, m))) <= 1e-12


def test_condition3_holds(rng):
    for _ in range(3):
        rep = check_condition3(random_spec(rng))
        assert rep.passed and rep.max_deviation == 0.0


def test_condition4_window_on_random_specs():
    rng = np.random.default_rng(21)
    for _ in range(3):
        spec = random_spec(rng, d=2, n_ticks=3)
        assert check_condition4(spec, samples=2, allow_faster=False).passed


def test_condition4_ladder_vanishes_faster_than_linear():
    spec = ladder_clock(2, n_ticks=3)
    assert check_condition4(spec, samples=2).passed
    assert not check_condition4(spec, samples=2, allow_faster=False).passed


def test_condition4_denominator_underflow_is_reported_not_failed():
    # next-tick probabilities O(1e-5) sit below a floor of 1e-3
    spec = ladder_clock(3, n_ticks=3)
    rep = check_condition4(spec, samples=1, deltas=(1e-5, 5e-6), floor=1e-3)
    assert rep.passed
    assert any("underflow" in w[0] for w in rep.witnesses)
