import math
import warnings

import numpy as np
import pytest

from ticksim.clockmodel import (
    ClockSpec,
    RegisterMode,
    build_register_shift,
    canonicalize_jumps,
    ladder_clock,
    quasi_ideal_clock,
    quasi_ideal_overlap,
    thermo_top_projector,
    thermodynamic_clock,
)
from ticksim.errors import NeverTicksError, ValidationError
from ticksim.evolve import TimeGrid, joint_input
from ticksim.qcore import (
    Superoperator,
    choi_matrix,
    is_psd,
    lindblad_superop,
    matrix_exp,
    partial_trace,
    random_density,
    sandwich_superop,
    trace_row,
    unvec,
    vec,
)
from ticksim.tickstats import delay_function

from conftest import random_op, random_spec


def test_register_shift_examples():
    assert np.array_equal(build_register_shift(2, "periodic"), [[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    assert np.array_equal(build_register_shift(2, "cutoff"), [[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    assert np.array_equal(build_register_shift(1, RegisterMode.PERIODIC), [[0, 1], [1, 0]])


@pytest.mark.parametrize("n_ticks", [1, 2, 5])
def test_register_shift_powers(n_ticks):
    per = build_register_shift(n_ticks, "periodic").real.astype(int)
    cut = build_register_shift(n_ticks, "cutoff").real.astype(int)
    assert np.array_equal(np.linalg.matrix_power(per, n_ticks + 1), np.eye(n_ticks + 1, dtype=int))
    assert not np.any(np.linalg.matrix_power(cut, n_ticks + 1))


def test_mode_parse():
    assert RegisterMode.parse("Cut-Off") is RegisterMode.CUTOFF
    with pytest.raises(ValidationError):
        RegisterMode.parse("spiral")


def test_decomposition_clockwork_equals_no_tick_plus_tick():
    rng = np.random.default_rng(3)
    for _ in range(10):
        g = random_spec(rng, n_l=2, n_j=2).generators
        assert np.max(np.abs(g.clockwork.mat - (g.no_tick.mat + g.tick.mat))) <= 1e-13


def test_tick_map_completely_positive(rng):
    for _ in range(5):
        g = random_spec(rng, n_j=3).generators
        ok, lo = is_psd(choi_matrix(g.tick), 1e-10)
        assert ok, lo


def test_no_tick_scalar_decay():
    spec = ClockSpec(d=2, n_ticks=1, mode="cutoff", h=np.zeros((2, 2)), j_ops=(np.eye(2),),
                     rho_c0=np.eye(2) / 2)
    rho = np.array([[0.7, 0.1j], [-0.1j, 0.3]])
    for t in (0.0, 0.4, 2.0):
        out = unvec(matrix_exp(t * spec.generators.no_tick.mat) @ vec(rho))
        assert np.allclose(out, np.exp(-t) * rho, atol=1e-14)


def test_h_eff_definition(rng):
    spec = random_spec(rng, d=3, n_l=2, n_j=2)
    g = spec.generators
    expected = spec.h - 0.5j * sum(op.conj().T @ op for op in spec.l_ops + spec.j_ops)
    assert np.allclose(g.h_eff, expected, atol=1e-14)


def test_clockwork_generator_is_register_traced_full(rng):
    spec = random_spec(rng, mode=RegisterMode.PERIODIC, d=2, n_ticks=2)
    g = spec.generators
    d, r = spec.d, spec.n_register
    for k in range(r):
        rho = random_density(d, rng)
        lhs = partial_trace(g.full(joint_input(spec, rho, k)), [d, r], keep=[0])
        assert np.allclose(lhs, g.clockwork(rho), atol=1e-12)


def test_full_generator_structure(rng):
    spec = random_spec(rng, d=2, n_ticks=2)
    eye_r = np.eye(spec.n_register)
    shift = build_register_shift(spec.n_ticks, spec.mode)
    ops = [np.kron(l, eye_r) for l in spec.l_ops] + [np.kron(j, shift) for j in spec.j_ops]
    expected = lindblad_superop(np.kron(spec.h, eye_r), ops)
    assert np.array_equal(spec.generators.full.mat, expected.mat)
    assert np.max(np.abs(trace_row(spec.joint_dim) @ spec.generators.full.mat)) <= 1e-12


def test_full_channel_cptp_for_builtin_clocks():
    specs = [ladder_clock(3, n_ticks=2), quasi_ideal_clock(4, n_ticks=1),
             thermodynamic_clock({"d": 2}, n_ticks=1, mode="periodic")]
    for spec in specs:
        gen = spec.generators.full
        tr = trace_row(gen.dim)
        for t in (0.1, 1.0):
            m = matrix_exp(t * gen.mat)
            ok, lo = is_psd(choi_matrix(Superoperator(gen.dim, m)), 1e-9)
            assert ok, (spec.name, t, lo)
            assert np.max(np.abs(tr @ m - tr)) <= 1e-10


def test_validation_errors():
    z = np.zeros((2, 2))
    with pytest.raises(NeverTicksError):
        ClockSpec(d=2, n_ticks=1, mode="cutoff", h=z, l_ops=(np.eye(2),), j_ops=(z,), rho_c0=np.eye(2) / 2)
    with pytest.raises(NeverTicksError):
        ClockSpec(d=2, n_ticks=1, mode="cutoff", h=z, rho_c0=np.eye(2) / 2)
    with pytest.raises(ValidationError):
        ClockSpec(d=2, n_ticks=1, mode="cutoff", h=[[0, 1], [0, 0]], j_ops=(np.eye(2),), rho_c0=np.eye(2) / 2)
    with pytest.raises(ValidationError):
        ClockSpec(d=2, n_ticks=1, mode="cutoff", h=z, j_ops=(np.eye(2),), rho_c0=np.eye(2) / 2, k0=2)
    with pytest.raises(ValidationError):
        ladder_clock(0)
    never = ClockSpec(d=2, n_ticks=1, mode="cutoff", h=z, j_ops=(z,), rho_c0=np.eye(2) / 2,
                      allow_never_tick=True)
    assert not np.any(never.generators.tick.mat)


def test_canonicalize_duplicate():
    j = np.array([[0.3, 1.0j], [0.2, -0.5]])
    out = canonicalize_jumps([j, j], 2)
    assert len(out) == 1
    phase = out[0][0, 0] / (math.sqrt(2) * j[0, 0])
    assert abs(abs(phase) - 1) < 1e-12
    assert np.allclose(out[0], phase * math.sqrt(2) * j, atol=1e-12)


def test_canonicalize_zero_and_empty():
    assert canonicalize_jumps([np.zeros((2, 2))], 2) == []
    assert canonicalize_jumps([], 2) == []


def test_canonicalize_preserves_map(rng):
    for n_ops in (1, 4, 9):
        ops = [random_op(rng, 2) for _ in range(n_ops)]
        out = canonicalize_jumps(ops, 2)
        assert len(out) <= min(n_ops, 4)
        diff = sandwich_superop(out, 2).mat - sandwich_superop(ops, 2).mat
        assert np.max(np.abs(diff)) <= 1e-10


def test_ladder_structure():
    spec = ladder_clock(4)
    assert np.array_equal(spec.h, np.zeros((4, 4)))
    assert len(spec.l_ops) == 3 and len(spec.j_ops) == 1
    assert spec.j_ops[0][0, 3] == 1 and spec.rho_c0[0, 0] == 1
    single = ladder_clock(1)
    assert single.l_ops == () and np.array_equal(single.j_ops[0], [[1]])
    assert np.linalg.matrix_rank(choi_matrix(spec.generators.tick)) == 1


def _thermo_reference_no_tick(spec, gamma, d):
    """-i(H_eff rho - rho H_eff^+) + sum_j L rho L^+ - {L^+L, rho}/2, built independently."""
    n = spec.d
    eye = np.eye(n)
    h_eff = spec.h - 0.5j * gamma * thermo_top_projector(d)
    mat = -1j * (np.kron(eye, h_eff) - np.kron(h_eff.conj(), eye))
    for l in spec.l_ops:
        ll = l.conj().T @ l
        mat += np.kron(l.conj(), l) - 0.5 * (np.kron(eye, ll) + np.kron(ll.T, eye))
    return mat


def test_thermo_no_tick_effective_hamiltonian_form():
    rng = np.random.default_rng(11)
    for _ in range(3):
        params = {k: float(rng.uniform(0.2, 2.0)) for k in
                  ("E_h", "E_c", "gamma_h", "gamma_c", "g", "Gamma")}
        params.update(beta_h=float(rng.uniform(0.05, 0.5)), beta_c=float(rng.uniform(1.0, 3.0)), d=3)
        spec = thermodynamic_clock(params)
        ref = _thermo_reference_no_tick(spec, params["Gamma"], 3)
        assert np.max(np.abs(spec.generators.no_tick.mat - ref)) <= 1e-12


def test_thermo_structure():
    spec = thermodynamic_clock()
    assert spec.d == 12 and len(spec.l_ops) == 4 and len(spec.j_ops) == 1
    assert np.allclose(spec.h, spec.h.conj().T)
    top = thermo_top_projector(3)
    rho = top / np.trace(top)
    rate = np.trace(spec.generators.tick_rate_op @ rho).real
    assert rate == pytest.approx(1.0)
    with pytest.warns(UserWarning):
        thermodynamic_clock({"beta_h": 3.0, "beta_c": 1.0})
    with pytest.raises(ValidationError):
        thermodynamic_clock({"Gamma": 0.0})


def test_thermo_without_interaction_never_ticks_early():
    spec = thermodynamic_clock({"g": 0.0, "d": 3, "Gamma": 2.0}, n_ticks=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        df = delay_function(spec, 1, TimeGrid.span(10 / 2.0, 200))
    assert df.mass < 1e-6


def test_quasi_ideal_structure():
    d = 8
    spec = quasi_ideal_clock(d)
    assert np.allclose(spec.h, spec.h.conj().T)
    evals = np.sort(np.linalg.eigvalsh(spec.h))
    assert np.allclose(evals, 2 * np.pi / d * np.arange(d), atol=1e-12)
    assert spec.l_ops == ()
    # H generates the cyclic shift |t_j> -> |t_{j+1}> over one unit of time
    u = matrix_exp(-1j * spec.h)
    assert np.allclose(np.abs(u), np.roll(np.eye(d), 1, axis=0), atol=1e-12)


def test_quasi_ideal_overlap_far_apart():
    d = 40
    params = {"j0": 0.0, "jV": 20.0, "sigma": 2.0, "sigma_V": 2.0}
    assert quasi_ideal_overlap(d, params) < 1e-6 * (d / (2 * math.pi))


def test_quasi_ideal_reset_and_non_reset_first_tick_agree():
    grid = TimeGrid.span(30.0, 600)
    a = delay_function(quasi_ideal_clock(6, reset=True, n_ticks=1), 1, grid)
    b = delay_function(quasi_ideal_clock(6, reset=False, n_ticks=1), 1, grid)
    assert np.max(np.abs(a.density - b.density)) <= 1e-10


def test_quasi_ideal_validation():
    with pytest.raises(NeverTicksError):
        quasi_ideal_clock(8, {"V0": 0.0})
    with pytest.raises(ValidationError):
        quasi_ideal_clock(8, {"sigma": 0.0})
    with pytest.raises(ValidationError):
        quasi_ideal_clock(8, {"bogus": 1.0})


def test_canonicalize_generic_set_keeps_full_choi_rank():
    # generic operators give a rank-d^2 Choi matrix, so d^2 operators are needed
    rng = np.random.default_rng(12)
    ops = [random_op(rng, 2) for _ in range(9)]
    rank = np.linalg.matrix_rank(choi_matrix(sandwich_superop(ops, 2)), tol=1e-10)
    assert rank == 4
    assert len(canonicalize_jumps(ops, 2)) == rank
