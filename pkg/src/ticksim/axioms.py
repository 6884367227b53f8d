"""Executable checks of the ticking-clock axioms on concrete clocks.

Every check returns a :class:`VerificationReport`. Universally quantified
statements are tested on seeded random clockwork states.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clockmodel import ClockSpec, RegisterMode
from .errors import DomainError, ModeError, ResourceError, ValidationError
from .evolve import (
    Propagator,
    TimeGrid,
    _joint_indices,
    check_condition3,
    check_condition4,
    joint_input,
    register_block,
    register_marginal,
    self_timing_check,
)
from .qcore import (
    Superoperator,
    basis_projector,
    check_density,
    choi_matrix,
    dagger,
    is_psd,
    kron,
    matrix_exp,
    partial_trace,
    random_density,
    trace_norm_hermitian,
    trace_row,
)
from .report import VerificationReport

DEFAULT_SAMPLES = 20
ENUMERATION_BUDGET = 10**6

__all__ = [
    "MeasurementSequence",
    "check_condition1",
    "check_condition3",
    "check_condition4",
    "check_condition5",
    "check_classical_register",
    "check_classical_clockwork",
    "check_k_independence",
    "check_semigroup",
    "check_cptp",
    "measured_channel",
    "check_measured_equivalence",
    "check_finite_running_memory",
    "run_all_checks",
    "self_timing_check",
]


@dataclass(frozen=True)
class MeasurementSequence:
    """Register outcomes l_n observed after waiting t_n, in order."""

    outcomes: tuple

    def __post_init__(self):
        clean = []
        for pair in self.outcomes:
            l, t = pair
            if int(l) != l or l < 0:
                raise ValidationError(f"outcome index {l!r} must be a non-negative integer")
            if not (math.isfinite(t) and t >= 0):
                raise ValidationError(f"waiting time {t!r} must be finite and non-negative")
            clean.append((int(l), float(t)))
        object.__setattr__(self, "outcomes", tuple(clean))

    @property
    def total_time(self) -> float:
        return float(sum(t for _, t in self.outcomes))

    def __len__(self) -> int:
        return len(self.outcomes)


def _evolver(spec: ClockSpec, generator: Superoperator | None) -> Propagator:
    gen = spec.generators.full if generator is None else generator
    if gen.dim != spec.joint_dim:
        raise ValidationError(f"generator acts on dim {gen.dim}, clock joint space is {spec.joint_dim}")
    return Propagator(gen)


def _states(spec: ClockSpec, samples: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [random_density(spec.d, rng) for _ in range(samples)]


def check_condition1(
    spec: ClockSpec,
    t: float,
    samples: int = DEFAULT_SAMPLES,
    tol: float = 1e-10,
    *,
    seed: int = 0,
    generator: Superoperator | None = None,
) -> VerificationReport:
    """Translation invariance: <k+l| M^{t,k}(rho) |k+l> does not depend on k.

    In cut-off mode only targets below the absorbing state are compared.
    ``generator`` replaces the joint generator, e.g. to test hand-built ones.
    """
    if t < 0:
        raise DomainError("t must be non-negative")
    prop = _evolver(spec, generator)
    r = spec.n_register
    periodic = spec.mode is RegisterMode.PERIODIC
    worst, witnesses = 0.0, []
    for i, rho in enumerate(_states(spec, samples, seed)):
        outs = [prop.apply(joint_input(spec, rho, k), t) for k in range(r)]
        for l in range(r):
            ref = None
            for k in range(r):
                target = (k + l) % r if periodic else k + l
                if target >= (r if periodic else spec.n_ticks):
                    continue
                block = register_block(spec, outs[k], target)
                if ref is None:
                    ref = (k, block)
                    continue
                dev = float(np.max(np.abs(block - ref[1])))
                if dev > worst:
                    worst = dev
                if dev > tol:
                    witnesses.append((f"sample {i}, l={l}, k={ref[0]} vs k={k}", dev))
    return VerificationReport("condition1", worst <= tol, worst, tol, tuple(witnesses))


def check_condition5(
    spec: ClockSpec, times: Sequence[float], tol: float = 1e-12, *,
    samples: int = DEFAULT_SAMPLES, seed: int = 0,
) -> VerificationReport:
    """A full cut-off register stays full: register marginal of M^{t,N_T} is |N_T><N_T|."""
    if spec.mode is not RegisterMode.CUTOFF:
        raise ModeError("condition 5 applies to cut-off registers only")
    prop = _evolver(spec, None)
    top = basis_projector(spec.n_register, spec.n_ticks)
    worst, witnesses = 0.0, []
    for t in times:
        if t < 0:
            raise DomainError("times must be non-negative")
        for i, rho in enumerate(_states(spec, samples, seed)):
            out = prop.apply(joint_input(spec, rho, spec.n_ticks), t)
            dev = float(np.max(np.abs(register_marginal(spec, out) - top)))
            worst = max(worst, dev)
            if dev > tol:
                witnesses.append((f"t={t:g}, sample {i}", dev))
    return VerificationReport("condition5", worst <= tol, worst, tol, tuple(witnesses))


def check_classical_register(
    spec: ClockSpec, t: float, tol: float = 1e-12, *,
    samples: int = DEFAULT_SAMPLES, seed: int = 0, generator: Superoperator | None = None,
) -> VerificationReport:
    """Register-diagonal inputs never acquire register coherences <n|.|m>, n != m."""
    if t < 0:
        raise DomainError("t must be non-negative")
    prop = _evolver(spec, generator)
    r = spec.n_register
    worst, witnesses = 0.0, []
    for i, rho in enumerate(_states(spec, samples, seed)):
        for k in range(r):
            out = prop.apply(joint_input(spec, rho, k), t)
            for n, m in itertools.permutations(range(r), 2):
                dev = float(np.max(np.abs(register_block(spec, out, n, m))))
                worst = max(worst, dev)
                if dev > tol:
                    witnesses.append((f"sample {i}, k={k}, block ({n},{m})", dev))
    return VerificationReport("classical_register", worst <= tol, worst, tol, tuple(witnesses))


def check_classical_clockwork(
    spec: ClockSpec, basis, grid: TimeGrid, tol: float = 1e-12,
) -> VerificationReport:
    """Clockwork marginal stays diagonal in ``basis`` (columns) at every grid time."""
    b = np.asarray(basis, dtype=complex)
    if b.shape != (spec.d, spec.d):
        raise ValidationError(f"basis must be {spec.d}x{spec.d}, got {b.shape}")
    unitarity = float(np.max(np.abs(dagger(b) @ b - np.eye(spec.d))))
    if unitarity > 1e-10:
        raise ValidationError(f"basis columns are not orthonormal (deviation {unitarity:.3e})")
    prop = Propagator(spec.generators.clockwork)
    step = prop.matrix(grid.dt)
    x = prop.matrix(grid.t0) @ spec.rho_c0.reshape(-1, order="F")
    mask = ~np.eye(spec.d, dtype=bool)
    worst, witnesses = 0.0, []
    for i, t in enumerate(grid.times):
        if i:
            x = step @ x
        rho = x.reshape(spec.d, spec.d, order="F")
        dev = float(np.max(np.abs((dagger(b) @ rho @ b)[mask]))) if spec.d > 1 else 0.0
        worst = max(worst, dev)
        if dev > tol:
            witnesses.append((f"t={t:g}", dev))
    return VerificationReport("classical_clockwork", worst <= tol, worst, tol, tuple(witnesses))


def check_k_independence(
    spec: ClockSpec, t: float = 1.0, tol: float = 1e-10, *,
    samples: int = 5, seed: int = 0,
) -> VerificationReport:
    """The clockwork dynamics do not depend on the register index.

    Periodic registers: tr_T exp(t L)(rho kron |k><k|) equals exp(t L_C) rho
    for every k. Cut-off registers stop ticking when full, so there the
    check is on the joint generator: for every k < N_T the register-diagonal
    block is the no-tick generator and the k -> k+1 block is the tick map.
    """
    bundle = spec.generators
    d, r = spec.d, spec.n_register
    worst, witnesses = 0.0, []
    if spec.mode is RegisterMode.PERIODIC:
        prop = Propagator(bundle.full)
        cw = Propagator(bundle.clockwork)
        for i, rho in enumerate(_states(spec, samples, seed)):
            ref = cw.apply(rho, t)
            for k in range(r):
                out = partial_trace(prop.apply(joint_input(spec, rho, k), t), [d, r], keep=[0])
                dev = float(np.max(np.abs(out - ref)))
                worst = max(worst, dev)
                if dev > tol:
                    witnesses.append((f"sample {i}, k={k}", dev))
    else:
        full = bundle.full.mat
        for k in range(spec.n_ticks):
            src = _joint_indices(d, r, k)
            stay = full[np.ix_(src, src)]
            move = full[np.ix_(_joint_indices(d, r, k + 1), src)]
            dev = max(
                float(np.max(np.abs(stay - bundle.no_tick.mat))),
                float(np.max(np.abs(move - bundle.tick.mat))),
            )
            worst = max(worst, dev)
            if dev > tol:
                witnesses.append((f"generator blocks at k={k}", dev))
    return VerificationReport("k_independence", worst <= tol, worst, tol, tuple(witnesses))


def check_semigroup(
    spec: ClockSpec, pairs: int = 10, tol: float = 1e-9, *, seed: int = 0, t_scale: float = 2.0,
) -> VerificationReport:
    """Divisibility of the full, clockwork and no-tick semigroups at random (t1, t2)."""
    rng = np.random.default_rng(seed)
    times = rng.uniform(0.0, t_scale, size=(pairs, 2))
    reports = [
        self_timing_check(spec, float(t1), float(t2), tol, which=which)
        for which in ("full", "clockwork", "no_tick")
        for t1, t2 in times
    ]
    return VerificationReport.merge("semigroup", reports, tol)


def check_cptp(
    spec: ClockSpec, times: Sequence[float] = (0.1, 1.0), psd_tol: float = 1e-9, tp_tol: float = 1e-10,
) -> VerificationReport:
    """exp(t L) has a positive semidefinite Choi matrix and preserves trace.

    The deviation is the larger of the negative Choi eigenvalue magnitude
    (relative to ``psd_tol``) and the trace defect (relative to ``tp_tol``),
    each scaled so the report tolerance is 1.
    """
    gen = spec.generators.full
    n = gen.dim
    tr = trace_row(n)
    worst, witnesses = 0.0, []
    for t in times:
        m = matrix_exp(t * gen.mat)
        _, lo = is_psd(choi_matrix(Superoperator(n, m)), psd_tol)
        tp = float(np.max(np.abs(tr @ m - tr)))
        score = max(max(0.0, -lo) / psd_tol, tp / tp_tol)
        worst = max(worst, score)
        if score > 1.0:
            witnesses.append((f"t={t:g}: min Choi eigenvalue {lo:.3e}, trace defect {tp:.3e}", score))
    return VerificationReport("cptp", worst <= 1.0, worst, 1.0, tuple(witnesses))


def _project(spec: ClockSpec, joint: np.ndarray, l: int) -> np.ndarray:
    p = kron(np.eye(spec.d), basis_projector(spec.n_register, l))
    return p @ joint @ p


def measured_channel(
    spec: ClockSpec, seq: MeasurementSequence, rho_c=None, k0: int | None = None,
    *, prop: Propagator | None = None,
) -> tuple[float, np.ndarray]:
    """Probability of observing ``seq`` and the conditional joint state.

    The register is measured in its basis after each waiting time. A
    zero-probability sequence returns ``(0.0, zeros)``.
    """
    rho_c = spec.rho_c0 if rho_c is None else check_density(rho_c)
    k0 = spec.k0 if k0 is None else k0
    for l, _ in seq.outcomes:
        if l > spec.n_ticks:
            raise ValidationError(f"outcome index {l} outside 0..{spec.n_ticks}")
    prop = prop or Propagator(spec.generators.full)
    x = joint_input(spec, rho_c, k0)
    for l, t in seq.outcomes:
        x = _project(spec, prop.apply(x, t), l)
        if not np.any(x):
            return 0.0, np.zeros_like(x)
    p = float(np.trace(x).real)
    if p <= 0.0:
        return 0.0, np.zeros_like(x)
    return p, x / p


def check_measured_equivalence(
    spec: ClockSpec, rho_c, k0: int, times: Sequence[float], tol: float = 1e-10,
) -> VerificationReport:
    """Summing probability-weighted measured channels over all outcomes gives the unmeasured channel.

    The enumeration walks the outcome tree depth first and prunes branches
    whose unnormalized state is exactly zero. The reported deviation covers
    the state entries and the total probability.
    """
    times = [float(t) for t in times]
    if not times:
        raise ValidationError("need at least one waiting time")
    r = spec.n_register
    if r ** len(times) > ENUMERATION_BUDGET:
        fit = 0
        while r ** (fit + 1) <= ENUMERATION_BUDGET:
            fit += 1
        raise ResourceError(
            f"{r}^{len(times)} outcome sequences exceed the budget {ENUMERATION_BUDGET}; use N <= {fit}",
            suggested_n=fit,
        )
    rho_c = spec.rho_c0 if rho_c is None else check_density(rho_c)
    prop = Propagator(spec.generators.full)
    total = np.zeros((spec.joint_dim, spec.joint_dim), dtype=complex)
    prob = 0.0
    stack = [(joint_input(spec, rho_c, k0), 0)]
    while stack:
        x, depth = stack.pop()
        if depth == len(times):
            total += x
            prob += float(np.trace(x).real)
            continue
        evolved = prop.apply(x, times[depth])
        for l in range(r):
            y = _project(spec, evolved, l)
            if np.any(y):
                stack.append((y, depth + 1))
    direct = prop.apply(joint_input(spec, rho_c, k0), sum(times))
    dev_state = float(np.max(np.abs(total - direct)))
    dev = max(dev_state, abs(prob - 1.0))
    witness = (f"N={len(times)}, state deviation {dev_state:.3e}, probability sum {prob:.15f}", dev)
    return VerificationReport.from_deviation("measured_equivalence", dev, tol, witness)


def check_finite_running_memory(
    spec: ClockSpec, rho_t0, eps: float, t: float,
) -> tuple[tuple[int, ...], VerificationReport]:
    """Greedy register subset P with ||P_perp (rho_T(t) - rho_T(0)) P_perp||_1 <= eps.

    ``rho_t0`` is the initial register state; the clockwork starts in the
    spec's rho_c0. Returns the chosen register indices (in the order picked)
    and a report whose deviation is the achieved norm.
    """
    r = spec.n_register
    rho_t0 = check_density(rho_t0, name="rho_t0")
    if rho_t0.shape != (r, r):
        raise ValidationError(f"register state must be {r}x{r}")
    if t < 0:
        raise DomainError("t must be non-negative")
    joint0 = kron(spec.rho_c0, rho_t0)
    rho_t = partial_trace(Propagator(spec.generators.full).apply(joint0, t), [spec.d, r], keep=[1])
    diff = rho_t - rho_t0

    def residual(chosen):
        rest = [i for i in range(r) if i not in chosen]
        if not rest:
            return 0.0
        return trace_norm_hermitian(diff[np.ix_(rest, rest)])

    chosen: list[int] = []
    value = residual(chosen)
    while value > eps:
        options = [(residual(chosen + [i]), i) for i in range(r) if i not in chosen]
        value, pick = min(options)
        chosen.append(pick)
    report = VerificationReport.from_deviation(
        "finite_running_memory", value, eps, witness=(f"subset {chosen}", value),
    )
    return tuple(chosen), report


def run_all_checks(spec: ClockSpec, *, samples: int = DEFAULT_SAMPLES, seed: int = 0, t: float = 0.7) -> dict:
    """Every applicable axiom check with default tolerances, keyed by check name."""
    reports = {
        "condition1": check_condition1(spec, t, samples, seed=seed),
        "condition2": self_timing_check(spec, 0.5 * t, 0.5 * t, 1e-10),
        "condition3": check_condition3(spec),
        "condition4": check_condition4(spec, samples=min(samples, 5), seed=seed),
        "classical_register": check_classical_register(spec, t, samples=samples, seed=seed),
        "k_independence": check_k_independence(spec, t, seed=seed),
        "semigroup": check_semigroup(spec, seed=seed),
        "cptp": check_cptp(spec),
    }
    if spec.mode is RegisterMode.CUTOFF:
        reports["condition5"] = check_condition5(spec, (0.1, 1.0, 10.0), samples=samples, seed=seed)
    return reports
