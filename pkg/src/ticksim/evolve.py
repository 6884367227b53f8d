"""Deterministic propagation of clock states and channels."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clockmodel import ClockSpec, RegisterMode
from .errors import AccuracyError, DomainError, ShapeError, ValidationError
from .qcore import (
    EXPM_TOL,
    Superoperator,
    basis_projector,
    check_density,
    induced_one_norm,
    kron,
    matrix_exp,
    partial_trace,
    random_density,
    trace_row,
    unvec,
    vec,
)
from .report import VerificationReport

RK4_DIM_THRESHOLD = 150


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0, t0 + dt, ..., t0 + steps*dt."""

    t0: float = 0.0
    dt: float = 1.0
    steps: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.t0) and self.t0 >= 0):
            raise ValidationError("t0 must be finite and non-negative")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError("dt must be finite and positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError("steps must be a positive integer")
        if not math.isfinite(self.t0 + self.steps * self.dt):
            raise ValidationError("grid end is not finite")
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def span(cls, t_max: float, steps: int) -> "TimeGrid":
        if not (math.isfinite(t_max) and t_max > 0):
            raise ValidationError("t_max must be finite and positive")
        return cls(0.0, t_max / steps, steps)

    @property
    def t_max(self) -> float:
        return self.t0 + self.steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True)
class CascadeState:
    """Register-resolved clockwork blocks rho^(n)(t) at one time."""

    time: float
    blocks: tuple

    @property
    def traces(self) -> np.ndarray:
        return np.array([np.trace(b).real for b in self.blocks])


def propagate(gen: Superoperator, rho, t: float, tol: float = EXPM_TOL) -> np.ndarray:
    """exp(t * gen) applied to rho.

    Above ``RK4_DIM_THRESHOLD`` the exponential is replaced by fixed-step RK4
    on the vectorized state, with the step halved until two successive
    results agree within ``tol``.
    """
    if t < 0:
        raise DomainError(f"propagation time must be non-negative, got {t}")
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (gen.dim, gen.dim):
        raise ShapeError(f"state shape {rho.shape} does not match generator dimension {gen.dim}")
    if t == 0:
        return rho.copy()
    if gen.dim <= RK4_DIM_THRESHOLD:
        return unvec(matrix_exp(t * gen.mat, tol) @ vec(rho), gen.dim)
    return unvec(_rk4(gen.mat, vec(rho), t, tol), gen.dim)


def _rk4_run(mat: np.ndarray, x: np.ndarray, t: float, steps: int) -> np.ndarray:
    h = t / steps
    y = x.copy()
    for _ in range(steps):
        k1 = mat @ y
        k2 = mat @ (y + 0.5 * h * k1)
        k3 = mat @ (y + 0.5 * h * k2)
        k4 = mat @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def _rk4(mat: np.ndarray, x: np.ndarray, t: float, tol: float) -> np.ndarray:
    # RK4 conserves the trace exactly, so accuracy is judged by step doubling
    steps = max(1, int(math.ceil(t * induced_one_norm(mat) / 0.5)))
    coarse = _rk4_run(mat, x, t, steps)
    while True:
        steps *= 2
        fine = _rk4_run(mat, x, t, steps)
        if float(np.max(np.abs(fine - coarse))) <= tol or steps >= 1 << 20:
            return fine
        coarse = fine


class Propagator:
    """Cached exp(t * gen) matrices for one generator."""

    def __init__(self, gen: Superoperator, tol: float = EXPM_TOL):
        self.gen = gen
        self.tol = tol
        self._cache: dict[float, np.ndarray] = {}

    def matrix(self, t: float) -> np.ndarray:
        if t < 0:
            raise DomainError(f"propagation time must be non-negative, got {t}")
        key = float(t)
        if key not in self._cache:
            if key == 0.0:
                self._cache[key] = np.eye(self.gen.mat.shape[0], dtype=complex)
            else:
                self._cache[key] = matrix_exp(key * self.gen.mat, self.tol)
        return self._cache[key]

    def apply(self, rho: np.ndarray, t: float) -> np.ndarray:
        return unvec(self.matrix(t) @ vec(rho), self.gen.dim)


def _check_index(spec: ClockSpec, k: int) -> int:
    if int(k) != k or not 0 <= k <= spec.n_ticks:
        raise DomainError(f"register index {k} outside 0..{spec.n_ticks}")
    return int(k)


def joint_input(spec: ClockSpec, rho_c, k: int) -> np.ndarray:
    """rho_c kron |k><k| on clockwork x register."""
    return kron(rho_c, basis_projector(spec.n_register, _check_index(spec, k)))


def channel_at(spec: ClockSpec, t: float, k: int, rho_c=None) -> np.ndarray:
    """Joint state after time t from rho_c kron |k><k|."""
    rho_c = spec.rho_c0 if rho_c is None else rho_c
    return propagate(spec.generators.full, joint_input(spec, rho_c, k), t)


def register_block(spec: ClockSpec, joint: np.ndarray, n: int, m: int | None = None) -> np.ndarray:
    """Clockwork operator <n|joint|m> (register indices)."""
    m = n if m is None else m
    r = spec.n_register
    t = np.asarray(joint).reshape(spec.d, r, spec.d, r)
    return t[:, n, :, m]


def register_marginal(spec: ClockSpec, joint: np.ndarray) -> np.ndarray:
    return partial_trace(joint, [spec.d, spec.n_register], keep=[1])


def clockwork_marginal(spec: ClockSpec, joint: np.ndarray) -> np.ndarray:
    return partial_trace(joint, [spec.d, spec.n_register], keep=[0])


def euler_channel(spec: ClockSpec, dt: float, k: int | None = None) -> Superoperator:
    """First-order step on the joint space for register-diagonal inputs.

    Block k of the input is mapped to (1 + dt C1_k)(.) kron |k><k| plus
    dt C2_k(.) kron |f(k)><f(k)|; off-diagonal register blocks are dropped.
    With ``k`` given only that input block is kept.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise ValidationError("dt must be positive")
    bundle = spec.generators
    d, r = spec.d, spec.n_register
    n = d * r
    mat = np.zeros((n * n, n * n), dtype=complex)
    ks = range(r) if k is None else [_check_index(spec, k)]
    eye = np.eye(d * d, dtype=complex)
    for kk in ks:
        stay = eye + dt * bundle.no_tick_at(kk).mat
        jump = dt * bundle.tick_at(kk).mat
        _embed_block(mat, stay, kk, kk, d, r)
        _embed_block(mat, jump, spec.next_index(kk), kk, d, r)
    step = Superoperator(n, mat)
    norm = induced_one_norm(bundle.full.mat)
    if dt * norm > 0.1:
        warnings.warn(
            f"Euler step dt={dt:g} is coarse for generator norm {norm:.3g} (dt*norm > 0.1)",
            stacklevel=2,
        )
    return step


def _joint_indices(d: int, r: int, k: int) -> np.ndarray:
    # joint vec positions of the clockwork operator embedded at register block (k, k)
    col, row = np.divmod(np.arange(d * d), d)
    return (col * r + k) * (d * r) + (row * r + k)


def _embed_block(mat: np.ndarray, block: np.ndarray, out_k: int, in_k: int, d: int, r: int):
    mat[np.ix_(_joint_indices(d, r, out_k), _joint_indices(d, r, in_k))] += block


def block_generator(spec: ClockSpec, n_blocks: int, *, counting: bool) -> np.ndarray:
    """Generator of the block cascade d rho^(n)/dt = C1 rho^(n) + C2 rho^(n-1).

    ``counting=True`` gives the tick-counting chain: blocks 0..n_blocks-1
    all tick with the same no-tick generator and probability leaving the
    last block is discarded. ``counting=False`` reproduces the register
    itself (n_blocks = N_T + 1, cut-off absorption or periodic wrap).
    """
    bundle = spec.generators
    d2 = spec.d**2
    g = np.zeros((n_blocks * d2, n_blocks * d2), dtype=complex)
    for n in range(n_blocks):
        s = slice(n * d2, (n + 1) * d2)
        if counting:
            g[s, s] = bundle.no_tick.mat
            if n > 0:
                g[s, slice((n - 1) * d2, n * d2)] = bundle.tick.mat
        else:
            g[s, s] = bundle.no_tick_at(n).mat
            src = n - 1
            if src < 0:
                if spec.mode is not RegisterMode.PERIODIC:
                    continue
                src = n_blocks - 1
            g[s, slice(src * d2, (src + 1) * d2)] = bundle.tick_at(src).mat
    return g


def cascade(spec: ClockSpec, grid: TimeGrid, rho_c=None) -> list[CascadeState]:
    """Register-resolved evolution of rho_c kron |k0><k0| on every grid point."""
    rho_c = spec.rho_c0 if rho_c is None else check_density(rho_c)
    r, d2 = spec.n_register, spec.d**2
    g = block_generator(spec, r, counting=False)
    x = np.zeros(r * d2, dtype=complex)
    x[spec.k0 * d2 : (spec.k0 + 1) * d2] = vec(rho_c)
    step = matrix_exp(grid.dt * g)
    if grid.t0 > 0:
        x = matrix_exp(grid.t0 * g) @ x
    tr = trace_row(spec.d)
    states = []
    for i, t in enumerate(grid.times):
        if i:
            x = step @ x
        blocks = tuple(unvec(x[n * d2 : (n + 1) * d2], spec.d) for n in range(r))
        total = sum(float((tr @ x[n * d2 : (n + 1) * d2]).real) for n in range(r))
        if abs(total - 1.0) > 1e-6:
            raise AccuracyError(
                f"trace leaked to {total:.9f} at t={t:g}; refine the grid",
                suggested_dt=grid.dt / 2,
            )
        states.append(CascadeState(float(t), blocks))
    return states


def self_timing_check(
    spec: ClockSpec, t1: float, t2: float, tol: float = 1e-10, which: str = "full",
) -> VerificationReport:
    """Divisibility exp((t1+t2)L) == exp(t1 L) exp(t2 L), max entry deviation."""
    if t1 < 0 or t2 < 0:
        raise DomainError("times must be non-negative")
    gen = _pick_generator(spec, which)
    a = matrix_exp((t1 + t2) * gen.mat)
    b = matrix_exp(t1 * gen.mat) @ matrix_exp(t2 * gen.mat)
    dev = float(np.max(np.abs(a - b)))
    return VerificationReport.from_deviation(
        f"self_timing[{which}]", dev, tol, witness=(f"t1={t1:g}, t2={t2:g}", dev),
    )


def _pick_generator(spec: ClockSpec, which: str) -> Superoperator:
    bundle = spec.generators
    try:
        return {"full": bundle.full, "clockwork": bundle.clockwork, "no_tick": bundle.no_tick}[which]
    except KeyError:
        raise ValidationError(f"unknown generator {which!r}") from None


def check_condition3(
    spec: ClockSpec, deltas: Sequence[float] = (1e-3, 1e-4), tol: float = 0.0,
) -> VerificationReport:
    """exp(0) is the identity and ||exp(dL) - I|| <= d||L|| e^{d||L||} (induced 1-norm).

    The reported deviation is the largest excess over the bound; the
    identity at zero time must hold exactly.
    """
    gen = spec.generators.full.mat
    eye = np.eye(gen.shape[0], dtype=complex)
    norm = induced_one_norm(gen)
    worst = float(np.max(np.abs(Propagator(spec.generators.full).matrix(0.0) - eye)))
    witnesses = []
    for delta in deltas:
        diff = induced_one_norm(matrix_exp(delta * gen) - eye)
        bound = delta * norm * math.exp(delta * norm)
        excess = max(0.0, diff - bound)
        worst = max(worst, excess)
        if excess > tol:
            witnesses.append((f"delta={delta:g}: ||e^(dL)-I||={diff:.3e} > {bound:.3e}", excess))
    return VerificationReport("condition3", worst <= tol, worst, tol, tuple(witnesses))


def leading_order_ratio(spec: ClockSpec, rho_c, k: int, delta: float, prop=None) -> tuple[float, float]:
    """(sum of p_l over l not in {k, f(k)}, p_{f(k)}) after time delta from rho_c kron |k><k|."""
    prop = prop or Propagator(spec.generators.full)
    out = prop.apply(joint_input(spec, rho_c, k), delta)
    probs = np.real(np.diag(register_marginal(spec, out)))
    fk = spec.next_index(k)
    other = sum(probs[l] for l in range(spec.n_register) if l not in (k, fk))
    return float(other), float(probs[fk])


def check_condition4(
    spec: ClockSpec,
    samples: int = 5,
    seed: int = 0,
    deltas: Sequence[float] = tuple(1e-2 / 2**i for i in range(7)),
    window: tuple[float, float] = (0.4, 0.6),
    floor: float = 1e-14,
    *,
    allow_faster: bool = True,
    skip_floor: float = 1e-13,
) -> VerificationReport:
    """Skipped-tick probability over next-tick probability vanishes with delta.

    For consecutive deltas (each half the previous) the ratio must shrink by
    a factor within ``window`` (linear vanishing). With ``allow_faster`` a
    factor below the window, i.e. vanishing at higher order as for ladder
    clocks whose double ticks need several hops, also passes. Pairs whose
    next-tick probability is below ``floor``, or whose skipped-tick
    probability is below ``skip_floor`` (round-off level), are recorded as
    witnesses with zero deviation rather than failures.
    """
    rng = np.random.default_rng(seed)
    prop = Propagator(spec.generators.full)
    ks = range(spec.n_register) if spec.mode is RegisterMode.PERIODIC else range(spec.n_ticks)
    lo, hi = (0.0 if allow_faster else window[0]), window[1]
    worst = 0.0
    witnesses = []
    for _ in range(samples):
        rho = random_density(spec.d, rng)
        for k in ks:
            probs = [leading_order_ratio(spec, rho, k, delta, prop) for delta in deltas]
            for i in range(1, len(deltas)):
                (o_prev, n_prev), (o_cur, n_cur) = probs[i - 1], probs[i]
                if n_prev <= floor or n_cur <= floor:
                    witnesses.append((f"k={k}, delta={deltas[i]:g}: denominator underflow", 0.0))
                    continue
                if o_prev <= skip_floor or o_cur <= skip_floor:
                    continue
                factor = (o_cur / n_cur) / (o_prev / n_prev)
                excess = max(0.0, lo - factor, factor - hi)
                if excess > 0:
                    witnesses.append((f"k={k}, delta={deltas[i]:g}: shrink factor {factor:.4f}", excess))
                worst = max(worst, excess)
    return VerificationReport("condition4", worst == 0.0, worst, 0.0, tuple(witnesses))
