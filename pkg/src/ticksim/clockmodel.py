"""Ticking-clock specifications, their generators, and the example clocks."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import NeverTicksError, ValidationError
from .qcore import (
    HERMITIAN_TOL,
    Superoperator,
    as_square,
    check_density,
    check_hermitian,
    choi_matrix,
    dagger,
    kron,
    lindblad_superop,
    sandwich_superop,
)


class RegisterMode(enum.Enum):
    PERIODIC = "periodic"
    CUTOFF = "cutoff"

    @classmethod
    def parse(cls, value) -> "RegisterMode":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("-", "").replace("_", "")
        for mode in cls:
            if mode.value == text:
                return mode
        raise ValidationError(f"unknown register mode {value!r}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ClockSpec:
    """One ticking clock: clockwork operators, register size and initial state.

    ``h``, ``l_ops`` and ``j_ops`` act on the d-dimensional clockwork. The
    register holds ``n_ticks + 1`` states and starts in ``k0``.
    ``allow_never_tick`` disables the nonzero-tick-operator requirement; it
    exists only for degenerate test clocks.
    """

    d: int
    n_ticks: int
    mode: RegisterMode
    h: np.ndarray
    l_ops: tuple = ()
    j_ops: tuple = ()
    rho_c0: np.ndarray = None
    k0: int = 0
    name: str = "custom"
    allow_never_tick: bool = field(default=False, repr=False)

    def __post_init__(self):
        d = int(self.d)
        if d < 1:
            raise ValidationError("clockwork dimension must be positive")
        if int(self.n_ticks) < 1:
            raise ValidationError("n_ticks must be at least 1")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "n_ticks", int(self.n_ticks))
        object.__setattr__(self, "mode", RegisterMode.parse(self.mode))
        h = check_hermitian(self.h, HERMITIAN_TOL, "H")
        if h.shape != (d, d):
            raise ValidationError(f"H has shape {h.shape}, expected {(d, d)}")
        object.__setattr__(self, "h", _frozen(h))
        for attr in ("l_ops", "j_ops"):
            ops = []
            for i, op in enumerate(getattr(self, attr)):
                op = as_square(op, f"{attr}[{i}]")
                if op.shape != (d, d):
                    raise ValidationError(f"{attr}[{i}] has shape {op.shape}, expected {(d, d)}")
                ops.append(_frozen(op))
            object.__setattr__(self, attr, tuple(ops))
        if not self.allow_never_tick:
            if not self.l_ops and not self.j_ops:
                raise NeverTicksError("clock has neither L nor J operators")
            if not any(np.any(j != 0) for j in self.j_ops):
                raise NeverTicksError("every tick operator J_j is zero; the clock never ticks")
        if self.rho_c0 is None:
            raise ValidationError("initial clockwork state rho_c0 is required")
        rho = check_density(self.rho_c0, name="rho_c0")
        if rho.shape != (d, d):
            raise ValidationError(f"rho_c0 has shape {rho.shape}, expected {(d, d)}")
        object.__setattr__(self, "rho_c0", _frozen(rho))
        k0 = int(self.k0)
        if not 0 <= k0 <= self.n_ticks:
            raise ValidationError(f"k0={k0} outside register range 0..{self.n_ticks}")
        object.__setattr__(self, "k0", k0)

    @property
    def n_register(self) -> int:
        return self.n_ticks + 1

    @property
    def joint_dim(self) -> int:
        return self.d * self.n_register

    def theta(self, k: int) -> int:
        """1 if a tick can be written from register state k, else 0."""
        if self.mode is RegisterMode.CUTOFF and k == self.n_ticks:
            return 0
        return 1

    def next_index(self, k: int) -> int:
        return (k + 1) % self.n_register

    def register_distance(self, l: int, m: int) -> int:
        """Layout distance between register sites; carries no dynamics."""
        gap = abs(l - m)
        if self.mode is RegisterMode.PERIODIC:
            return min(gap, self.n_register - gap)
        return gap

    def replace(self, **changes) -> "ClockSpec":
        fields = dict(
            d=self.d, n_ticks=self.n_ticks, mode=self.mode, h=self.h, l_ops=self.l_ops,
            j_ops=self.j_ops, rho_c0=self.rho_c0, k0=self.k0, name=self.name,
            allow_never_tick=self.allow_never_tick,
        )
        fields.update(changes)
        return ClockSpec(**fields)

    @cached_property
    def generators(self) -> "GeneratorBundle":
        return build_generators(self)


class GeneratorBundle:
    """Generators derived from a ClockSpec.

    ``clockwork`` drives the register-traced dynamics, ``no_tick`` the
    conditional no-tick evolution and ``tick`` the tick channel; the joint
    clockwork-register generator ``full`` is built on first access because
    it is d(N_T+1) times larger.
    """

    def __init__(self, spec: ClockSpec):
        self.spec = spec
        h = np.asarray(spec.h)
        d = spec.d
        self.clockwork = lindblad_superop(h, list(spec.l_ops) + list(spec.j_ops))
        jj = sum((dagger(j) @ j for j in spec.j_ops), np.zeros((d, d), dtype=complex))
        eye = np.eye(d, dtype=complex)
        self.no_tick = lindblad_superop(h, spec.l_ops) + Superoperator(
            d, -0.5 * (np.kron(eye, jj) + np.kron(jj.T, eye))
        )
        self.tick = sandwich_superop(spec.j_ops, d)
        ll = sum((dagger(l) @ l for l in spec.l_ops), np.zeros((d, d), dtype=complex))
        self.h_eff = h - 0.5j * (ll + jj)
        self.tick_rate_op = jj

    @cached_property
    def register_shift(self) -> np.ndarray:
        return build_register_shift(self.spec.n_ticks, self.spec.mode)

    @cached_property
    def full(self) -> Superoperator:
        spec = self.spec
        eye_r = np.eye(spec.n_register, dtype=complex)
        shift = self.register_shift
        ops = [kron(l, eye_r) for l in spec.l_ops] + [kron(j, shift) for j in spec.j_ops]
        return lindblad_superop(kron(spec.h, eye_r), ops)

    def no_tick_at(self, k: int) -> Superoperator:
        """No-tick generator for register state k (J decay removed when theta(k)=0)."""
        if self.spec.theta(k):
            return self.no_tick
        return lindblad_superop(np.asarray(self.spec.h), self.spec.l_ops)

    def tick_at(self, k: int) -> Superoperator:
        if self.spec.theta(k):
            return self.tick
        return self.tick.scaled(0.0)


def build_generators(spec: ClockSpec) -> GeneratorBundle:
    return GeneratorBundle(spec)


def build_register_shift(n_ticks: int, mode) -> np.ndarray:
    """Register raising operator, cyclic in periodic mode."""
    n_ticks = int(n_ticks)
    if n_ticks < 1:
        raise ValidationError("n_ticks must be at least 1")
    mode = RegisterMode.parse(mode)
    size = n_ticks + 1
    o = np.zeros((size, size), dtype=complex)
    for n in range(n_ticks):
        o[n + 1, n] = 1.0
    if mode is RegisterMode.PERIODIC:
        o[0, n_ticks] = 1.0
    return o


def canonicalize_jumps(j_ops: Sequence, d: int, cutoff: float = 1e-12) -> list[np.ndarray]:
    """Minimal Kraus set reproducing rho -> sum_j J rho J^+.

    Diagonalizes the Choi matrix and keeps eigenvalues above ``cutoff``; the
    number of returned operators is the Choi rank.
    """
    ops = [as_square(j) for j in j_ops]
    for i, j in enumerate(ops):
        if j.shape != (d, d):
            raise ValidationError(f"j_ops[{i}] has shape {j.shape}, expected {(d, d)}")
    if not ops:
        return []
    choi = choi_matrix(sandwich_superop(ops, d))
    evals, evecs = np.linalg.eigh(0.5 * (choi + dagger(choi)))
    out = []
    for lam, v in sorted(zip(evals, evecs.T), key=lambda p: -p[0]):
        if lam > cutoff:
            out.append(math.sqrt(lam) * v.reshape(d, d, order="F"))
    return out


def _basis(d: int, i: int) -> np.ndarray:
    e = np.zeros(d, dtype=complex)
    e[i] = 1.0
    return e


def _ketbra(d: int, i: int, j: int) -> np.ndarray:
    m = np.zeros((d, d), dtype=complex)
    m[i, j] = 1.0
    return m


def ladder_clock(d: int, n_ticks: int = 4, mode=RegisterMode.CUTOFF, k0: int = 0) -> ClockSpec:
    """Classical ladder clock: unit-rate hops c_1 -> ... -> c_d, tick resets to c_1."""
    d = int(d)
    if d < 1:
        raise ValidationError("ladder dimension must be at least 1")
    l_ops = tuple(_ketbra(d, j + 1, j) for j in range(d - 1))
    j_ops = (_ketbra(d, 0, d - 1),)
    return ClockSpec(
        d=d, n_ticks=n_ticks, mode=mode, h=np.zeros((d, d)), l_ops=l_ops, j_ops=j_ops,
        rho_c0=_ketbra(d, 0, 0), k0=k0, name=f"ladder(d={d})",
    )


def _lowering() -> np.ndarray:
    return np.array([[0, 1], [0, 0]], dtype=complex)


def _thermal_qubit(beta: float, energy: float) -> np.ndarray:
    w = math.exp(-beta * energy)
    return np.diag([1.0 / (1.0 + w), w / (1.0 + w)]).astype(complex)


THERMO_DEFAULTS = dict(
    E_h=2.0, E_c=1.0, beta_h=0.2, beta_c=2.0, gamma_h=1.0, gamma_c=1.0, g=1.0, Gamma=1.0, d=3,
)


def thermodynamic_clock(
    params: dict | None = None, *, n_ticks: int = 4, mode=RegisterMode.CUTOFF, h_int=None,
) -> ClockSpec:
    """Two thermal qubits driving a d-level ladder; a tick is emission from the top level.

    Hilbert space ordering is hot qubit, cold qubit, ladder. ``h_int``
    replaces the default resonant three-body exchange term.
    """
    p = dict(THERMO_DEFAULTS)
    p.update(params or {})
    unknown = set(p) - set(THERMO_DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown thermodynamic clock parameters {sorted(unknown)}")
    d = int(p["d"])
    if d < 2:
        raise ValidationError("ladder dimension must be at least 2")
    for key in ("gamma_h", "gamma_c", "Gamma"):
        if not (math.isfinite(p[key]) and p[key] > 0):
            raise ValidationError(f"{key} must be a positive finite rate, got {p[key]!r}")
    for key in ("E_h", "E_c", "beta_h", "beta_c", "g"):
        if not math.isfinite(p[key]):
            raise ValidationError(f"{key} must be finite")
    if p["beta_h"] < 0 or p["beta_c"] < 0:
        raise ValidationError("inverse temperatures must be non-negative")
    if p["g"] < 0:
        raise ValidationError("interaction strength g must be non-negative")
    if not p["beta_h"] < p["beta_c"]:
        warnings.warn("hot bath is not hotter than the cold bath (beta_h >= beta_c)", stacklevel=2)

    i2 = np.eye(2, dtype=complex)
    iw = np.eye(d, dtype=complex)
    sig = _lowering()
    sig_h = np.kron(np.kron(sig, i2), iw)
    sig_c = np.kron(np.kron(i2, sig), iw)
    lower_w = np.zeros((d, d), dtype=complex)
    for n in range(d - 1):
        lower_w[n, n + 1] = 1.0
    e_w = p["E_h"] - p["E_c"]
    h0 = (
        p["E_h"] * dagger(sig_h) @ sig_h
        + p["E_c"] * dagger(sig_c) @ sig_c
        + np.kron(np.kron(i2, i2), np.diag(e_w * np.arange(d)).astype(complex))
    )
    if h_int is None:
        x = p["g"] * np.kron(np.kron(sig, dagger(sig)), dagger(lower_w))
        h_int = x + dagger(x)
    h = h0 + np.asarray(h_int, dtype=complex)

    gh, gc = p["gamma_h"], p["gamma_c"]
    l_ops = (
        math.sqrt(gh) * sig_h,
        math.sqrt(gh * math.exp(-p["beta_h"] * p["E_h"])) * dagger(sig_h),
        math.sqrt(gc) * sig_c,
        math.sqrt(gc * math.exp(-p["beta_c"] * p["E_c"])) * dagger(sig_c),
    )
    j_ops = (math.sqrt(p["Gamma"]) * np.kron(np.kron(i2, i2), _ketbra(d, 0, d - 1)),)
    rho0 = np.kron(
        np.kron(_thermal_qubit(p["beta_h"], p["E_h"]), _thermal_qubit(p["beta_c"], p["E_c"])),
        _ketbra(d, 0, 0),
    )
    return ClockSpec(
        d=4 * d, n_ticks=n_ticks, mode=mode, h=h, l_ops=l_ops, j_ops=j_ops, rho_c0=rho0,
        name=f"thermodynamic(d={d})",
    )


def thermo_top_projector(d: int) -> np.ndarray:
    """|d-1><d-1| on the ladder, embedded in the 4d-dimensional clockwork."""
    return np.kron(np.eye(4, dtype=complex), _ketbra(d, d - 1, d - 1))


def quasi_ideal_defaults(d: int) -> dict:
    return dict(
        sigma=math.sqrt(d), n0=d / 2.0, j0=0.0, jV=d / 2.0, V0=d / (2.0 * math.pi),
        sigma_V=math.sqrt(d) / 2.0,
    )


def _cyclic_offset(j: np.ndarray, centre: float, d: int) -> np.ndarray:
    return (j - centre + d / 2.0) % d - d / 2.0


def quasi_ideal_profile(d: int, params: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Initial clock state amplitudes and tick potential (psi, V) in the |t_j> basis."""
    p = quasi_ideal_defaults(d)
    p.update(params or {})
    j = np.arange(d, dtype=float)
    off = _cyclic_offset(j, p["j0"], d)
    psi = np.exp(-math.pi * off**2 / p["sigma"] ** 2) * np.exp(2j * math.pi * p["n0"] * off / d)
    psi = psi / np.linalg.norm(psi)
    v = p["V0"] * np.exp(-math.pi * _cyclic_offset(j, p["jV"], d) ** 2 / p["sigma_V"] ** 2)
    return psi, v


def quasi_ideal_clock(
    d: int, params: dict | None = None, *, reset: bool = True, n_ticks: int = 4,
    mode=RegisterMode.CUTOFF,
) -> ClockSpec:
    """Gaussian wave packet rotating through d time states; ticks where it meets V.

    ``reset=True`` uses J_j = sqrt(2 V_j) |psi><t_j| (clockwork reset after
    each tick); ``reset=False`` uses the single operator
    sum_j sqrt(2 V_j) |j><t_j| with the computational basis as |j>.
    """
    d = int(d)
    if d < 2:
        raise ValidationError("quasi-ideal clock needs d >= 2")
    p = quasi_ideal_defaults(d)
    p.update(params or {})
    unknown = set(p) - set(quasi_ideal_defaults(d))
    if unknown:
        raise ValidationError(f"unknown quasi-ideal parameters {sorted(unknown)}")
    for key in ("sigma", "sigma_V"):
        if not (math.isfinite(p[key]) and 0 < p[key] < d):
            raise ValidationError(f"{key} must lie in (0, d), got {p[key]!r}")
    for key in ("n0", "j0", "jV"):
        if not (math.isfinite(p[key]) and 0 <= p[key] < d):
            raise ValidationError(f"{key} must lie in [0, d), got {p[key]!r}")
    if not (math.isfinite(p["V0"]) and p["V0"] >= 0):
        raise ValidationError("V0 must be a non-negative finite rate")

    psi, v = quasi_ideal_profile(d, p)
    omega = 2.0 * math.pi / d
    n = np.arange(d)
    fourier = np.exp(2j * math.pi * np.outer(n, n) / d) / math.sqrt(d)  # columns |E_n>
    h = fourier @ np.diag(omega * n).astype(complex) @ dagger(fourier)
    h = 0.5 * (h + dagger(h))
    rho0 = np.outer(psi, psi.conj())
    if reset:
        j_ops = tuple(math.sqrt(2 * v[j]) * np.outer(psi, _basis(d, j).conj()) for j in range(d))
        j_ops = tuple(op for op in j_ops if np.any(op != 0))
    else:
        j_ops = (np.diag(np.sqrt(2 * v)).astype(complex),)
        j_ops = tuple(op for op in j_ops if np.any(op != 0))
    return ClockSpec(
        d=d, n_ticks=n_ticks, mode=mode, h=h, l_ops=(), j_ops=j_ops, rho_c0=rho0,
        name=f"quasi-ideal(d={d}{'' if reset else ', non-reset'})",
    )


def quasi_ideal_overlap(d: int, params: dict | None = None) -> float:
    """sum_j V_j |<t_j|psi>|^2 for the initial state."""
    psi, v = quasi_ideal_profile(d, params)
    return float(np.sum(v * np.abs(psi) ** 2))
