"""Tick delay functions, accuracy, trajectory sampling and the alternate ticks game."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .clockmodel import ClockSpec, RegisterMode
from .errors import (
    DegenerateDistributionError,
    DomainError,
    HorizonError,
    HorizonWarning,
    InsufficientDataError,
    InvariantError,
    PairingError,
    ValidationError,
)
from .evolve import TimeGrid, block_generator
from .qcore import induced_one_norm, matrix_exp, trace_row, vec

MASS_REQUIRED = 0.999
# stream u_i of trajectory n: SplitMix64 finalizer of a Weyl-sequence counter keyed by (seed, n)
RNG_ALGORITHM = "splitmix64-counter/1"


@dataclass(frozen=True)
class DelayFunction:
    """Probability density of the k-th tick on a time grid."""

    k: int
    grid: TimeGrid
    density: np.ndarray
    mass: float

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass(frozen=True)
class TickRecord:
    trajectory_id: int
    tick_times: tuple
    truncated: bool


@dataclass(frozen=True)
class AccuracySummary:
    k: int
    mean: float
    variance: float
    r_value: float
    mass: float


@dataclass(frozen=True)
class EmpiricalAccuracy(AccuracySummary):
    """Sample moments of the k-th tick time with delta-method standard errors."""

    se_mean: float
    se_variance: float
    se_r: float
    n_used: int
    n_excluded: int


def _trapezoid(y: np.ndarray, dx: float) -> float:
    return float(dx * (np.sum(y) - 0.5 * (y[0] + y[-1])))


def delay_function(spec: ClockSpec, k: int, grid: TimeGrid) -> DelayFunction:
    """Density of the k-th tick counted from rho_c0 (tick count, not register label).

    Runs the tick-counting cascade with k blocks; the density is
    tr[sum_j J_j rho^(k-1)(t) J_j^+]. In cut-off mode k may not exceed the
    number of ticks the register can still record.
    """
    k = int(k)
    if k < 1:
        raise DomainError("tick index k must be at least 1")
    if spec.mode is RegisterMode.CUTOFF and k > spec.n_ticks - spec.k0:
        raise DomainError(
            f"cut-off register starting at {spec.k0} records at most "
            f"{spec.n_ticks - spec.k0} ticks; k={k} requested"
        )
    d2 = spec.d**2
    g = block_generator(spec, k, counting=True)
    x = np.zeros(k * d2, dtype=complex)
    x[:d2] = vec(spec.rho_c0)
    # density functional: tr[J^+J rho] on the last block
    rate_row = np.zeros(k * d2, dtype=complex)
    rate_row[(k - 1) * d2 :] = trace_row(spec.d) @ spec.generators.tick.mat
    step = matrix_exp(grid.dt * g)
    if grid.t0 > 0:
        x = matrix_exp(grid.t0 * g) @ x
    density = np.empty(grid.steps + 1)
    density[0] = (rate_row @ x).real
    for i in range(1, grid.steps + 1):
        x = step @ x
        density[i] = (rate_row @ x).real
    if density.min() < -1e-12:
        raise InvariantError(f"delay density negative ({density.min():.3e}); generator is not CP")
    mass = _trapezoid(density, grid.dt)
    # exact mass from the blocks still waiting; quadrature overshoots by O(dt^2)
    waiting = sum((trace_row(spec.d) @ x[i * d2 : (i + 1) * d2]).real for i in range(k))
    if not -1e-9 <= waiting <= 1 + 1e-9:
        raise InvariantError(f"k={k} tick probability {1.0 - waiting:.12f} outside [0, 1]")
    if mass < MASS_REQUIRED and density[-1] > 1e-8:
        suggested = 2.0 * grid.t_max
        warnings.warn(
            HorizonWarning(
                f"k={k} delay function holds mass {mass:.6f} up to t={grid.t_max:g} and is "
                f"still {density[-1]:.3e} at the horizon; try t_max={suggested:g}",
                suggested,
            ),
            stacklevel=2,
        )
    return DelayFunction(k, grid, density, mass)


def accuracy(df: DelayFunction) -> AccuracySummary:
    """Mean, variance and R = mean^2 / variance of a delay function (trapezoidal)."""
    if df.mass < MASS_REQUIRED:
        raise HorizonError(
            f"delay function mass {df.mass:.6f} < {MASS_REQUIRED}; moments would be truncated",
            suggested_t_max=2.0 * df.grid.t_max,
        )
    t = df.times
    p = np.asarray(df.density)
    dt = df.grid.dt
    mean = _trapezoid(t * p, dt) / df.mass
    second = _trapezoid(t * t * p, dt) / df.mass
    var = second - mean * mean
    if var <= 1e-14 * max(mean * mean, 1e-300):
        raise DegenerateDistributionError(f"variance {var:.3e} is not positive")
    return AccuracySummary(df.k, mean, var, mean * mean / var, df.mass)


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class SamplerTables:
    """Read-only propagator tables shared by every trajectory."""

    d: int
    gen: np.ndarray          # no-tick generator, n x n
    gen_indptr: np.ndarray   # CSR copy of gen for the compiled kernel
    gen_indices: np.ndarray
    gen_data: np.ndarray
    powers: np.ndarray       # exp(2^b dt G), b = 0..B-1
    wrows: np.ndarray        # trace rows tr[exp(i dt G) .], i = 0..n_bins
    trows: np.ndarray        # tr[G^m .] / m!, m = 0..K-1
    jops: np.ndarray         # tick operators, m x d x d
    rho0: np.ndarray         # vec(rho_c0)
    dt: float
    t_max: float
    max_ticks: int           # -1 for unbounded (periodic)
    seed: int

    @property
    def n_taylor(self) -> int:
        return self.trows.shape[0]


N_TAYLOR = 20
SURVIVAL_TOL = 1e-10
STEP_NORM = 0.5


def sampler_tables(spec: ClockSpec, t_max: float, seed: int) -> SamplerTables:
    if not (math.isfinite(t_max) and t_max > 0):
        raise ValidationError("t_max must be finite and positive")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    g = spec.generators.no_tick.mat
    norm = induced_one_norm(g)
    dt = t_max if norm == 0 else min(t_max, STEP_NORM / norm)
    n_bins = int(math.ceil(t_max / dt))
    p1 = matrix_exp(dt * g)
    n_pow = max(1, int(n_bins).bit_length())
    powers = [p1]
    for _ in range(1, n_pow):
        powers.append(powers[-1] @ powers[-1])
    tr = trace_row(spec.d)
    wrows = np.empty((n_bins + 1, g.shape[0]), dtype=complex)
    wrows[0] = tr
    for i in range(1, n_bins + 1):
        wrows[i] = wrows[i - 1] @ p1
    survival = (wrows @ vec(spec.rho_c0)).real
    rise = float(np.max(np.diff(survival))) if survival.size > 1 else 0.0
    if rise > SURVIVAL_TOL:
        raise InvariantError(f"survival function increases by {rise:.3e}; no-tick semigroup gains trace")
    trows = np.empty((N_TAYLOR, g.shape[0]), dtype=complex)
    trows[0] = tr
    for m in range(1, N_TAYLOR):
        trows[m] = (trows[m - 1] @ g) / m
    if spec.mode is RegisterMode.CUTOFF:
        max_ticks = spec.n_ticks - spec.k0
    else:
        max_ticks = -1
    rows, cols = np.nonzero(g)
    indptr = np.searchsorted(rows, np.arange(g.shape[0] + 1)).astype(np.int64)
    return SamplerTables(
        d=spec.d,
        gen=np.ascontiguousarray(g),
        gen_indptr=indptr,
        gen_indices=cols.astype(np.int64),
        gen_data=np.ascontiguousarray(g[rows, cols]),
        powers=np.ascontiguousarray(np.array(powers)),
        wrows=np.ascontiguousarray(wrows),
        trows=np.ascontiguousarray(trows),
        jops=np.ascontiguousarray(np.array(spec.j_ops, dtype=complex)),
        rho0=np.ascontiguousarray(vec(spec.rho_c0)),
        dt=float(dt),
        t_max=float(t_max),
        max_ticks=int(max_ticks),
        seed=seed,
    )


BATCH = 2048


def _run_batch(tables: SamplerTables, first: int, count: int, kernel) -> list[TickRecord]:
    cap = max(16, 2 * count)
    times = np.empty(cap)
    counts = np.zeros(count, dtype=np.int64)
    trunc = np.zeros(count, dtype=np.int8)
    done = 0
    used = 0
    while done < count:
        n_done, used_now = kernel.sample_batch(
            tables, first + done, count - done, times[used:], counts[done:], trunc[done:]
        )
        done += n_done
        used += used_now
        if done < count:
            grown = np.empty(2 * times.size)
            grown[:used] = times[:used]
            times = grown
    records = []
    pos = 0
    for i in range(count):
        c = int(counts[i])
        records.append(TickRecord(first + i, tuple(times[pos : pos + c].tolist()), bool(trunc[i])))
        pos += c
    return records


def sample_trajectories(
    spec: ClockSpec,
    t_max: float,
    n_traj: int,
    seed: int,
    *,
    threads: int = 1,
    backend: str | None = None,
) -> list[TickRecord]:
    """Tick-only quantum-jump trajectories; a pure function of (spec, t_max, n_traj, seed).

    Between ticks the unnormalized state follows the no-tick semigroup; the
    waiting time solves survival(t) = u for a uniform u drawn from the
    trajectory's own counter-based stream. The tick operator is chosen with
    probability proportional to tr[J_j rho J_j^+].
    """
    n_traj = int(n_traj)
    if n_traj < 1:
        raise ValidationError("n_traj must be at least 1")
    tables = sampler_tables(spec, t_max, seed)
    kernel = _backend.get(backend)
    starts = list(range(0, n_traj, BATCH))
    jobs = [(s, min(BATCH, n_traj - s)) for s in starts]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(lambda job: _run_batch(tables, job[0], job[1], kernel), jobs))
    else:
        parts = [_run_batch(tables, s, c, kernel) for s, c in jobs]
    records = [r for part in parts for r in part]
    silent = sum(1 for r in records if not r.tick_times)
    if silent > 0.99 * n_traj:
        warnings.warn(
            f"{silent} of {n_traj} trajectories produced no tick before t_max={t_max:g}",
            stacklevel=2,
        )
    return records


def empirical_accuracy(records: Sequence[TickRecord], k: int) -> EmpiricalAccuracy:
    """Sample estimate of R_k from the k-th tick times, with delta-method errors.

    Records without a k-th tick (always truncated ones) are excluded and
    counted in ``n_excluded``.
    """
    k = int(k)
    if k < 1:
        raise DomainError("tick index k must be at least 1")
    times = np.array([r.tick_times[k - 1] for r in records if len(r.tick_times) >= k])
    excluded = len(records) - times.size
    n = times.size
    if n < 2:
        raise InsufficientDataError(f"only {n} records contain tick {k}")
    mean = float(times.mean())
    c = times - mean
    var = float(np.sum(c * c) / (n - 1))
    if var <= 0:
        raise DegenerateDistributionError("all k-th tick times are identical")
    mu3 = float(np.mean(c**3))
    mu4 = float(np.mean(c**4))
    r = mean * mean / var
    var_mean = var / n
    var_var = max(mu4 - var * var, 0.0) / n
    cov = mu3 / n
    gm, gv = 2 * mean / var, -mean * mean / var**2
    var_r = gm * gm * var_mean + gv * gv * var_var + 2 * gm * gv * cov
    return EmpiricalAccuracy(
        k=k, mean=mean, variance=var, r_value=r, mass=n / len(records),
        se_mean=math.sqrt(var_mean), se_variance=math.sqrt(var_var), se_r=math.sqrt(max(var_r, 0.0)),
        n_used=n, n_excluded=excluded,
    )


# --------------------------------------------------------------------------
# Alternate ticks game


@dataclass(frozen=True)
class GameResult:
    """One refereed game between trajectory pairs.

    ``length`` counts alternating ticks before the first violation (or all
    ticks when the streams run out); ``consumed`` also counts the violating
    tick. ``winner`` is the clock that did not violate, "draw" for an exact
    tie, or "none" when no violation occurred.
    """

    game_id: int
    length: int
    consumed: int
    winner: str
    length_a_first: int
    length_b_first: int


@dataclass(frozen=True)
class GameLengthDistribution:
    games: tuple

    @property
    def lengths(self) -> np.ndarray:
        return np.array([g.length for g in self.games])

    @property
    def consumed(self) -> np.ndarray:
        return np.array([g.consumed for g in self.games])

    def histogram(self) -> dict[int, int]:
        values, counts = np.unique(self.lengths, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def _play(stream: list[tuple[float, str]], first: str) -> tuple[int, int, str]:
    expected = first
    for i, (t, who) in enumerate(stream):
        if i + 1 < len(stream) and stream[i + 1][0] == t:
            return i, i, "draw"
        if who != expected:
            return i, i + 1, ("b" if who == "a" else "a")
        expected = "b" if who == "a" else "a"
    return len(stream), len(stream), "none"


def atg_referee(a: Sequence[TickRecord], b: Sequence[TickRecord]) -> GameLengthDistribution:
    """Referee the alternate ticks game on-the-fly for trajectory pairs with equal ids."""
    by_id = {r.trajectory_id: r for r in b}
    if len(by_id) != len(b) or len({r.trajectory_id for r in a}) != len(a):
        raise PairingError("duplicate trajectory ids")
    if set(by_id) != {r.trajectory_id for r in a}:
        raise PairingError("trajectory ids of the two clocks do not pair up")
    games = []
    for ra in a:
        rb = by_id[ra.trajectory_id]
        stream = sorted([(t, "a") for t in ra.tick_times] + [(t, "b") for t in rb.tick_times])
        la, ca, wa = _play(stream, "a")
        lb, cb, wb = _play(stream, "b")
        first = stream[0][1] if stream else "a"
        length, consumed, winner = (la, ca, wa) if first == "a" else (lb, cb, wb)
        games.append(GameResult(ra.trajectory_id, length, consumed, winner, la, lb))
    return GameLengthDistribution(tuple(games))
