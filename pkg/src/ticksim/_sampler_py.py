"""Pure-Python trajectory kernel (reference for the compiled one)."""
from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
ROOT_TOL = 1e-10
ROOT_ITERS = 200
NAME = "python"


def mix(z: int) -> int:
    """SplitMix64 finalizer."""
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream_key(seed: int, traj: int) -> int:
    return mix(seed + GOLDEN * (traj + 1))


def uniform(key: int, counter: int) -> float:
    """Open-interval uniform from the counter-th draw of a stream."""
    z = mix(key + GOLDEN * (counter + 1))
    return ((z >> 11) + 0.5) * 2.0**-53


def _survival(row: np.ndarray, x: np.ndarray) -> float:
    return float((row @ x).real)


def _advance(powers: np.ndarray, x: np.ndarray, i: int) -> np.ndarray:
    b = 0
    while i:
        if i & 1:
            x = powers[b] @ x
        i >>= 1
        b += 1
    return x


def _taylor(coef: np.ndarray, tau: float) -> float:
    acc = 0.0
    for c in coef[::-1]:
        acc = acc * tau + c
    return acc


def _solve_in_bin(coef: np.ndarray, u: float, hi: float) -> float:
    lo = 0.0
    for _ in range(ROOT_ITERS):
        mid = 0.5 * (lo + hi)
        s = _taylor(coef, mid)
        if abs(s - u) <= ROOT_TOL:
            return mid
        if s > u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _evolve_in_bin(gen: np.ndarray, y: np.ndarray, tau: float, terms: int) -> np.ndarray:
    term = y
    acc = y.copy()
    for m in range(1, terms):
        term = (gen @ term) * (tau / m)
        acc = acc + term
    return acc


def trajectory(tables, traj: int, cap: int) -> tuple[list[float], bool] | None:
    """Tick times of one trajectory, or None if more than ``cap`` ticks occur."""
    d = tables.d
    n_rows = tables.wrows.shape[0] - 1
    dt = tables.dt
    key = stream_key(tables.seed, traj)
    counter = 0
    x = tables.rho0.copy()
    t = 0.0
    ticks: list[float] = []
    while tables.max_ticks < 0 or len(ticks) < tables.max_ticks:
        u = uniform(key, counter)
        counter += 1
        remaining = tables.t_max - t
        n_full = min(int(remaining / dt), n_rows)
        # largest i in [0, n_full] with S_i >= u
        lo, hi = 0, n_full
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if _survival(tables.wrows[mid], x) >= u:
                lo = mid
            else:
                hi = mid - 1
        y = _advance(tables.powers, x, lo)
        coef = (tables.trows @ y).real
        width = min(dt, remaining - lo * dt)
        if _taylor(coef, width) >= u:
            return ticks, True
        tau = _solve_in_bin(coef, u, width)
        xt = _evolve_in_bin(tables.gen, y, tau, tables.n_taylor)
        rho = xt.reshape(d, d, order="F")
        outs = [j @ rho @ j.conj().T for j in tables.jops]
        weights = np.array([np.trace(o).real for o in outs])
        total = weights.sum()
        target = uniform(key, counter) * total
        counter += 1
        cum = 0.0
        pick = len(outs) - 1
        for idx, w in enumerate(weights):
            cum += w
            if cum > target:
                pick = idx
                break
        x = outs[pick].reshape(-1, order="F") / weights[pick]
        t = t + lo * dt + tau
        ticks.append(t)
        if len(ticks) > cap:
            return None
    # register full
    return ticks, True


def sample_batch(tables, first_id, count, times_out, counts_out, trunc_out):
    """Fill output buffers with complete trajectories; returns (done, slots used)."""
    used = 0
    for i in range(count):
        res = trajectory(tables, first_id + i, times_out.shape[0] - used)
        if res is None or len(res[0]) > times_out.shape[0] - used:
            return i, used
        ticks, truncated = res
        times_out[used : used + len(ticks)] = ticks
        used += len(ticks)
        counts_out[i] = len(ticks)
        trunc_out[i] = truncated
    return count, used
