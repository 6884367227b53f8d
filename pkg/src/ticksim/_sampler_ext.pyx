# cython: language_level=3
"""Compiled trajectory kernel; mirrors ``_sampler_py`` step for step."""
from libc.stdint cimport uint64_t, int64_t, int8_t
from libc.stdlib cimport malloc, free
from libc.math cimport fabs

NAME = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double ROOT_TOL = 1e-10
cdef int ROOT_ITERS = 200

cdef inline uint64_t mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)

cdef inline double uniform(uint64_t key, uint64_t counter) noexcept nogil:
    cdef uint64_t z = mix(key + GOLDEN * (counter + 1))
    return (<double>(z >> 11) + 0.5) * 1.1102230246251565e-16

cdef inline double row_dot_re(const double complex[:, ::1] rows, Py_ssize_t r,
                              const double complex* x, Py_ssize_t n) noexcept nogil:
    cdef double complex acc = 0
    cdef Py_ssize_t k
    for k in range(n):
        acc = acc + rows[r, k] * x[k]
    return acc.real

cdef inline void matvec(const double complex[:, :, ::1] mats, Py_ssize_t b,
                        const double complex* x, double complex* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double complex acc
    for i in range(n):
        acc = 0
        for k in range(n):
            acc = acc + mats[b, i, k] * x[k]
        out[i] = acc

cdef inline double taylor(const double* coef, int m, double tau) noexcept nogil:
    cdef double acc = 0.0
    cdef int i
    for i in range(m - 1, -1, -1):
        acc = acc * tau + coef[i]
    return acc

cdef struct Work:
    double complex* x
    double complex* y
    double complex* tmp
    double complex* term
    double complex* rho_out
    double* coef
    double* weights

cdef Py_ssize_t run_one(
    const int64_t[::1] gptr, const int64_t[::1] gidx, const double complex[::1] gdat,
    const double complex[:, :, ::1] powers,
    const double complex[:, ::1] wrows,
    const double complex[:, ::1] trows,
    const double complex[:, :, ::1] jops,
    const double complex[::1] rho0,
    double dt, double t_max, int64_t max_ticks, uint64_t seed,
    uint64_t traj, double* times, Py_ssize_t cap, int8_t* truncated, Work* w,
) noexcept nogil:
    """Number of ticks written to ``times``, or -1 if more than ``cap``."""
    cdef Py_ssize_t d = jops.shape[1]
    cdef Py_ssize_t n = d * d
    cdef Py_ssize_t n_rows = wrows.shape[0] - 1
    cdef int n_terms = trows.shape[0]
    cdef Py_ssize_t n_jumps = jops.shape[0]
    cdef uint64_t key = mix(seed + GOLDEN * (traj + 1))
    cdef uint64_t counter = 0
    cdef Py_ssize_t n_ticks = 0
    cdef double t = 0.0, u, remaining, width, lo_t, hi_t, mid_t, s, tau, total, target, cum
    cdef Py_ssize_t n_full, lo, hi, mid, i, k, p, q, r, jj, b, pick, steps
    cdef double complex acc
    cdef double complex* swap

    for i in range(n):
        w.x[i] = rho0[i]
    truncated[0] = 0
    while max_ticks < 0 or n_ticks < max_ticks:
        u = uniform(key, counter)
        counter += 1
        remaining = t_max - t
        n_full = <Py_ssize_t>(remaining / dt)
        if n_full > n_rows:
            n_full = n_rows
        lo = 0
        hi = n_full
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if row_dot_re(wrows, mid, w.x, n) >= u:
                lo = mid
            else:
                hi = mid - 1
        # y = P^lo x through binary powers
        for i in range(n):
            w.y[i] = w.x[i]
        steps = lo
        b = 0
        while steps:
            if steps & 1:
                matvec(powers, b, w.y, w.tmp, n)
                swap = w.y
                w.y = w.tmp
                w.tmp = swap
            steps >>= 1
            b += 1
        for k in range(n_terms):
            w.coef[k] = row_dot_re(trows, k, w.y, n)
        width = remaining - lo * dt
        if dt < width:
            width = dt
        if taylor(w.coef, n_terms, width) >= u:
            truncated[0] = 1
            return n_ticks
        lo_t = 0.0
        hi_t = width
        tau = -1.0
        for i in range(ROOT_ITERS):
            mid_t = 0.5 * (lo_t + hi_t)
            s = taylor(w.coef, n_terms, mid_t)
            if fabs(s - u) <= ROOT_TOL:
                tau = mid_t
                break
            if s > u:
                lo_t = mid_t
            else:
                hi_t = mid_t
        if tau < 0:
            tau = 0.5 * (lo_t + hi_t)
        # xt = sum_m (tau G)^m y / m!, accumulated into x
        for i in range(n):
            w.term[i] = w.y[i]
            w.x[i] = w.y[i]
        for k in range(1, n_terms):
            for i in range(n):
                acc = 0
                for p in range(gptr[i], gptr[i + 1]):
                    acc = acc + gdat[p] * w.term[gidx[p]]
                w.tmp[i] = acc * (tau / k)
            for i in range(n):
                w.term[i] = w.tmp[i]
                w.x[i] = w.x[i] + w.term[i]
        # branch weights tr(J rho J^+); rho[p, q] = x[q * d + p]
        total = 0.0
        for jj in range(n_jumps):
            w.weights[jj] = 0.0
            for p in range(d):
                for q in range(d):
                    acc = 0
                    for r in range(d):
                        acc = acc + jops[jj, p, r] * w.x[q * d + r]
                    w.tmp[q * d + p] = acc
            # tr(A J^+) = sum_{p,q} A[p,q] conj(J[p,q])
            acc = 0
            for p in range(d):
                for q in range(d):
                    acc = acc + w.tmp[q * d + p] * jops[jj, p, q].conjugate()
            w.weights[jj] = acc.real
            total += w.weights[jj]
        target = uniform(key, counter) * total
        counter += 1
        cum = 0.0
        pick = n_jumps - 1
        for jj in range(n_jumps):
            cum += w.weights[jj]
            if cum > target:
                pick = jj
                break
        # x = J rho J^+ / weight
        for p in range(d):
            for q in range(d):
                acc = 0
                for r in range(d):
                    acc = acc + jops[pick, p, r] * w.x[q * d + r]
                w.tmp[q * d + p] = acc
        for p in range(d):
            for q in range(d):
                acc = 0
                for r in range(d):
                    acc = acc + w.tmp[r * d + p] * jops[pick, q, r].conjugate()
                w.rho_out[q * d + p] = acc / w.weights[pick]
        for i in range(n):
            w.x[i] = w.rho_out[i]
        t = t + lo * dt + tau
        if n_ticks >= cap:
            return -1
        times[n_ticks] = t
        n_ticks += 1
    # register full
    truncated[0] = 1
    return n_ticks

def sample_batch(tables, Py_ssize_t first_id, Py_ssize_t count, double[::1] times_out,
                 int64_t[::1] counts_out, int8_t[::1] trunc_out):
    """Fill output buffers with complete trajectories; returns (done, slots used)."""
    cdef const int64_t[::1] gptr = tables.gen_indptr
    cdef const int64_t[::1] gidx = tables.gen_indices
    cdef const double complex[::1] gdat = tables.gen_data
    cdef const double complex[:, :, ::1] powers = tables.powers
    cdef const double complex[:, ::1] wrows = tables.wrows
    cdef const double complex[:, ::1] trows = tables.trows
    cdef const double complex[:, :, ::1] jops = tables.jops
    cdef const double complex[::1] rho0 = tables.rho0
    cdef double dt = tables.dt
    cdef double t_max = tables.t_max
    cdef int64_t max_ticks = tables.max_ticks
    cdef uint64_t seed = tables.seed
    cdef Py_ssize_t n = rho0.shape[0]
    cdef Py_ssize_t used = 0, done = 0, got, i
    cdef Py_ssize_t cap_total = times_out.shape[0]
    cdef Work w
    cdef double dummy = 0.0
    cdef double* base = &times_out[0] if cap_total > 0 else &dummy

    w.x = <double complex*> malloc(n * sizeof(double complex))
    w.y = <double complex*> malloc(n * sizeof(double complex))
    w.tmp = <double complex*> malloc(n * sizeof(double complex))
    w.term = <double complex*> malloc(n * sizeof(double complex))
    w.rho_out = <double complex*> malloc(n * sizeof(double complex))
    w.coef = <double*> malloc(trows.shape[0] * sizeof(double))
    w.weights = <double*> malloc(jops.shape[0] * sizeof(double))
    if not (w.x and w.y and w.tmp and w.term and w.rho_out and w.coef and w.weights):
        free(w.x); free(w.y); free(w.tmp); free(w.term); free(w.rho_out)
        free(w.coef); free(w.weights)
        raise MemoryError("sampler workspace allocation failed")
    try:
        with nogil:
            for i in range(count):
                got = run_one(gptr, gidx, gdat, powers, wrows, trows, jops, rho0, dt, t_max, max_ticks,
                              seed, <uint64_t>(first_id + i), base + used, cap_total - used,
                              &trunc_out[i], &w)
                if got < 0:
                    break
                counts_out[i] = got
                used += got
                done += 1
    finally:
        free(w.x); free(w.y); free(w.tmp); free(w.term); free(w.rho_out)
        free(w.coef); free(w.weights)
    return done, used
