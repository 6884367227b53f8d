"""Dense complex linear algebra for clock dynamics.

Operators are plain ``numpy`` complex arrays. Superoperators act on
column-stacked vectors, ``vec(A X B) = (B^T kron A) vec(X)``, everywhere in
the package.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError, SizeError, ValidationError

DEFAULT_MAX_DIM = 4096
HERMITIAN_TOL = 1e-12
EXPM_TOL = 1e-12


def max_dim() -> int:
    """Largest allowed row/column count of a dense matrix.

    Overridden by the ``TICKSIM_MAX_DIM`` environment variable.
    """
    raw = os.environ.get("TICKSIM_MAX_DIM")
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValidationError(f"TICKSIM_MAX_DIM must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ValidationError("TICKSIM_MAX_DIM must be positive")
    return value


def check_size(rows: int, cols: int) -> None:
    cap = max_dim()
    if rows > cap or cols > cap:
        raise SizeError(
            f"matrix of shape {rows}x{cols} exceeds the cap {cap}x{cap} "
            "(set TICKSIM_MAX_DIM to raise it)"
        )


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-d complex array."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} has non-finite entries")
    return arr


def as_square(m, name: str = "matrix") -> np.ndarray:
    arr = as_matrix(m, name)
    if arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    return arr


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - dagger(m))))


def check_hermitian(m, tol: float = HERMITIAN_TOL, name: str = "operator") -> np.ndarray:
    arr = as_square(m, name)
    err = hermiticity_error(arr)
    if err > tol:
        raise ValidationError(f"{name} is not Hermitian (max deviation {err:.3e} > {tol:g})")
    return arr


def check_density(rho, *, subnormalized: bool = False, name: str = "state") -> np.ndarray:
    """Validate a (possibly subnormalized) density matrix and return it."""
    arr = check_hermitian(rho, HERMITIAN_TOL, name)
    tr = float(np.trace(arr).real)
    if subnormalized:
        if tr < -HERMITIAN_TOL or tr > 1.0 + 1e-12:
            raise ValidationError(f"{name} trace {tr!r} outside [0, 1]")
    elif abs(tr - 1.0) > 1e-12:
        raise ValidationError(f"{name} trace {tr!r} differs from 1")
    lo = float(np.linalg.eigvalsh(0.5 * (arr + dagger(arr)))[0])
    if lo < -1e-10:
        raise ValidationError(f"{name} has negative eigenvalue {lo:.3e}")
    return arr


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if n is None:
        n = math.isqrt(v.size)
    if n * n != v.size:
        raise ShapeError(f"vector of length {v.size} is not a square operator")
    return v.reshape(n, n, order="F")


def trace_row(n: int) -> np.ndarray:
    """Row vector r with r @ vec(X) == tr(X)."""
    return vec(np.eye(n, dtype=complex))


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Linear map on n x n operators, stored as an n^2 x n^2 matrix."""

    dim: int
    mat: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=complex)
        if mat.shape != (self.dim**2, self.dim**2):
            raise ShapeError(
                f"superoperator on dim {self.dim} needs shape {(self.dim**2,) * 2}, got {mat.shape}"
            )
        mat.flags.writeable = False
        object.__setattr__(self, "mat", mat)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return unvec(self.mat @ vec(x), self.dim)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        if self.dim != other.dim:
            raise ShapeError("superoperator dimensions differ")
        return Superoperator(self.dim, self.mat + other.mat)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        if self.dim != other.dim:
            raise ShapeError("superoperator dimensions differ")
        return Superoperator(self.dim, self.mat - other.mat)

    def scaled(self, c: complex) -> "Superoperator":
        return Superoperator(self.dim, c * self.mat)

    def compose(self, other: "Superoperator") -> "Superoperator":
        """self after other."""
        return Superoperator(self.dim, self.mat @ other.mat)


def kron(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    check_size(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])
    return np.kron(a, b)


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Kept subsystems appear in ascending order in the result.
    """
    m = as_square(m)
    dims = [int(x) for x in dims]
    if any(x < 1 for x in dims) or int(np.prod(dims)) != m.shape[0]:
        raise ShapeError(f"subsystem dims {dims} do not match matrix dimension {m.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ShapeError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise ShapeError("too many subsystems")
    rows = list(letters[:n])
    cols = [rows[i] if i not in keep else letters[n + i] for i in range(n)]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    t = m.reshape(dims + dims)
    reduced = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    size = int(np.prod([dims[i] for i in keep])) if keep else 1
    return reduced.reshape(size, size)


def _pade_degree(tol: float) -> int:
    # Truncation bound of the [q/q] Pade approximant at 1-norm 0.5.
    for q in range(3, 14):
        bound = (math.factorial(q) ** 2) / (math.factorial(2 * q) * math.factorial(2 * q + 1))
        if bound * 0.5 ** (2 * q + 1) <= 0.1 * tol:
            return q
    return 13


def _pade_coefficients(q: int) -> list[float]:
    return [
        math.factorial(2 * q - k) * math.factorial(q)
        / (math.factorial(2 * q) * math.factorial(k) * math.factorial(q - k))
        for k in range(q + 1)
    ]


def matrix_exp(m, tol: float = EXPM_TOL) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a diagonal Pade approximant.

    The matrix is scaled by ``2**-s`` until its 1-norm is at most 0.5, the
    Pade degree is chosen from ``tol``, and the result is squared ``s``
    times.
    """
    a = as_square(m)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    n = a.shape[0]
    norm = float(np.max(np.sum(np.abs(a), axis=0)))
    if not math.isfinite(norm):
        raise NumericError("matrix norm is not finite")
    s = 0 if norm <= 0.5 else int(math.ceil(math.log2(norm / 0.5)))
    a = a / (2.0**s)
    q = _pade_degree(tol)
    c = _pade_coefficients(q)
    a2 = a @ a
    even_powers = [np.eye(n, dtype=complex)]
    while 2 * len(even_powers) <= q:
        even_powers.append(even_powers[-1] @ a2)
    even = sum(c[2 * j] * p for j, p in enumerate(even_powers) if 2 * j <= q)
    odd = a @ sum(c[2 * j + 1] * p for j, p in enumerate(even_powers) if 2 * j + 1 <= q)
    result = np.linalg.solve(even - odd, even + odd)
    for _ in range(s):
        result = result @ result
    if not np.all(np.isfinite(result)):
        raise NumericError("matrix exponential overflowed")
    return result


def lindblad_superop(h, dissipators: Sequence = ()) -> Superoperator:
    """Matrix of rho -> -i[h, rho] + sum_j (D rho D^+ - {D^+ D, rho}/2)."""
    h = check_hermitian(h, HERMITIAN_TOL, "Hamiltonian")
    n = h.shape[0]
    check_size(n * n, n * n)
    eye = np.eye(n, dtype=complex)
    mat = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for idx, d_op in enumerate(dissipators):
        d_op = as_square(d_op, f"dissipator {idx}")
        if d_op.shape != h.shape:
            raise ShapeError(f"dissipator {idx} has shape {d_op.shape}, expected {h.shape}")
        ddd = dagger(d_op) @ d_op
        mat += np.kron(d_op.conj(), d_op) - 0.5 * (np.kron(eye, ddd) + np.kron(ddd.T, eye))
    return Superoperator(n, mat)


def sandwich_superop(ops: Sequence, n: int) -> Superoperator:
    """Matrix of rho -> sum_j K_j rho K_j^+."""
    check_size(n * n, n * n)
    mat = np.zeros((n * n, n * n), dtype=complex)
    for k_op in ops:
        k_op = as_square(k_op)
        mat += np.kron(k_op.conj(), k_op)
    return Superoperator(n, mat)


def choi_matrix(s: Superoperator) -> np.ndarray:
    """Choi matrix sum_ij |i><j| kron s(|i><j|)."""
    n = s.dim
    s4 = s.mat.reshape(n, n, n, n)
    # s4[q, p, j, i]: output entry (p, q) of s(|i><j|)
    return s4.transpose(3, 1, 2, 0).reshape(n * n, n * n)


def is_psd(m, tol: float = 1e-10) -> tuple[bool, float]:
    """Return (min eigenvalue >= -tol, min eigenvalue)."""
    m = as_square(m)
    err = hermiticity_error(m)
    if err > 1e-10:
        raise ValidationError(f"matrix is not Hermitian (max deviation {err:.3e})")
    lo = float(np.linalg.eigvalsh(0.5 * (m + dagger(m)))[0])
    return lo >= -tol, lo


def trace_norm_hermitian(m: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + dagger(m))))))


def induced_one_norm(m: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(m), axis=0))) if m.size else 0.0


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random full-rank (or given rank) density matrix."""
    rank = n if rank is None else rank
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    rho = g @ dagger(g)
    rho = 0.5 * (rho + dagger(rho))
    return rho / np.trace(rho).real


def basis_projector(n: int, k: int) -> np.ndarray:
    p = np.zeros((n, n), dtype=complex)
    p[k, k] = 1.0
    return p
