"""Linear algebra over exact rationals or floats.

Every other module goes through this one for ranks, null spaces, affine
solves and the canonical symplectic pairing.  Matrices are plain numpy
arrays: ``dtype=object`` holding :class:`fractions.Fraction` in exact
mode, ``float64`` in float mode.
"""
from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "AffineSolution",
    "Infeasible",
    "affine_image_equations",
    "affine_solve",
    "arithmetic",
    "as_matrix",
    "as_vector",
    "canonical_rows",
    "eye",
    "format_scalar",
    "get_mode",
    "get_tol",
    "independent_rows",
    "is_zero",
    "matrices_equal",
    "mode_from_env",
    "stack",
    "rank",
    "rank_nullspace",
    "rref",
    "row_space_contains",
    "row_space_intersection",
    "scalar",
    "set_mode",
    "symplectic_pairing",
    "zeros",
]

DEFAULT_TOL = 1e-10

_state = {"mode": "exact", "tol": DEFAULT_TOL}


def set_mode(mode: str = "exact", tol: float | None = None) -> None:
    """Select the arithmetic used by all subsequent kernel calls."""
    if mode not in ("exact", "float"):
        raise ValueError(f"unknown arithmetic mode {mode!r}")
    _state["mode"] = mode
    if tol is not None:
        if not tol > 0:
            raise ValueError("tolerance must be positive")
        _state["tol"] = float(tol)


def get_mode() -> str:
    return _state["mode"]


def get_tol() -> float:
    return _state["tol"]


@contextmanager
def arithmetic(mode: str, tol: float | None = None):
    """Temporarily switch arithmetic mode.

    >>> with arithmetic("float"):
    ...     get_mode()
    'float'
    """
    saved = dict(_state)
    set_mode(mode, tol)
    try:
        yield
    finally:
        _state.update(saved)


def mode_from_env(default: str) -> str:
    """``DISEVO_MODE`` wins over whatever the caller asked for."""
    return os.environ.get("DISEVO_MODE", default) or default


def _exact() -> bool:
    return _state["mode"] == "exact"


# -- scalars ---------------------------------------------------------------

def scalar(value) -> Fraction | float:
    """Coerce ``value`` to the scalar type of the current mode.

    Strings such as ``"5/2"`` or ``"-0.5"`` are accepted in both modes.
    Floats entering exact mode are read through their decimal repr, so
    ``0.1`` becomes ``1/10`` rather than the nearest binary fraction.
    """
    if isinstance(value, (np.integer,)):
        value = int(value)
    elif isinstance(value, np.floating):
        value = float(value)
    if _exact():
        if isinstance(value, Fraction):
            return value
        if isinstance(value, bool):
            return Fraction(int(value))
        if isinstance(value, float):
            if not np.isfinite(value):
                raise ValueError("non-finite value in exact mode")
            return Fraction(repr(value))
        if isinstance(value, str):
            return Fraction(value.strip())
        return Fraction(value)
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return float(value)


def format_scalar(value) -> str | float:
    """JSON-friendly rendering: ``"p/q"`` strings exactly, floats as is."""
    if isinstance(value, Fraction):
        return str(value)
    return float(value)


def _dtype():
    return object if _exact() else float


def zeros(shape) -> np.ndarray:
    if _exact():
        out = np.empty(shape, dtype=object)
        out.fill(Fraction(0))
        return out
    return np.zeros(shape)


def eye(n: int) -> np.ndarray:
    out = zeros((n, n))
    for i in range(n):
        out[i, i] = scalar(1)
    return out


def as_matrix(rows, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Build a 2-D array in the current mode.

    ``shape`` is only needed for empty input, where numpy cannot infer
    the column count.
    """
    if isinstance(rows, np.ndarray) and rows.ndim == 2:
        src = rows
    else:
        src = list(rows) if rows is not None else []
        if not src:
            if shape is None:
                shape = (0, 0)
            return zeros(shape)
        src = [list(r) for r in src]
        widths = {len(r) for r in src}
        if len(widths) != 1:
            raise ValueError("ragged matrix rows")
        src = np.array(src, dtype=object).reshape(len(src), widths.pop())
    out = zeros(src.shape)
    for idx, v in np.ndenumerate(src):
        out[idx] = scalar(v)
    if shape is not None and out.shape != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)}, got {out.shape}")
    return out


def as_vector(values, n: int | None = None) -> np.ndarray:
    if values is None:
        values = [0] * (n or 0)
    vals = list(values)
    if n is not None and len(vals) != n:
        raise ValueError(f"expected a vector of length {n}, got {len(vals)}")
    out = zeros(len(vals))
    for i, v in enumerate(vals):
        out[i] = scalar(v)
    return out


def is_zero(value, scale: float = 1.0) -> bool:
    if _exact():
        return value == 0
    return abs(float(value)) <= _state["tol"] * max(scale, 1.0)


def _all_zero(arr: np.ndarray, scale: float = 1.0) -> bool:
    if arr.size == 0:
        return True
    if _exact():
        return all(v == 0 for v in arr.flat)
    return float(np.max(np.abs(arr))) <= _state["tol"] * max(scale, 1.0)


def _scale(M: np.ndarray) -> float:
    if _exact() or M.size == 0:
        return 1.0
    return float(np.max(np.abs(M)))


# -- row reduction -----------------------------------------------------------

def rref(M: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and pivot columns.

    Exact mode is plain Gauss-Jordan on fractions.  Float mode uses
    partial pivoting and treats entries below ``tol * max|M|`` as zero.
    """
    M = np.asarray(M)
    rows, cols = M.shape
    if _exact():
        R = [[v if type(v) is Fraction else Fraction(v) for v in row] for row in M]
        pivots: list[int] = []
        r = 0
        for c in range(cols):
            if r == rows:
                break
            k = next((i for i in range(r, rows) if R[i][c] != 0), None)
            if k is None:
                continue
            R[r], R[k] = R[k], R[r]
            piv = R[r][c]
            if piv != 1:
                R[r] = [v / piv if v else v for v in R[r]]
            for i in range(rows):
                if i != r and R[i][c] != 0:
                    f = R[i][c]
                    R[i] = [a - f * b if b else a for a, b in zip(R[i], R[r])]
            pivots.append(c)
            r += 1
        out = zeros((rows, cols))
        for i in range(rows):
            for j in range(cols):
                out[i, j] = R[i][j]
        return out, pivots

    R = np.array(M, dtype=float)
    thresh = _state["tol"] * max(_scale(R), 1e-300)
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        k = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[k, c]) <= thresh:
            R[r:, c] = 0.0
            continue
        R[[r, k]] = R[[k, r]]
        R[r] /= R[r, c]
        for i in range(rows):
            if i != r:
                R[i] -= R[i, c] * R[r]
        R[r, c] = 1.0
        pivots.append(c)
        r += 1
    R[np.abs(R) <= thresh] = 0.0
    return R, pivots


def canonical_rows(rows: np.ndarray) -> np.ndarray:
    """Unique basis of the row space: its RREF with zero rows dropped."""
    rows = np.asarray(rows)
    if rows.shape[0] == 0:
        return rows.copy()
    R, piv = rref(rows)
    return R[: len(piv)].copy()


def _null_from_rref(R: np.ndarray, pivots: list[int], cols: int) -> list[np.ndarray]:
    free = [c for c in range(cols) if c not in set(pivots)]
    basis = []
    for f in free:
        v = zeros(cols)
        v[f] = scalar(1)
        for i, p in enumerate(pivots):
            v[p] = -R[i, f]
        basis.append(v)
    return basis


def _right_null(M: np.ndarray) -> tuple[int, list[np.ndarray]]:
    rows, cols = M.shape
    if cols == 0:
        return 0, []
    if rows == 0:
        return 0, [eye(cols)[i] for i in range(cols)]
    if _exact():
        R, piv = rref(M)
        raw = _null_from_rref(R, piv, cols)
        rk = len(piv)
    else:
        _, s, vt = np.linalg.svd(np.asarray(M, dtype=float))
        smax = s[0] if s.size else 0.0
        rk = int(np.sum(s > _state["tol"] * smax)) if smax > 0 else 0
        raw = list(vt[rk:])
    if not raw:
        return rk, []
    basis = canonical_rows(np.array(raw, dtype=_dtype()).reshape(len(raw), cols))
    return rk, [basis[i].copy() for i in range(basis.shape[0])]


def rank_nullspace(M) -> tuple[int, list[np.ndarray], list[np.ndarray]]:
    """Rank plus canonical bases of the right and left null spaces.

    Each basis is the reduced row echelon form of the null space, so its
    vectors are unique and their leading entries equal one.

    >>> r, right, left = rank_nullspace(as_matrix([[1, 0, 0], [2, 1, 1]]))
    >>> r, [list(map(str, v)) for v in right], left
    (2, [['0', '1', '-1']], [])
    """
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError("rank_nullspace expects a matrix")
    rk, right = _right_null(M)
    _, left = _right_null(M.T)
    if not _exact():
        rk = M.shape[1] - len(right)
    return rk, right, left


def rank(M) -> int:
    M = np.asarray(M)
    if M.size == 0:
        return 0
    if _exact():
        return len(rref(M)[1])
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    return int(np.sum(s > _state["tol"] * s[0])) if s[0] > 0 else 0


def independent_rows(rows: np.ndarray, start: np.ndarray | None = None) -> list[int]:
    """Indices of ``rows`` that raise the rank, scanning in order.

    ``start`` seeds the span, so only rows outside it are picked.
    """
    rows = np.asarray(rows)
    width = rows.shape[1]
    basis = np.asarray(start) if start is not None and len(start) else zeros((0, width))
    current = rank(basis) if basis.shape[0] else 0
    picked = []
    for i in range(rows.shape[0]):
        trial = np.vstack([basis, rows[i : i + 1]])
        r = rank(trial)
        if r > current:
            basis, current = trial, r
            picked.append(i)
    return picked


def row_space_contains(rows: np.ndarray, v: np.ndarray) -> bool:
    rows = np.asarray(rows)
    if rows.shape[0] == 0:
        return _all_zero(np.asarray(v))
    return rank(np.vstack([rows, np.asarray(v).reshape(1, -1)])) == rank(rows)


def row_space_intersection(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Canonical basis of rowspace(A) ∩ rowspace(B)."""
    A, B = np.asarray(A), np.asarray(B)
    width = A.shape[1] if A.ndim == 2 else B.shape[1]
    if A.shape[0] == 0 or B.shape[0] == 0:
        return zeros((0, width))
    K = np.hstack([A.T, -B.T])
    _, right, _ = rank_nullspace(K)
    if not right:
        return zeros((0, width))
    vecs = np.array([v[: A.shape[0]] @ A for v in right], dtype=_dtype())
    return canonical_rows(vecs.reshape(len(right), width))


# -- affine systems ----------------------------------------------------------

class Infeasible(ValueError):
    """``M x = b`` has no solution; ``certificate`` is a left-null vector w with w·b ≠ 0."""

    def __init__(self, certificate: np.ndarray, residual=None):
        self.certificate = certificate
        self.residual = residual
        super().__init__(
            "system is infeasible; certificate "
            + "(" + ", ".join(str(format_scalar(c)) for c in certificate) + ")"
        )


@dataclass(frozen=True, eq=False)
class AffineSolution:
    """Solution set ``particular + span(null_basis)``.

    ``particular`` is the minimum-norm solution, which is orthogonal to
    the null space and therefore does not depend on how the free
    directions are parametrized.
    """

    particular: np.ndarray
    null_basis: tuple[np.ndarray, ...]

    def point(self, coefficients: Sequence | None = None) -> np.ndarray:
        x = self.particular.copy()
        if coefficients is None:
            return x
        if len(coefficients) != len(self.null_basis):
            raise ValueError(
                f"expected {len(self.null_basis)} coefficients, got {len(coefficients)}"
            )
        for lam, v in zip(coefficients, self.null_basis):
            x = x + scalar(lam) * v
        return x


def _solve_square(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a nonsingular square system via RREF of the augmented matrix."""
    n = M.shape[0]
    R, _ = rref(np.hstack([M, b.reshape(-1, 1)]))
    return R[:n, n].copy()


def affine_solve(M, b) -> AffineSolution:
    """Solve ``M x = b`` or raise :class:`Infeasible`.

    >>> sol = affine_solve(eye(2), as_vector([3, 5]))
    >>> [str(v) for v in sol.particular], sol.null_basis
    (['3', '5'], ())
    """
    M = np.asarray(M)
    b = np.asarray(b)
    rows, cols = M.shape
    if b.shape != (rows,):
        raise ValueError(f"right-hand side has length {b.shape}, expected {rows}")
    rk, right, left = rank_nullspace(M)
    scale = max(_scale(M), _scale(b.reshape(1, -1)) if b.size else 1.0)

    if _exact():
        R, piv = rref(np.hstack([M, b.reshape(-1, 1)]))
        if cols in piv:
            cert = next(w for w in left if w @ b != 0)
            raise Infeasible(cert, residual=cert @ b)
        x = zeros(cols)
        for i, p in enumerate(piv):
            x[p] = R[i, cols]
        if right:
            N = np.array(right, dtype=object)
            coeff = _solve_square(N @ N.T, N @ x)
            x = x - coeff @ N
    else:
        Mf = np.asarray(M, dtype=float)
        bf = np.asarray(b, dtype=float)
        if cols == 0:
            x = np.zeros(0)
        else:
            x = np.linalg.pinv(Mf, rcond=_state["tol"]) @ bf
            if right:
                N = np.array(right, dtype=float)
                x = x - np.linalg.lstsq(N.T, x, rcond=None)[0] @ N
        res = Mf @ x - bf if rows else np.zeros(0)
        if res.size and np.max(np.abs(res)) > 1e3 * _state["tol"] * max(scale, 1.0):
            cands = [w for w in left if abs(float(w @ bf)) > _state["tol"] * max(scale, 1.0)]
            cert = cands[0] if cands else res / np.max(np.abs(res))
            raise Infeasible(cert, residual=float(cert @ bf))
    return AffineSolution(particular=x, null_basis=tuple(right))


def affine_image_equations(T, t, D=None, d=None) -> tuple[np.ndarray, np.ndarray]:
    """Implicit equations of an affine image.

    The image of ``{z : D z = d}`` under ``z ↦ T z + t`` is returned as
    ``(G, c)`` with ``G y + c = 0`` exactly on the image.  The rows of
    ``[G | c]`` are in reduced row echelon form, so equal images give
    identical output.  Raises :class:`Infeasible` when the domain is
    empty.
    """
    T = np.asarray(T)
    t = np.asarray(t)
    k, m = T.shape
    if D is None or np.asarray(D).shape[0] == 0:
        D = zeros((0, m))
        d = zeros(0)
    D = np.asarray(D)
    d = np.asarray(d)
    if D.shape[0]:
        affine_solve(D, d)
    if k == 0:
        return zeros((0, 0)), zeros(0)
    K = np.hstack([T.T, -D.T]) if D.shape[0] else T.T
    _, right, _ = rank_nullspace(K)
    rows = []
    for v in right:
        g, nu = v[:k], v[k:]
        if _all_zero(g):
            continue
        c0 = -(g @ t) - (nu @ d if nu.size else scalar(0))
        rows.append(np.concatenate([g, np.array([c0], dtype=_dtype())]))
    if not rows:
        return zeros((0, k)), zeros(0)
    canon = canonical_rows(np.array(rows, dtype=_dtype()).reshape(len(rows), k + 1))
    return canon[:, :k].copy(), canon[:, k].copy()


# -- symplectic pairing ------------------------------------------------------

def symplectic_pairing(u, v):
    """Canonical two-form on tangent vectors ``u = (δx, δp)``.

    >>> e1, z = as_vector([1, 0]), as_vector([0, 0])
    >>> symplectic_pairing((e1, z), (z, e1))
    Fraction(1, 1)
    """
    (ux, up), (vx, vp) = u, v
    ux, up, vx, vp = (np.asarray(a) for a in (ux, up, vx, vp))
    n = ux.shape[0]
    if not (up.shape == vx.shape == vp.shape == (n,)):
        raise ValueError("tangent vectors live over slices of different dimension")
    if n == 0:
        return scalar(0)
    return ux @ vp - vx @ up


def matrices_equal(A, B) -> bool:
    """Exact equality, or agreement within the float tolerance."""
    A, B = np.asarray(A), np.asarray(B)
    if A.shape != B.shape:
        return False
    if A.size == 0:
        return True
    if _exact():
        return all(a == b for a, b in zip(A.flat, B.flat))
    scale = max(_scale(np.asarray(A, dtype=float)), _scale(np.asarray(B, dtype=float)), 1.0)
    return float(np.max(np.abs(np.asarray(A, float) - np.asarray(B, float)))) <= 1e3 * _state["tol"] * scale


def stack(rows: Iterable[np.ndarray], width: int) -> np.ndarray:
    """Stack 1-D arrays into a matrix, allowing the empty case."""
    rows = list(rows)
    if not rows:
        return zeros((0, width))
    return np.array(rows, dtype=_dtype()).reshape(len(rows), width)
