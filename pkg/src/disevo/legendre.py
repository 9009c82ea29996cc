"""Discrete Legendre transforms and constraint surfaces.

A move is handled as an affine relation between the phase spaces of
its two boundary slices.  It is parametrized by a vector ``z`` (for an
action: the boundary configurations plus any bulk variables) restricted
to a domain ``D z = d``.  The source and target phase-space points are
affine functions of ``z``.  Pre- and post-constraint surfaces are then
the two projections of this relation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernel as K
from .action import QuadraticAction, Slice

__all__ = [
    "AffineConstraint",
    "ConstraintSet",
    "MoveRelation",
    "OffConstraintSurface",
    "PhasePoint",
    "constraints_from_rows",
    "dirac_matrix",
    "lagrangian_two_form",
    "post_constraints",
    "post_legendre",
    "pre_constraints",
    "pre_legendre",
    "two_form_value",
]

TAGS = ("pre", "post", "both")
PROVENANCE = ("primary", "secondary", "extension")


@dataclass(frozen=True, eq=False)
class PhasePoint:
    slice: Slice
    x: np.ndarray
    p: np.ndarray
    tag: str = "matched"

    def __post_init__(self):
        n = self.slice.dim
        object.__setattr__(self, "x", K.as_vector(self.x, n))
        object.__setattr__(self, "p", K.as_vector(self.p, n))
        if self.tag not in ("pre", "post", "matched"):
            raise ValueError(f"unknown momentum tag {self.tag!r}")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.p])


@dataclass(frozen=True, eq=False)
class AffineConstraint:
    """The affine function ``gx·x + gp·p + c0`` required to vanish."""

    slice: Slice
    gx: np.ndarray
    gp: np.ndarray
    c0: object = 0
    tag: str = "post"
    provenance: str = "primary"
    origin: str = ""

    def __post_init__(self):
        n = self.slice.dim
        object.__setattr__(self, "gx", K.as_vector(self.gx, n))
        object.__setattr__(self, "gp", K.as_vector(self.gp, n))
        object.__setattr__(self, "c0", K.scalar(self.c0))
        if self.tag not in TAGS:
            raise ValueError(f"unknown constraint tag {self.tag!r}")
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if K.rank(self.gradient().reshape(1, -1)) == 0:
            raise ValueError("constraint gradient vanishes")

    def gradient(self) -> np.ndarray:
        return np.concatenate([self.gx, self.gp])

    def evaluate(self, x, p):
        return self.gx @ K.as_vector(x) + self.gp @ K.as_vector(p) + self.c0 \
            if self.slice.dim else self.c0

    def retag(self, tag: str | None = None, provenance: str | None = None, origin: str | None = None):
        return AffineConstraint(
            self.slice, self.gx, self.gp, self.c0,
            tag or self.tag, provenance or self.provenance,
            self.origin if origin is None else origin,
        )

    def describe(self) -> str:
        terms = []
        for sym, coeffs in (("p", self.gp), ("x", self.gx)):
            for lab, v in zip(self.slice.labels, coeffs):
                if not K.is_zero(v):
                    terms.append(f"{K.format_scalar(v)}*{sym}[{lab}]")
        if not K.is_zero(self.c0):
            terms.append(str(K.format_scalar(self.c0)))
        return " + ".join(terms) + " = 0"

    def __repr__(self) -> str:
        return f"<{self.tag} {self.provenance} @{self.slice.step}: {self.describe()}>"


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """An irreducible list of affine constraints on one slice."""

    slice: Slice
    constraints: tuple[AffineConstraint, ...] = ()

    def __post_init__(self):
        cons = tuple(self.constraints)
        object.__setattr__(self, "constraints", cons)
        for c in cons:
            if c.slice.labels != self.slice.labels:
                raise ValueError("constraint lives on a different slice")
        if cons and K.rank(self.gradients()) != len(cons):
            raise ValueError("constraint set is reducible: gradients are linearly dependent")

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __getitem__(self, i):
        return self.constraints[i]

    def gradients(self) -> np.ndarray:
        return K.stack((c.gradient() for c in self.constraints), 2 * self.slice.dim)

    def offsets(self) -> np.ndarray:
        return K.as_vector([c.c0 for c in self.constraints])

    def augmented(self) -> np.ndarray:
        """Rows ``[gx | gp | c0]``."""
        return K.stack(
            (np.concatenate([c.gradient(), np.array([c.c0], dtype=object if K.get_mode() == "exact" else float)])
             for c in self.constraints),
            2 * self.slice.dim + 1,
        )

    def residuals(self, x, p) -> list:
        return [c.evaluate(x, p) for c in self.constraints]

    def same_span(self, other: "ConstraintSet") -> bool:
        """Whether both sets cut out the same affine subspace."""
        a, b = self.augmented(), other.augmented()
        return K.matrices_equal(K.canonical_rows(a), K.canonical_rows(b))

    def contains(self, c: AffineConstraint) -> bool:
        row = np.concatenate([c.gradient(), np.array([c.c0], dtype=self.augmented().dtype)])
        return K.row_space_contains(self.augmented(), row)

    def with_tag(self, tag: str) -> "ConstraintSet":
        return ConstraintSet(self.slice, tuple(c.retag(tag=tag) for c in self.constraints))

    def __repr__(self) -> str:
        body = "; ".join(c.describe() for c in self.constraints) or "none"
        return f"ConstraintSet(@{self.slice.step}: {body})"


class OffConstraintSurface(ValueError):
    """Data violates a constraint; ``residuals`` lists the offending values."""

    def __init__(self, message: str, residuals: Sequence = (), constraints: Sequence = ()):
        self.residuals = list(residuals)
        self.constraints = list(constraints)
        super().__init__(message)


def constraints_from_rows(
    slc: Slice,
    G: np.ndarray,
    c: np.ndarray,
    tag: str,
    provenance: str = "primary",
    origin: str = "",
) -> ConstraintSet:
    """Wrap equations ``G (x, p) + c = 0`` as a constraint set in normal form.

    The normal form is the reduced row echelon form of ``[gp | gx | c]``:
    momentum columns come first so that a constraint's leading entry
    sits on a momentum whenever possible.
    """
    n = slc.dim
    G = np.asarray(G)
    if G.shape[0] == 0:
        return ConstraintSet(slc)
    rows = np.hstack([G[:, n:], G[:, :n], np.asarray(c).reshape(-1, 1)])
    canon = K.canonical_rows(rows)
    cons = []
    for r in canon:
        gp, gx, c0 = r[:n], r[n : 2 * n], r[2 * n]
        if K.rank(np.concatenate([gx, gp]).reshape(1, -1)) == 0:
            raise K.Infeasible(r, residual=c0)
        cons.append(AffineConstraint(slc, gx, gp, c0, tag, provenance, origin))
    return ConstraintSet(slc, tuple(cons))


def _constraint_rows(cset: ConstraintSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = cset.slice.dim
    if not len(cset):
        return K.zeros((0, n)), K.zeros((0, n)), K.zeros(0)
    grads = cset.gradients()
    return grads[:, :n], grads[:, n:], cset.offsets()


@dataclass(frozen=True, eq=False)
class MoveRelation:
    """Affine relation between source and target phase spaces.

    ``x_s = Xs z + xs``, ``p_s = Ps z + ps`` and likewise for the target,
    for every ``z`` with ``D z = d``.  ``gauge`` rows ``(G, g)`` pin down
    parameters that change nothing physical when a concrete solution is
    requested; they never enter constraint computations.
    """

    source: Slice
    target: Slice
    Xs: np.ndarray
    xs: np.ndarray
    Ps: np.ndarray
    ps: np.ndarray
    Xt: np.ndarray
    xt: np.ndarray
    Pt: np.ndarray
    pt: np.ndarray
    D: np.ndarray
    d: np.ndarray
    gauge: tuple = ()
    labels: tuple = ()

    @property
    def dim(self) -> int:
        return self.Xs.shape[1]

    def _map(self, side: str):
        if side == "source":
            return self.source, self.Xs, self.xs, self.Ps, self.ps
        return self.target, self.Xt, self.xt, self.Pt, self.pt

    def _domain(self, extra: Iterable[tuple[np.ndarray, np.ndarray]] = ()):
        Ds, ds = [self.D], [self.d]
        for E, e in extra:
            Ds.append(E)
            ds.append(e)
        return np.vstack(Ds), np.concatenate(ds)

    def _pull_rows(self, side: str, cset: ConstraintSet):
        _, X, x0, P, p0 = self._map(side)
        gx, gp, c0 = _constraint_rows(cset)
        if not len(cset):
            return K.zeros((0, self.dim)), K.zeros(0)
        return gx @ X + gp @ P, -(gx @ x0 + gp @ p0 + c0)

    def constraints(
        self,
        side: str,
        tag: str,
        given: ConstraintSet | None = None,
        given_side: str | None = None,
        provenance: str = "primary",
        origin: str = "",
    ) -> ConstraintSet:
        """Implicit equations of the projection onto ``side``.

        With ``given`` the domain is first cut down by that constraint set
        (living on ``given_side``), which yields images and pre-images of
        constraint surfaces.  Raises :class:`kernel.Infeasible` when the
        restricted domain is empty.
        """
        slc, X, x0, P, p0 = self._map(side)
        extra = []
        if given is not None and len(given):
            extra.append(self._pull_rows(given_side or side, given))
        D, d = self._domain(extra)
        n = slc.dim
        if n == 0:
            if D.shape[0]:
                K.affine_solve(D, d)
            return ConstraintSet(slc)
        T = np.vstack([X, P])
        t = np.concatenate([x0, p0])
        G, c = K.affine_image_equations(T, t, D, d)
        return constraints_from_rows(slc, G, c, tag, provenance, origin)

    def solve(self, side: str, x, p, params=None, strict: bool = False):
        """Solve for ``z`` given the phase-space point on ``side``.

        Returns ``(z, directions)`` where ``directions`` are the free
        z-directions that move the other side, in kernel order.  Their
        coefficients come from ``params`` (default zero unless
        ``strict``).
        """
        from .evolution import MissingParameter  # local import avoids a cycle

        slc, X, x0, P, p0 = self._map(side)
        other = "target" if side == "source" else "source"
        x = K.as_vector(x, slc.dim)
        p = K.as_vector(p, slc.dim)
        M = [X, P, self.D]
        b = [x - x0, p - p0, self.d]
        for Gz, gz in self.gauge:
            M.append(Gz)
            b.append(gz)
        M = np.vstack(M)
        b = np.concatenate(b)
        try:
            sol = K.affine_solve(M, b)
        except K.Infeasible as exc:
            cons = self.constraints(side, "pre" if side == "source" else "post")
            res = cons.residuals(x, p)
            bad = [c for c, r in zip(cons, res) if not K.is_zero(r)]
            raise OffConstraintSurface(
                f"data on {slc} violates {len(bad) or 'a'} constraint(s)",
                residuals=res,
                constraints=cons.constraints,
            ) from exc
        dirs = self.free_directions(other, sol.null_basis)
        n_dirs = len(dirs)
        if params is None:
            if strict and n_dirs:
                raise MissingParameter(f"{n_dirs} free parameter(s) required, none given", n_dirs)
            params = [0] * n_dirs
        params = list(params)
        if len(params) != n_dirs:
            raise MissingParameter(f"expected {n_dirs} free parameter(s), got {len(params)}", n_dirs)
        z = sol.particular
        for lam, v in zip(params, dirs):
            z = z + K.scalar(lam) * v
        return z, dirs

    def free_directions(self, side: str, null_basis: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Null z-directions whose effect on ``side`` is independent, greedily."""
        if not null_basis:
            return []
        _, X, _, P, _ = self._map(side)
        T = np.vstack([X, P])
        images = K.stack((T @ v for v in null_basis), T.shape[0])
        keep = K.independent_rows(images)
        return [null_basis[i] for i in keep]

    def point(self, side: str, z, tag: str = "matched") -> PhasePoint:
        slc, X, x0, P, p0 = self._map(side)
        return PhasePoint(slc, X @ z + x0, P @ z + p0, tag)

    def evolve(self, x, p, params=None, strict: bool = False, backward: bool = False) -> PhasePoint:
        side, other, tag = ("target", "source", "pre") if backward else ("source", "target", "post")
        z, _ = self.solve(side, x, p, params, strict)
        return self.point(other, z, tag)

    def push_tangent(self, side: str, dx, dp, dparams=()) -> tuple[np.ndarray, np.ndarray]:
        """Linearized map of a tangent vector to the other side.

        The tangent must be tangent to the constraint surface on ``side``.
        ``dparams`` shifts the free directions.
        """
        slc, X, _, P, _ = self._map(side)
        other = "target" if side == "source" else "source"
        M = np.vstack([X, P, self.D])
        b = np.concatenate([K.as_vector(dx, slc.dim), K.as_vector(dp, slc.dim), K.zeros(self.D.shape[0])])
        sol = K.affine_solve(M, b)
        dz = sol.particular
        dirs = self.free_directions(other, sol.null_basis)
        for lam, v in zip(dparams, dirs):
            dz = dz + K.scalar(lam) * v
        _, Xo, _, Po, _ = self._map(other)
        return Xo @ dz, Po @ dz

    @classmethod
    def from_action(cls, S: QuadraticAction) -> "MoveRelation":
        m, p, n = S.size, S.prev.dim, S.next.dim
        I = K.eye(m)
        Xs, Xt = I[:p], I[p : p + n]
        return cls(
            source=S.prev,
            target=S.next,
            Xs=Xs, xs=K.zeros(p),
            Ps=-S.hess[:p], ps=-S.grad[:p],
            Xt=Xt, xt=K.zeros(n),
            Pt=S.hess[p : p + n], pt=S.grad[p : p + n],
            D=S.hess[p + n :], d=-S.grad[p + n :],
        )


# -- the Legendre transforms -------------------------------------------------

def lagrangian_two_form(S: QuadraticAction) -> np.ndarray:
    """Mixed second-derivative block with the sign fixed so that Ω = −B."""
    return -S.B


def two_form_value(S: QuadraticAction, u, v):
    """Lagrangian two-form on tangents ``u = (δx_prev, δx_next)``."""
    (ux, uy), (vx, vy) = u, v
    ux, uy, vx, vy = (K.as_vector(w) for w in (ux, uy, vx, vy))
    B = S.B
    if B.size == 0:
        return K.scalar(0)
    return -(ux @ B @ vy) + vx @ B @ uy


def _require_plain(S: QuadraticAction, what: str):
    if S.has_aux:
        raise ValueError(f"{what} needs bulk values; this action carries auxiliary variables")


def post_legendre(S: QuadraticAction, x_prev, x_next, aux=None) -> PhasePoint:
    """Post-momenta ``p = ∂S/∂x_next`` at the given configuration.

    For an action with bulk variables the ``aux`` values must be given.
    """
    z = S.stack(x_prev, x_next, aux)
    grad = S.gradient(z)
    return PhasePoint(S.next, z[S._n], grad[S._n], "post")


def pre_legendre(S: QuadraticAction, x_prev, x_next, aux=None) -> PhasePoint:
    """Pre-momenta ``p = −∂S/∂x_prev``."""
    z = S.stack(x_prev, x_next, aux)
    grad = S.gradient(z)
    return PhasePoint(S.prev, z[S._p], -grad[S._p], "pre")


def post_constraints(S: QuadraticAction) -> ConstraintSet:
    """Constraints satisfied by every post-momentum of ``S``.

    One constraint per right-null vector ``R`` of ``B``:
    ``R·p − R·C x_next − R·c = 0``.  Actions with bulk variables are
    handled through their full relation; the result has the same normal
    form.
    """
    if S.has_aux:
        return MoveRelation.from_action(S).constraints("target", "post")
    _, right, _ = K.rank_nullspace(S.B)
    cons = tuple(
        AffineConstraint(S.next, -(R @ S.C), R, -(R @ S.c), "post", "primary", "right null vector")
        for R in right
    )
    return ConstraintSet(S.next, cons)


def pre_constraints(S: QuadraticAction) -> ConstraintSet:
    """Constraints satisfied by every pre-momentum: ``L·p + L·A x_prev + L·a = 0``."""
    if S.has_aux:
        return MoveRelation.from_action(S).constraints("source", "pre")
    _, _, left = K.rank_nullspace(S.B)
    cons = tuple(
        AffineConstraint(S.prev, L @ S.A, L, L @ S.a, "pre", "primary", "left null vector")
        for L in left
    )
    return ConstraintSet(S.prev, cons)


def bracket(f, g):
    """Poisson bracket of two affine functions on one slice (a constant)."""
    if f.slice.labels != g.slice.labels or f.slice.step != g.slice.step:
        raise ValueError(f"brackets need functions on the same slice, got {f.slice} and {g.slice}")
    if not f.slice.dim:
        return K.scalar(0)
    return f.gx @ g.gp - f.gp @ g.gx


def dirac_matrix(constraints: Sequence) -> np.ndarray:
    """Matrix of mutual brackets ``M_ij = {C_i, C_j}``."""
    cons = list(constraints)
    M = K.zeros((len(cons), len(cons)))
    for i, f in enumerate(cons):
        for j in range(i + 1, len(cons)):
            M[i, j] = bracket(f, cons[j])
            M[j, i] = -M[i, j]
    return M
