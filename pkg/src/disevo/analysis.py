"""Brackets, first/second-class splitting, gauge modes and counting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernel as K
from .action import QuadraticAction, Slice, hessian_at
from .evolution import Inconsistent, Schedule, combine_constraints
from .legendre import (
    AffineConstraint,
    ConstraintSet,
    bracket,
    dirac_matrix,
    lagrangian_two_form,
    post_constraints,
    pre_constraints,
)

__all__ = [
    "AffineObservable",
    "ClassificationReport",
    "VerificationFailed",
    "classify",
    "combined_at",
    "counting_formulas",
    "gauge_modes",
    "observable_basis",
    "poisson_bracket",
    "propagating_count",
    "reduced_dimension",
]


class VerificationFailed(AssertionError):
    """An identity that must hold by construction did not."""


@dataclass(frozen=True, eq=False)
class AffineObservable:
    slice: Slice
    gx: np.ndarray
    gp: np.ndarray
    c0: object = 0
    tag: str = "both"

    def __post_init__(self):
        n = self.slice.dim
        object.__setattr__(self, "gx", K.as_vector(self.gx, n))
        object.__setattr__(self, "gp", K.as_vector(self.gp, n))
        object.__setattr__(self, "c0", K.scalar(self.c0))
        if self.tag not in ("pre-observable", "post-observable", "both"):
            raise ValueError(f"unknown observable tag {self.tag!r}")

    def evaluate(self, x, p):
        if not self.slice.dim:
            return self.c0
        return self.gx @ K.as_vector(x) + self.gp @ K.as_vector(p) + self.c0


def poisson_bracket(f, g):
    """``{f, g}`` for affine functions on the same slice.

    >>> from disevo.action import Slice
    >>> s = Slice(0, ("a", "b"))
    >>> phi = AffineObservable(s, [1, 0], [0, 0]); pi = AffineObservable(s, [0, 0], [1, 0])
    >>> poisson_bracket(phi, pi)
    Fraction(1, 1)
    """
    return bracket(f, g)


@dataclass(frozen=True, eq=False)
class ClassificationReport:
    """First/second-class split of the constraints at one slice.

    ``first_class`` and each entry of ``second_class`` are coefficient
    vectors over the input constraints; the matching affine functions
    are in ``first_class_constraints`` and ``second_class_constraints``.
    """

    constraints: tuple[AffineConstraint, ...]
    dirac_matrix: np.ndarray
    first_class: tuple[np.ndarray, ...]
    second_class: tuple[tuple[np.ndarray, np.ndarray], ...]
    first_class_constraints: tuple[AffineConstraint, ...]
    second_class_constraints: tuple[tuple[AffineConstraint, AffineConstraint], ...]
    gauge_generators: tuple[AffineConstraint, ...]
    fixed_parameters: tuple[dict, ...] = ()
    lhr: np.ndarray | None = None

    @property
    def n_first(self) -> int:
        return len(self.first_class)

    @property
    def n_second(self) -> int:
        """Number of second-class constraints (twice the number of pairs)."""
        return 2 * len(self.second_class)


def _combo(cons: Sequence[AffineConstraint], alpha: np.ndarray, tag: str) -> AffineConstraint:
    slc = cons[0].slice
    gx = sum((a * c.gx for a, c in zip(alpha, cons)), K.zeros(slc.dim))
    gp = sum((a * c.gp for a, c in zip(alpha, cons)), K.zeros(slc.dim))
    c0 = sum((a * c.c0 for a, c in zip(alpha, cons)), K.scalar(0))
    provs = {c.provenance for a, c in zip(alpha, cons) if not K.is_zero(a)}
    prov = "extension" if provs == {"extension"} else ("secondary" if "secondary" in provs else "primary")
    return AffineConstraint(slc, gx, gp, c0, tag, prov, "combination")


def _row(c) -> np.ndarray:
    return np.concatenate([c.gradient(), np.array([c.c0], dtype=c.gx.dtype)])


def _span_tag(row: np.ndarray, pre_rows: np.ndarray, post_rows: np.ndarray) -> str:
    in_pre = pre_rows.shape[0] > 0 and K.row_space_contains(pre_rows, row)
    in_post = post_rows.shape[0] > 0 and K.row_space_contains(post_rows, row)
    if in_pre and not in_post:
        return "pre"
    if in_post and not in_pre:
        return "post"
    return "both"


def classify(C, H: np.ndarray | None = None) -> ClassificationReport:
    """Split a combined constraint set into first and second class.

    First-class combinations span the null space of the Dirac matrix.
    The complement is paired symplectically.  Gauge generators are the
    first-class functions lying in both the pre-span and the post-span.
    With a Hessian ``H`` the pre/post bracket block is also returned as
    ``Lᵀ H R`` over the momentum gradients.
    """
    cons = tuple(C)
    n = len(cons)
    if n == 0:
        empty = K.zeros((0, 0))
        return ClassificationReport((), empty, (), (), (), (), ())
    slc = cons[0].slice
    width = 2 * slc.dim + 1
    M = dirac_matrix(cons)
    _, null, _ = K.rank_nullspace(M)
    pre_rows = K.stack((_row(c) for c in cons if c.tag in ("pre", "both")), width)
    post_rows = K.stack((_row(c) for c in cons if c.tag in ("post", "both")), width)

    first = tuple(null)
    first_cons = tuple(_combo(cons, a, _span_tag(_row(_combo(cons, a, "both")), pre_rows, post_rows)) for a in first)

    # symplectic pairing of a complement of the null space
    basis = K.stack(null, n)
    rest = []
    for i in range(n):
        e = K.zeros(n)
        e[i] = K.scalar(1)
        if not K.row_space_contains(K.stack(list(basis) + rest, n), e):
            rest.append(e)
    pairs = []
    pool = list(rest)
    while pool:
        u = pool.pop(0)
        j = next((k for k, w in enumerate(pool) if not K.is_zero(u @ M @ w)), None)
        if j is None:
            raise VerificationFailed("Dirac matrix restricted to the complement is degenerate")
        v = pool.pop(j)
        v = v / (u @ M @ v)
        pool = [w - (w @ M @ v) * u + (w @ M @ u) * v for w in pool]
        pairs.append((u, v))
    second_cons = tuple(
        (_combo(cons, u, _span_tag(_row(_combo(cons, u, "both")), pre_rows, post_rows)),
         _combo(cons, v, _span_tag(_row(_combo(cons, v, "both")), pre_rows, post_rows)))
        for u, v in pairs
    )

    gauge = []
    if pre_rows.shape[0] and post_rows.shape[0]:
        common = K.row_space_intersection(pre_rows, post_rows)
        first_rows = K.stack((_row(c) for c in first_cons), width)
        if common.shape[0] and first_rows.shape[0]:
            both = K.row_space_intersection(common, first_rows)
            for r in both:
                if K.rank(r[:-1].reshape(1, -1)) == 0:
                    continue
                gauge.append(AffineConstraint(slc, r[: slc.dim], r[slc.dim : 2 * slc.dim], r[-1], "both", "primary", "gauge generator"))

    fixed = []
    for (a, b) in second_cons:
        entry = {}
        for c in (a, b):
            key = "lambda" if c.tag == "post" else "mu" if c.tag == "pre" else "both"
            entry[key] = c.gp
        if "lambda" in entry and "mu" in entry:
            lam, mu = entry["lambda"], entry["mu"]
            entry["coincide"] = K.rank(K.stack([lam, mu], slc.dim)) <= 1 and K.rank(lam.reshape(1, -1)) == 1
        fixed.append(entry)

    lhr = None
    if H is not None:
        L = [c.gp for c in cons if c.tag == "pre"]
        R = [c.gp for c in cons if c.tag == "post"]
        lhr = K.stack(L, slc.dim) @ np.asarray(H) @ K.stack(R, slc.dim).T if L and R else K.zeros((len(L), len(R)))

    return ClassificationReport(
        cons, M, first, tuple(pairs), first_cons, second_cons, tuple(gauge), tuple(fixed), lhr,
    )


def combined_at(S_in: QuadraticAction, S_out: QuadraticAction) -> ConstraintSet:
    """Post-constraints of ``S_in`` together with pre-constraints of ``S_out``."""
    if not S_in.next.same_variables(S_out.prev):
        raise ValueError(f"{S_in.next} and {S_out.prev} are not the same slice")
    post = post_constraints(S_in)
    pre = _align(pre_constraints(S_out), S_in.next)
    try:
        return combine_constraints(S_in.next, list(pre), list(post))
    except K.Infeasible:
        raise Inconsistent(S_in.next.step) from None


def _align(cset: ConstraintSet, slc: Slice) -> ConstraintSet:
    if cset.slice.labels == slc.labels:
        return ConstraintSet(slc, cset.constraints)
    idx = [cset.slice.index(lab) for lab in slc.labels]
    return ConstraintSet(slc, tuple(
        AffineConstraint(slc, c.gx[idx], c.gp[idx], c.c0, c.tag, c.provenance, c.origin) for c in cset
    ))


def gauge_modes(S_in: QuadraticAction, S_out: QuadraticAction, report: ClassificationReport) -> list[np.ndarray]:
    """Momentum gradients of the gauge generators, checked as null vectors.

    Each must annihilate the Hessian at the middle slice, be a right-null
    vector of the incoming two-form and a left-null vector of the
    outgoing one.
    """
    H = hessian_at(S_in, S_out)
    order = [S_out.prev.index(lab) for lab in S_in.next.labels]
    Om_in = lagrangian_two_form(S_in)
    Om_out = lagrangian_two_form(S_out)[order, :]
    modes = []
    for g in report.gauge_generators:
        v = g.gp
        checks = {
            "Hessian": H @ v if H.size else K.zeros(0),
            "incoming two-form": Om_in @ v if Om_in.size else K.zeros(0),
            "outgoing two-form": v @ Om_out if Om_out.size else K.zeros(0),
        }
        for name, w in checks.items():
            if not all(K.is_zero(x) for x in w):
                raise VerificationFailed(f"gauge direction is not a null vector of the {name}")
        modes.append(v)
    return modes


def counting_formulas(schedule: Schedule, i: int, f: int) -> tuple[int, int]:
    """Both expressions for the number of propagating phase-space directions."""
    E = schedule.effective(i, f)
    n_pre = len(pre_constraints(E))
    n_post = len(post_constraints(E))
    return 2 * E.prev.dim - 2 * n_pre, 2 * E.next.dim - 2 * n_post


def propagating_count(schedule: Schedule, i: int, f: int) -> int:
    """Dimension of the data propagating from slice ``i`` to slice ``f``."""
    a, b = counting_formulas(schedule, i, f)
    if a != b:
        raise VerificationFailed(f"counting formulas disagree: {a} from slice {i}, {b} from slice {f}")
    return a


def reduced_dimension(schedule: Schedule, i: int, n: int, f: int) -> int:
    """Reduced phase-space dimension at ``n`` between slices ``i`` and ``f``."""
    if not i < n < f:
        raise ValueError(f"need i < n < f, got {i}, {n}, {f}")
    C = combined_at(schedule.effective(i, n), schedule.effective(n, f))
    rep = classify(C)
    return 2 * C.slice.dim - 2 * rep.n_first - rep.n_second


def observable_basis(C: ConstraintSet, tag: str = "both") -> list[AffineObservable]:
    """Affine functions commuting with every constraint in ``C``.

    Constants are ignored and the result is reduced modulo the span of
    the constraint gradients, then put in reduced row echelon form.
    """
    slc = C.slice
    n = slc.dim
    if n == 0:
        return []
    if len(C):
        grads = C.gradients()
        # {f, c} = f_x·c_p − f_p·c_x, linear in (f_x, f_p)
        pairing = np.hstack([grads[:, n:], -grads[:, :n]])
        _, comm, _ = K.rank_nullspace(pairing)
    else:
        grads = K.zeros((0, 2 * n))
        comm = [K.eye(2 * n)[k] for k in range(2 * n)]
    if not comm:
        return []
    if grads.shape[0]:
        R, piv = K.rref(grads)
        R = R[: len(piv)]
        reduced = []
        for v in comm:
            w = v.copy()
            for r, pc in zip(R, piv):
                w = w - w[pc] * r
            reduced.append(w)
    else:
        reduced = comm
    basis = K.canonical_rows(K.stack(reduced, 2 * n))
    return [AffineObservable(slc, r[:n], r[n:], 0, tag) for r in basis]
