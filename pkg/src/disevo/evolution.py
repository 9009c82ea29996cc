"""Global evolution, bulk elimination and constraint propagation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernel as K
from .action import QuadraticAction, Slice, add_actions, permute_action
from .legendre import (
    AffineConstraint,
    ConstraintSet,
    MoveRelation,
    PhasePoint,
    dirac_matrix,
    post_constraints,
    pre_constraints,
)

__all__ = [
    "ConstraintReport",
    "EvolutionMap",
    "Inconsistent",
    "MissingParameter",
    "Schedule",
    "SliceReport",
    "backward_evolve",
    "combine_constraints",
    "effective_action",
    "eliminate_bulk",
    "forward_evolve",
    "match_and_propagate",
]


class MissingParameter(ValueError):
    """Wrong number of free-parameter values supplied."""

    def __init__(self, message: str, expected: int = 0):
        self.expected = expected
        super().__init__(message)


class Inconsistent(RuntimeError):
    """The combined constraints at ``slice`` cannot be satisfied together."""

    def __init__(self, slice_index: int, message: str = "", report=None):
        self.slice_index = slice_index
        self.report = report
        super().__init__(message or f"constraints at slice {slice_index} cannot be satisfied simultaneously")


# -- single moves ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvolutionMap:
    """Forward and backward evolution through one action contribution."""

    action: QuadraticAction
    relation: MoveRelation

    @classmethod
    def from_action(cls, S: QuadraticAction) -> "EvolutionMap":
        return cls(S, MoveRelation.from_action(S))

    @property
    def source(self) -> Slice:
        return self.action.prev

    @property
    def target(self) -> Slice:
        return self.action.next

    def _directions(self, side: str) -> list[np.ndarray]:
        rel = self.relation
        X, P = (rel.Xs, rel.Ps) if side == "source" else (rel.Xt, rel.Pt)
        M = np.vstack([X, P, rel.D])
        _, null, _ = K.rank_nullspace(M)
        other = "target" if side == "source" else "source"
        return rel.free_directions(other, null)

    @property
    def free_directions(self) -> list[tuple[str, np.ndarray]]:
        """``(λ-label, δx_next)`` pairs spanning the forward ambiguity."""
        return [
            (f"lambda{i + 1}", self.relation.Xt @ v)
            for i, v in enumerate(self._directions("source"))
        ]

    @property
    def backward_directions(self) -> list[tuple[str, np.ndarray]]:
        return [
            (f"mu{i + 1}", self.relation.Xs @ v)
            for i, v in enumerate(self._directions("target"))
        ]

    def forward(self, pt: PhasePoint, lam=None, strict: bool = False) -> PhasePoint:
        _check_slice(pt.slice, self.source)
        return self.relation.evolve(pt.x, pt.p, lam, strict)

    def backward(self, pt: PhasePoint, mu=None, strict: bool = False) -> PhasePoint:
        _check_slice(pt.slice, self.target)
        return self.relation.evolve(pt.x, pt.p, mu, strict, backward=True)


def _check_slice(given: Slice, expected: Slice) -> None:
    if given.labels != expected.labels:
        raise ValueError(f"point lives on {given} {given.labels}, move expects {expected.labels}")


def forward_evolve(S: QuadraticAction, pt: PhasePoint, lam=None, strict: bool = False) -> PhasePoint:
    """Evolve canonical data from ``S.prev`` to ``S.next``.

    ``lam`` gives one value per free direction (zero by default).  Raises
    :class:`OffConstraintSurface` when ``pt`` violates a pre-constraint and
    :class:`MissingParameter` on a wrong count, or on a missing count
    when ``strict``.
    """
    return EvolutionMap.from_action(S).forward(pt, lam, strict)


def backward_evolve(S: QuadraticAction, pt: PhasePoint, mu=None, strict: bool = False) -> PhasePoint:
    return EvolutionMap.from_action(S).backward(pt, mu, strict)


# -- bulk elimination ----------------------------------------------------------

def _substitute(S: QuadraticAction, E: np.ndarray, e: np.ndarray, aux: Slice, meta: dict) -> QuadraticAction:
    """Pull ``S`` back along ``z = E w + e``."""
    H, g = S.hess, S.grad
    He = H @ e
    hess = E.T @ H @ E
    grad = E.T @ (He + g)
    s0 = K.scalar("1/2") * (e @ He) + g @ e + S.s0 if e.size else S.s0
    return QuadraticAction(S.prev, S.next, hess, grad, s0, aux, meta)


def eliminate_bulk(S: QuadraticAction) -> QuadraticAction:
    """Integrate out the auxiliary variables of ``S``.

    Solves ∂S/∂u = 0 for the bulk ``u``.  Null directions of the bulk
    Hessian whose solvability conditions involve the boundary are kept
    as multipliers κ; the returned action then contains κ·H(x_prev,
    x_next), whose κ-equations re-impose those boundary-data
    constraints.  With an invertible bulk Hessian this is the Schur
    complement.
    """
    nb = S.prev.dim + S.next.dim
    nu = S.aux.dim
    if nu == 0:
        return S
    H, g = S.hess, S.grad
    Huu, Hub, gu = H[nb:, nb:], H[nb:, :nb], g[nb:]
    _, null, _ = K.rank_nullspace(Huu)
    R, piv = K.rref(Huu)

    # particular bulk solution, linear in the boundary data
    Ginv = K.zeros((nu, nu))
    if piv:
        sub = Huu[np.ix_(piv, piv)]
        Ginv[np.ix_(piv, piv)] = _inverse(sub)
    proj = K.eye(nu)
    if null:
        V = K.stack(null, nu)
        proj = proj - V.T @ _inverse(V @ V.T) @ V
    Y = -(proj @ Ginv @ Hub) if nb else K.zeros((nu, 0))
    yc = -(proj @ Ginv @ gu)

    # boundary-data constraints from the bulk null directions
    rows = K.stack((np.concatenate([v @ Hub if nb else K.zeros(0), np.array([v @ gu], dtype=Huu.dtype)]) for v in null), nb + 1)
    chosen = [i for i in K.independent_rows(rows)]
    kappa = [null[i] for i in chosen]
    label_step = S.next.step
    aux = Slice("bulk", [f"kappa{i + 1}@{label_step}" for i in range(len(kappa))])

    E = K.zeros((nb + nu, nb + len(kappa)))
    E[:nb, :nb] = K.eye(nb)
    E[nb:, :nb] = Y
    for j, v in enumerate(kappa):
        E[nb:, nb + j] = v
    e = np.concatenate([K.zeros(nb), yc])
    meta = {
        "bulk_labels": S.aux.labels,
        "bulk_rank": len(piv),
        "bulk_null_dim": len(null),
        "kappa_count": len(kappa),
        "boundary_rows": rows[chosen] if chosen else K.zeros((0, nb + 1)),
        "bulk_map": (E[nb:], e[nb:]),
    }
    return _substitute(S, E, e, aux, meta)


def _inverse(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    R, piv = K.rref(np.hstack([M, K.eye(n)]))
    if piv[:n] != list(range(n)):
        raise ValueError("matrix is singular")
    return R[:, n:].copy()


def effective_action(S_in: QuadraticAction, S_out: QuadraticAction) -> QuadraticAction:
    """Effective action across the middle slice shared by two moves.

    Multiplier variables, if any, sit on an auxiliary slice whose labels
    carry the later boundary's step.
    """
    if not S_in.next.same_variables(S_out.prev):
        raise ValueError(f"{S_in.next} and {S_out.prev} are not the same slice")
    return eliminate_bulk(add_actions(S_in, S_out))


# -- schedules -----------------------------------------------------------------

class Schedule:
    """Consecutive moves ``S_1 .. S_K`` over slices ``0 .. K``."""

    def __init__(self, moves: Sequence[QuadraticAction]):
        moves = list(moves)
        if not moves:
            raise ValueError("schedule must contain at least one move")
        aligned = [moves[0]]
        for i, S in enumerate(moves[1:], start=1):
            prev = aligned[-1].next
            if not prev.same_variables(S.prev):
                raise ValueError(
                    f"move {i} ends on {prev} with {prev.dim} variables but move {i + 1} "
                    f"starts on {S.prev} with {S.prev.dim}"
                )
            if prev.labels != S.prev.labels:
                order = [S.prev.index(lab) for lab in prev.labels]
                S = permute_action(S, order, range(S.next.dim))
            aligned.append(S)
        self.moves = tuple(aligned)

    def __len__(self) -> int:
        return len(self.moves)

    @property
    def slices(self) -> list[Slice]:
        return [self.moves[0].prev] + [S.next for S in self.moves]

    def effective(self, i: int, f: int) -> QuadraticAction:
        """Effective action from slice ``i`` to slice ``f``, folding left."""
        if not 0 <= i < f <= len(self.moves):
            raise ValueError(f"need 0 <= i < f <= {len(self.moves)}, got i={i}, f={f}")
        S = self.moves[i]
        for T in self.moves[i + 1 : f]:
            S = effective_action(S, T)
        return S

    def prefix(self, k: int) -> "Schedule":
        return Schedule(self.moves[:k])


@dataclass(frozen=True, eq=False)
class SliceReport:
    index: int
    slice: Slice
    pre: ConstraintSet
    post: ConstraintSet
    combined: ConstraintSet
    status: str
    cases: tuple[str, ...]
    dirac_rank: int = 0


@dataclass(frozen=True, eq=False)
class ConstraintReport:
    slices: tuple[SliceReport, ...]
    sweeps: int = 0

    def __getitem__(self, n: int) -> SliceReport:
        return self.slices[n]

    def __len__(self) -> int:
        return len(self.slices)

    @property
    def consistent(self) -> bool:
        return all(s.status != "inconsistent" for s in self.slices)


def combine_constraints(slc: Slice, pre: Sequence[AffineConstraint], post: Sequence[AffineConstraint]) -> ConstraintSet:
    """Irreducible union of pre and post constraints at one slice.

    Directions shared by both spans come first and are tagged ``both``;
    then pre constraints, then post constraints, each only if new.
    """
    n = slc.dim
    pre_set = ConstraintSet(slc, tuple(pre)).augmented()
    post_set = ConstraintSet(slc, tuple(post)).augmented()
    common = K.row_space_intersection(pre_set, post_set) if len(pre) and len(post) else K.zeros((0, 2 * n + 1))
    out: list[AffineConstraint] = []
    for r in common:
        if K.rank(r[: 2 * n].reshape(1, -1)) == 0:
            continue
        out.append(AffineConstraint(slc, r[:n], r[n : 2 * n], r[2 * n], "both", _prov(pre, post, r), "pre and post"))
    basis = K.stack((np.concatenate([c.gradient(), np.array([c.c0], dtype=pre_set.dtype)]) for c in out), 2 * n + 1)
    for c in list(pre) + list(post):
        row = np.concatenate([c.gradient(), np.array([c.c0], dtype=pre_set.dtype)]).reshape(1, -1)
        if K.row_space_contains(basis, row[0]):
            continue
        if K.rank(np.vstack([basis[:, : 2 * n], row[:, : 2 * n]])) == basis.shape[0]:
            # gradient dependent but offset not: incompatible equations
            raise K.Infeasible(row[0], residual=c.c0)
        basis = np.vstack([basis, row])
        out.append(c)
    return ConstraintSet(slc, tuple(out))


def _prov(pre, post, row) -> str:
    provs = {c.provenance for c in list(pre) + list(post)}
    return "extension" if provs == {"extension"} else ("primary" if "primary" in provs else "secondary")


def _feasible(cset: ConstraintSet) -> bool:
    if not len(cset):
        return True
    try:
        K.affine_solve(cset.gradients(), -cset.offsets())
    except K.Infeasible:
        return False
    return True


def _slice_status(combined: ConstraintSet, pre, post) -> tuple[str, tuple[str, ...], int]:
    M = dirac_matrix(combined.constraints)
    r = K.rank(M) if len(combined) else 0
    cases = []
    if any(c.tag == "both" for c in combined):
        cases.append("a")
    if len(combined) - r > 0:
        cases.append("b")
    if r:
        cases.append("c")
    return ("fixes-parameters" if r else "consistent"), tuple(cases), r


def _append_new(target: list, candidates: ConstraintSet, existing: list, tag: str, origin: str) -> int:
    added = 0
    slc = candidates.slice
    n = slc.dim
    dtype = object if K.get_mode() == "exact" else float
    rows = K.stack((np.concatenate([c.gradient(), np.array([c.c0], dtype=dtype)]) for c in existing), 2 * n + 1)
    for c in candidates:
        row = np.concatenate([c.gradient(), np.array([c.c0], dtype=dtype)])
        if K.row_space_contains(rows, row):
            continue
        rows = np.vstack([rows, row.reshape(1, -1)])
        new = c.retag(tag=tag, provenance="secondary", origin=origin)
        target.append(new)
        existing.append(new)
        added += 1
    return added


def match_and_propagate(schedule: Schedule, max_sweeps: int | None = None) -> ConstraintReport:
    """Primary constraints per move, then secondary ones to a fixed point.

    Backward sweeps pull every constraint at slice n+1 back through move
    n+1 (existentially over its free parameters) and record what is new
    at slice n as secondary pre-constraints.  Forward sweeps push every
    constraint at slice n−1 through move n and record what is new as
    secondary post-constraints.  Raises :class:`Inconsistent` when some
    slice ends up with contradictory equations.
    """
    moves = schedule.moves
    Kn = len(moves)
    slices = schedule.slices
    rels = [MoveRelation.from_action(S) for S in moves]
    pre: list[list[AffineConstraint]] = [[] for _ in range(Kn + 1)]
    post: list[list[AffineConstraint]] = [[] for _ in range(Kn + 1)]
    for n in range(Kn):
        pre[n] = [c.retag(origin=f"move {n + 1}") for c in pre_constraints(moves[n])]
    for n in range(1, Kn + 1):
        post[n] = [c.retag(origin=f"move {n}") for c in post_constraints(moves[n - 1])]

    cache: dict[tuple[int, int, int], ConstraintSet] = {}

    def combined(n: int) -> ConstraintSet:
        key = (n, len(pre[n]), len(post[n]))
        if key not in cache:
            cache[key] = _combined(n)
        return cache[key]

    def _combined(n: int) -> ConstraintSet:
        try:
            cs = combine_constraints(slices[n], pre[n], post[n])
        except K.Infeasible:
            raise Inconsistent(n, report=_partial(slices, pre, post)) from None
        if not _feasible(cs):
            raise Inconsistent(n, report=_partial(slices, pre, post))
        return cs

    for n in range(Kn + 1):
        combined(n)

    cap = max_sweeps if max_sweeps is not None else max(4 * Kn, 1)
    sweeps = 0
    while True:
        changed = 0
        for n in range(Kn - 1, -1, -1):
            down = combined(n + 1)
            if not len(down):
                continue
            try:
                pulled = rels[n].constraints("source", "pre", given=down, given_side="target")
            except K.Infeasible:
                raise Inconsistent(n + 1, report=_partial(slices, pre, post)) from None
            existing = pre[n] + post[n]
            changed += _append_new(pre[n], pulled, existing, "pre", f"pre-image through move {n + 1}")
            combined(n)
        for n in range(1, Kn + 1):
            up = combined(n - 1)
            if not len(up):
                continue
            try:
                pushed = rels[n - 1].constraints("target", "post", given=up, given_side="source")
            except K.Infeasible:
                raise Inconsistent(n - 1, report=_partial(slices, pre, post)) from None
            existing = pre[n] + post[n]
            changed += _append_new(post[n], pushed, existing, "post", f"image through move {n}")
            combined(n)
        sweeps += 1
        if not changed:
            break
        if sweeps >= cap:
            raise RuntimeError(f"constraint propagation did not settle within {cap} sweeps")

    reports = []
    for n in range(Kn + 1):
        cs = combined(n)
        status, cases, r = _slice_status(cs, pre[n], post[n])
        reports.append(SliceReport(
            n, slices[n], ConstraintSet(slices[n], tuple(pre[n])),
            ConstraintSet(slices[n], tuple(post[n])), cs, status, cases, r,
        ))
    return ConstraintReport(tuple(reports), sweeps)


def _partial(slices, pre, post) -> ConstraintReport:
    out = []
    for n, slc in enumerate(slices):
        try:
            cs = combine_constraints(slc, pre[n], post[n])
            status = "consistent" if _feasible(cs) else "inconsistent"
        except K.Infeasible:
            cs, status = ConstraintSet(slc), "inconsistent"
        out.append(SliceReport(
            n, slc, ConstraintSet(slc, tuple(pre[n])), ConstraintSet(slc, tuple(post[n])),
            cs, status, ("d",) if status == "inconsistent" else (),
        ))
    return ConstraintReport(tuple(out))
