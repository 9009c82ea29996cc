"""Local evolution moves on extended phase spaces.

Variables that a move creates or removes are given formal canonical
partners on the side where they are missing, with vanishing momentum.
Source and target then share one label set, and each move becomes an
affine relation between two phase spaces of equal dimension.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernel as K
from .action import QuadraticAction, RoleMap, Slice
from .legendre import (
    AffineConstraint,
    ConstraintSet,
    MoveRelation,
    OffConstraintSurface,
    PhasePoint,
    constraints_from_rows,
)

__all__ = [
    "ExtendedState",
    "MoveSpec",
    "extend_phase_space",
    "extended_canonical_update",
    "initial_state",
    "momentum_update",
    "move_post_constraints",
    "move_pre_constraints",
    "move_relation",
    "reduce_phase_space",
    "transport_constraints",
]

KINDS = ("I", "II", "III", "IV")


@dataclass(frozen=True, eq=False)
class MoveSpec:
    """A local move: its type, the role of each touched variable, its action.

    Variables of ``action.prev`` are read at step k and those of
    ``action.next`` at step k+1.  An e-variable sits on exactly one of
    the two sides; its value is the same at both steps.
    """

    kind: str
    roles: RoleMap
    action: QuadraticAction
    surface_after: tuple[str, ...] | None = None
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.roles, RoleMap):
            object.__setattr__(self, "roles", RoleMap(self.roles))
        if self.kind not in KINDS:
            raise ValueError(f"unknown move kind {self.kind!r}")
        if self.action.has_aux:
            raise ValueError("local moves take actions without bulk variables")
        n, o = self.new, self.old
        expect = {
            "I": (bool(n), not o),
            "II": (not n, bool(o)),
            "III": (bool(n) and bool(o), len(n) == len(o)),
            "IV": (not n, not o),
        }[self.kind]
        if not all(expect):
            raise ValueError(f"type {self.kind} move cannot have {len(n)} new and {len(o)} old variables")
        prev, nxt = self.action.prev.labels, self.action.next.labels
        for lab in prev + nxt:
            if self.roles.role(lab) == "b":
                raise ValueError(f"action variable {lab!r} needs role e, n or o")
        for lab in n:
            if lab not in nxt:
                raise ValueError(f"new variable {lab!r} must be on the k+1 side of the action")
        for lab in o:
            if lab not in prev:
                raise ValueError(f"old variable {lab!r} must be on the k side of the action")
        for lab in self.updated:
            if (lab in prev) == (lab in nxt):
                raise ValueError(f"variable {lab!r} must appear on exactly one side of the action")

    @property
    def new(self) -> tuple[str, ...]:
        return self.roles.labels("n")

    @property
    def old(self) -> tuple[str, ...]:
        return self.roles.labels("o")

    @property
    def updated(self) -> tuple[str, ...]:
        return self.roles.labels("e")


@dataclass(frozen=True, eq=False)
class ExtendedState:
    """Canonical data on an (extended) evolving slice."""

    point: PhasePoint
    constraints: ConstraintSet
    extension: frozenset = frozenset()

    def __post_init__(self):
        if self.constraints.slice.labels != self.point.slice.labels:
            raise ValueError("constraints and data live on different slices")
        object.__setattr__(self, "extension", frozenset(self.extension))
        unknown = self.extension - set(self.labels)
        if unknown:
            raise ValueError(f"extension labels not on the slice: {sorted(unknown)}")

    @property
    def slice(self) -> Slice:
        return self.point.slice

    @property
    def labels(self) -> tuple[str, ...]:
        return self.point.slice.labels

    @property
    def step(self):
        return self.point.slice.step

    @property
    def live(self) -> tuple[str, ...]:
        return tuple(lab for lab in self.labels if lab not in self.extension)

    def x(self, label: str):
        return self.point.x[self.slice.index(label)]

    def p(self, label: str):
        return self.point.p[self.slice.index(label)]


def initial_state(labels: Sequence[str], x=None, p=None, step=0, constraints: Sequence[AffineConstraint] = ()) -> ExtendedState:
    slc = Slice(step, labels)
    pt = PhasePoint(slc, x if x is not None else [0] * slc.dim, p if p is not None else [0] * slc.dim)
    return ExtendedState(pt, ConstraintSet(slc, tuple(constraints)))


def _momentum_zero(slc: Slice, label: str) -> AffineConstraint:
    gp = K.zeros(slc.dim)
    gp[slc.index(label)] = K.scalar(1)
    return AffineConstraint(slc, K.zeros(slc.dim), gp, 0, "both", "extension", f"formal partner of {label}")


def _move_constraints(cset: ConstraintSet, slc: Slice) -> list[AffineConstraint]:
    """Re-express constraints on a slice with (a superset of) the same labels."""
    out = []
    idx = [slc.index(lab) for lab in cset.slice.labels]
    for c in cset:
        gx, gp = K.zeros(slc.dim), K.zeros(slc.dim)
        gx[idx] = c.gx
        gp[idx] = c.gp
        out.append(AffineConstraint(slc, gx, gp, c.c0, c.tag, c.provenance, c.origin))
    return out


def extend_phase_space(
    state: ExtendedState,
    new_labels: Sequence[str] = (),
    old_labels: Sequence[str] = (),
    gauge: Mapping[str, object] | None = None,
) -> ExtendedState:
    """Add formal canonical pairs with vanishing momenta.

    ``new_labels`` are partners for variables a move is about to create,
    ``old_labels`` for variables that left earlier; both get p = 0 as a
    constraint that is simultaneously pre and post.  Configuration
    values come from ``gauge`` and default to zero.
    """
    added = list(new_labels) + list(old_labels)
    if not added:
        return state
    clash = set(added) & set(state.labels)
    if clash or len(set(added)) != len(added):
        raise ValueError(f"labels already present: {sorted(clash) or added}")
    gauge = dict(gauge or {})
    slc = Slice(state.step, state.labels + tuple(added))
    x = np.concatenate([state.point.x, K.as_vector([gauge.get(lab, 0) for lab in added])])
    p = np.concatenate([state.point.p, K.zeros(len(added))])
    cons = _move_constraints(state.constraints, slc) + [_momentum_zero(slc, lab) for lab in added]
    return ExtendedState(PhasePoint(slc, x, p, state.point.tag), ConstraintSet(slc, tuple(cons)), state.extension | set(added))


def reduce_phase_space(state: ExtendedState, labels: Sequence[str]) -> ExtendedState:
    """Drop canonical pairs; constraints are projected onto what remains."""
    drop = set(labels)
    missing = drop - set(state.labels)
    if missing:
        raise ValueError(f"cannot drop unknown labels {sorted(missing)}")
    keep = [lab for lab in state.labels if lab not in drop]
    slc = Slice(state.step, keep)
    idx = [state.slice.index(lab) for lab in keep]
    n_old = state.slice.dim
    pt = PhasePoint(slc, state.point.x[idx], state.point.p[idx], state.point.tag)
    cons = state.constraints
    if len(cons):
        sel = K.zeros((2 * len(keep), 2 * n_old))
        for i, j in enumerate(idx):
            sel[i, j] = K.scalar(1)
            sel[len(keep) + i, n_old + j] = K.scalar(1)
        G, c = K.affine_image_equations(sel, K.zeros(2 * len(keep)), cons.gradients(), -cons.offsets())
        new = constraints_from_rows(slc, G, c, "post")
        new = ConstraintSet(slc, tuple(_label_provenance(new, state.extension - drop)))
    else:
        new = ConstraintSet(slc)
    return ExtendedState(pt, new, state.extension - drop)


def _label_provenance(cset: ConstraintSet, extension) -> list[AffineConstraint]:
    out = []
    for c in cset:
        nz_p = [i for i, v in enumerate(c.gp) if not K.is_zero(v)]
        pure = (
            len(nz_p) == 1
            and all(K.is_zero(v) for v in c.gx)
            and K.is_zero(c.c0)
            and cset.slice.labels[nz_p[0]] in extension
        )
        out.append(c.retag(tag="both" if pure else c.tag, provenance="extension" if pure else c.provenance))
    return out


# -- the move as an affine relation ------------------------------------------

def move_relation(move: MoveSpec, labels: Sequence[str], step_k=0, step_k1=1) -> MoveRelation:
    """Relation between extended phase spaces over ``labels`` at k and k+1.

    ``z = (x_k, p_k, x_new at k+1, x_old at k+1)``.  The domain fixes
    p_k = 0 on new variables and p_k = −∂S/∂x on old ones; the target
    momenta are shifted by the action gradient.  Gauge rows carry old
    configuration values across unchanged.
    """
    labels = tuple(labels)
    N = len(labels)
    pos = {lab: i for i, lab in enumerate(labels)}
    for lab in move.updated + move.old + move.new:
        if lab not in pos:
            raise ValueError(f"move variable {lab!r} is not on the slice")
    new, old = move.new, move.old
    m = 2 * N + len(new) + len(old)
    xn_at = {lab: 2 * N + i for i, lab in enumerate(new)}
    xo_at = {lab: 2 * N + len(new) + i for i, lab in enumerate(old)}

    S = move.action
    avars = S.prev.labels + S.next.labels
    W = K.zeros((len(avars), m))
    for r, lab in enumerate(avars):
        W[r, xn_at[lab] if lab in xn_at else pos[lab]] = K.scalar(1)
    gradS = S.hess @ W  # ∂S/∂w as a linear function of z (plus S.grad)
    arow = {lab: r for r, lab in enumerate(avars)}

    I = K.eye(m)
    Xs, Ps = I[:N].copy(), I[N : 2 * N].copy()
    D_rows, d_vals = [], []
    for lab in new:
        D_rows.append(I[N + pos[lab]])
        d_vals.append(K.scalar(0))
    for lab in old:
        r = arow[lab]
        D_rows.append(I[N + pos[lab]] + gradS[r])
        d_vals.append(-S.grad[r])

    Xt, Pt = K.zeros((N, m)), K.zeros((N, m))
    pt0 = K.zeros(N)
    for lab in labels:
        i = pos[lab]
        role = move.roles.role(lab)
        if role == "n":
            Xt[i] = I[xn_at[lab]]
            Pt[i] = gradS[arow[lab]]
            pt0[i] = S.grad[arow[lab]]
        elif role == "o":
            Xt[i] = I[xo_at[lab]]
        else:
            Xt[i] = I[i]
            Pt[i] = I[N + i]
            if role == "e":
                Pt[i] = Pt[i] + gradS[arow[lab]]
                pt0[i] = S.grad[arow[lab]]
    gauge = ()
    if old:
        G = K.stack((I[xo_at[lab]] - I[pos[lab]] for lab in old), m)
        gauge = ((G, K.zeros(len(old))),)
    return MoveRelation(
        source=Slice(step_k, labels), target=Slice(step_k1, labels),
        Xs=Xs, xs=K.zeros(N), Ps=Ps, ps=K.zeros(N),
        Xt=Xt, xt=K.zeros(N), Pt=Pt, pt=pt0,
        D=K.stack(D_rows, m), d=K.as_vector(d_vals),
        gauge=gauge, labels=labels,
    )


def _prepare(move: MoveSpec, state: ExtendedState) -> ExtendedState:
    for lab in move.updated + move.old:
        if lab not in state.labels:
            raise ValueError(f"move touches {lab!r}, which is not on the slice")
        if lab in state.extension:
            raise ValueError(f"move touches {lab!r}, which is only a formal partner")
    fresh = [lab for lab in move.new if lab not in state.labels]
    for lab in move.new:
        if lab in state.labels and lab not in state.extension:
            raise ValueError(f"new variable {lab!r} is already live on the slice")
    return extend_phase_space(state, fresh)


def _next_step(step):
    return step + 1 if isinstance(step, int) else f"{step}+1"


def _transport(move: MoveSpec, rel: MoveRelation, cons: ConstraintSet, extension) -> ConstraintSet:
    out = rel.constraints("target", "post", given=cons, given_side="source")
    return ConstraintSet(out.slice, tuple(_label_provenance(out, extension)))


def momentum_update(move: MoveSpec, state: ExtendedState, lam=None, strict: bool = False) -> ExtendedState:
    """Apply a local move to canonical data.

    New variables get their configuration from ``lam`` where the move
    leaves it free (zero by default, required when ``strict``).  Raises
    :class:`OffConstraintSurface` when the data violate the move's
    pre-constraints.
    """
    ext = _prepare(move, state)
    step1 = _next_step(ext.step)
    rel = move_relation(move, ext.labels, ext.step, step1)
    z, _ = rel.solve("source", ext.point.x, ext.point.p, lam, strict)
    pt = rel.point("target", z)
    extension = (ext.extension - set(move.new)) | set(move.old)
    cons = _transport(move, rel, ext.constraints, extension)
    return ExtendedState(pt, cons, extension)


def transport_constraints(move: MoveSpec, post_set: ConstraintSet) -> ConstraintSet:
    """Image at k+1 of a post-constraint set at k under the move.

    The image is taken over all values of the move's free parameters
    and includes the post-constraints the move itself creates.
    """
    slc = post_set.slice
    fresh = [lab for lab in move.new if lab not in slc.labels]
    ext_slc = Slice(slc.step, slc.labels + tuple(fresh))
    cons = _move_constraints(post_set, ext_slc) + [_momentum_zero(ext_slc, lab) for lab in fresh]
    rel = move_relation(move, ext_slc.labels, slc.step, _next_step(slc.step))
    extension = set(move.old) | {c_lab for c_lab in _pure_momentum_labels(post_set)} - set(move.new)
    return _transport(move, rel, ConstraintSet(ext_slc, tuple(cons)), extension)


def _pure_momentum_labels(cset: ConstraintSet) -> list[str]:
    out = []
    for c in cset:
        if c.provenance == "extension":
            nz = [i for i, v in enumerate(c.gp) if not K.is_zero(v)]
            if len(nz) == 1:
                out.append(cset.slice.labels[nz[0]])
    return out


def move_pre_constraints(move: MoveSpec, labels: Sequence[str]) -> ConstraintSet:
    return move_relation(move, labels).constraints("source", "pre")


def move_post_constraints(move: MoveSpec, labels: Sequence[str]) -> ConstraintSet:
    return move_relation(move, labels).constraints("target", "post")


def extended_canonical_update(move: MoveSpec, state: ExtendedState) -> ExtendedState:
    """Canonical transformation x' = x, p' = p + ∂S/∂x on all variables.

    Defined on the full extended phase space with no constraint imposed;
    the action is read with every variable at its current value.
    """
    ext = _prepare(move, state)
    slc = ext.slice
    S = move.action
    avars = S.prev.labels + S.next.labels
    idx = [slc.index(lab) for lab in avars]
    x = ext.point.x
    grad = S.hess @ x[idx] + S.grad if idx else K.zeros(0)
    p = ext.point.p.copy()
    for i, gval in zip(idx, grad):
        p[i] = p[i] + gval
    new_slc = Slice(_next_step(ext.step), slc.labels)
    # constraints move along the inverse map p = p' − ∂S/∂x'
    shift = K.zeros((slc.dim, slc.dim))
    if idx:
        shift[np.ix_(idx, idx)] = S.hess
    gshift = K.zeros(slc.dim)
    if idx:
        gshift[idx] = S.grad
    cons = []
    for c in ext.constraints:
        gx = c.gx - c.gp @ shift
        cons.append(AffineConstraint(new_slc, gx, c.gp, c.c0 - c.gp @ gshift, c.tag, c.provenance, c.origin))
    extension = (ext.extension - set(move.new)) | set(move.old)
    return ExtendedState(PhasePoint(new_slc, x, p), ConstraintSet(new_slc, tuple(cons)), extension)
