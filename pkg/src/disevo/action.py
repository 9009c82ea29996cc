"""Labelled slices and quadratic action contributions.

An action is stored as one symmetric Hessian ``H`` and gradient ``g``
over the stacked variables ``z = (x_prev, x_next, aux)`` so that

    S(z) = ½ zᵀ H z + gᵀ z + s0.

The conventional blocks ``A, B, C, a, c`` are views into that form.
``aux`` holds bulk variables (a middle slice after ``add_actions``, or
multipliers after bulk elimination); they obey ∂S/∂aux = 0 on shell.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernel as K

__all__ = [
    "QuadraticAction",
    "RoleMap",
    "Slice",
    "add_actions",
    "build_action",
    "evaluate",
    "hessian_at",
    "permute_action",
    "zero_action",
]


@dataclass(frozen=True)
class Slice:
    """Ordered configuration variables at one time step."""

    step: int | str
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        labels = tuple(str(lab) for lab in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            dup = sorted({lab for lab in labels if labels.count(lab) > 1})
            raise ValueError(f"duplicate labels in slice {self.step}: {dup}")

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(str(label))

    def same_variables(self, other: "Slice") -> bool:
        return self.step == other.step and set(self.labels) == set(other.labels)

    def __str__(self) -> str:
        return f"slice {self.step}"


ROLES = ("b", "e", "n", "o")


@dataclass(frozen=True)
class RoleMap:
    """Assignment of variable labels to b/e/n/o roles of a local move."""

    roles: Mapping[str, str]

    def __post_init__(self):
        clean = {str(k): v for k, v in dict(self.roles).items()}
        bad = {k: v for k, v in clean.items() if v not in ROLES}
        if bad:
            raise ValueError(f"unknown roles {bad}; expected one of {ROLES}")
        object.__setattr__(self, "roles", clean)

    def labels(self, role: str) -> tuple[str, ...]:
        return tuple(k for k, v in self.roles.items() if v == role)

    def role(self, label: str) -> str:
        return self.roles.get(str(label), "b")

    def check(self, prev: Slice, next_: Slice) -> None:
        """Raise unless the roles partition the union of both slices properly."""
        union = set(prev.labels) | set(next_.labels)
        for lab in union:
            role = self.role(lab)
            in_prev, in_next = lab in prev.labels, lab in next_.labels
            if role == "n" and in_prev:
                raise ValueError(f"new variable {lab!r} already present before the move")
            if role == "o" and in_next:
                raise ValueError(f"old variable {lab!r} still present after the move")
            if role in ("b", "e") and not (in_prev and in_next):
                raise ValueError(f"variable {lab!r} with role {role} must persist")
        missing = set(self.roles) - union
        if missing:
            raise ValueError(f"roles given for unknown labels {sorted(missing)}")


@dataclass(frozen=True, eq=False)
class QuadraticAction:
    """One evolution-move contribution in full quadratic form."""

    prev: Slice
    next: Slice
    hess: np.ndarray
    grad: np.ndarray
    s0: object = 0
    aux: Slice = field(default_factory=lambda: Slice("bulk"))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.prev.dim + self.next.dim + self.aux.dim
        hess, grad = np.asarray(self.hess), np.asarray(self.grad)
        if hess.shape != (m, m) or grad.shape != (m,):
            raise ValueError(
                f"action over {m} variables got Hessian {hess.shape} and gradient {grad.shape}"
            )
        if not K.matrices_equal(hess, hess.T):
            raise ValueError("action Hessian must be symmetric")
        shared = set(self.aux.labels) & (set(self.prev.labels) | set(self.next.labels))
        if shared and self.aux.step in (self.prev.step, self.next.step):
            raise ValueError(f"auxiliary labels collide with boundary labels: {sorted(shared)}")
        object.__setattr__(self, "s0", K.scalar(self.s0))

    # block views
    @property
    def _p(self) -> slice:
        return slice(0, self.prev.dim)

    @property
    def _n(self) -> slice:
        return slice(self.prev.dim, self.prev.dim + self.next.dim)

    @property
    def _x(self) -> slice:
        return slice(self.prev.dim + self.next.dim, self.hess.shape[0])

    @property
    def A(self) -> np.ndarray:
        return self.hess[self._p, self._p]

    @property
    def B(self) -> np.ndarray:
        return self.hess[self._p, self._n]

    @property
    def C(self) -> np.ndarray:
        return self.hess[self._n, self._n]

    @property
    def a(self) -> np.ndarray:
        return self.grad[self._p]

    @property
    def c(self) -> np.ndarray:
        return self.grad[self._n]

    @property
    def size(self) -> int:
        return self.hess.shape[0]

    @property
    def has_aux(self) -> bool:
        return self.aux.dim > 0

    def stack(self, x_prev, x_next, aux=None) -> np.ndarray:
        x_prev = K.as_vector(x_prev, self.prev.dim)
        x_next = K.as_vector(x_next, self.next.dim)
        if aux is None:
            if self.aux.dim:
                raise ValueError(f"action carries {self.aux.dim} bulk variables; pass aux values")
            aux = []
        aux = K.as_vector(aux, self.aux.dim)
        return np.concatenate([x_prev, x_next, aux])

    def gradient(self, z) -> np.ndarray:
        return self.hess @ z + self.grad if self.size else K.zeros(0)

    def __repr__(self) -> str:
        return (
            f"QuadraticAction({self.prev.step}:{self.prev.dim} -> "
            f"{self.next.step}:{self.next.dim}, aux={self.aux.dim})"
        )


def _square(M, n: int, name: str) -> np.ndarray:
    if M is None:
        return K.zeros((n, n))
    M = K.as_matrix(M, shape=(n, n) if not len(M) else None)
    if M.shape != (n, n):
        raise ValueError(f"block {name} must be {n}x{n}, got {M.shape[0]}x{M.shape[1]}")
    if not K.matrices_equal(M, M.T):
        warnings.warn(f"block {name} is not symmetric; using its symmetric part", stacklevel=3)
        M = (M + M.T) * K.scalar("1/2")
    return M


def build_action(
    prev: Slice,
    next: Slice,
    A=None,
    B=None,
    C=None,
    a=None,
    c=None,
    s0=0,
) -> QuadraticAction:
    """Assemble an action from its conventional blocks.

    Missing blocks default to zero.  Non-symmetric ``A`` or ``C`` are
    replaced by their symmetric part, with a warning.
    """
    p, n = prev.dim, next.dim
    A = _square(A, p, "A")
    C = _square(C, n, "C")
    if B is None:
        B = K.zeros((p, n))
    else:
        B = K.as_matrix(B, shape=(p, n) if not len(B) else None)
        if B.shape != (p, n):
            raise ValueError(f"block B must be {p}x{n}, got {B.shape[0]}x{B.shape[1]}")
    H = K.zeros((p + n, p + n))
    H[:p, :p] = A
    H[:p, p:] = B
    H[p:, :p] = B.T
    H[p:, p:] = C
    g = np.concatenate([K.as_vector(a, p), K.as_vector(c, n)]) if p + n else K.zeros(0)
    return QuadraticAction(prev, next, H, g, s0)


def zero_action(prev: Slice, next: Slice) -> QuadraticAction:
    return build_action(prev, next)


def evaluate(S: QuadraticAction, x_prev, x_next, aux=None):
    """Value of the quadratic form.

    >>> S = zero_action(Slice(0, ("a",)), Slice(1, ("b",)))
    >>> evaluate(S, [1], [2])
    Fraction(0, 1)
    """
    z = S.stack(x_prev, x_next, aux)
    if S.size == 0:
        return S.s0
    return K.scalar("1/2") * (z @ S.hess @ z) + S.grad @ z + S.s0


def _keys(S: QuadraticAction) -> list[tuple]:
    return (
        [(S.prev.step, lab) for lab in S.prev.labels]
        + [(S.next.step, lab) for lab in S.next.labels]
        + [(S.aux.step, lab) for lab in S.aux.labels]
    )


def _embed(S: QuadraticAction, keys: list[tuple]) -> tuple[np.ndarray, np.ndarray]:
    pos = {k: i for i, k in enumerate(keys)}
    idx = [pos[k] for k in _keys(S)]
    m = len(keys)
    H, g = K.zeros((m, m)), K.zeros(m)
    if idx:
        H[np.ix_(idx, idx)] = S.hess
        g[idx] = S.grad
    return H, g


def _qualified(step, label: str) -> str:
    return label if "@" in label else f"{label}@{step}"


def add_actions(S1: QuadraticAction, S2: QuadraticAction) -> QuadraticAction:
    """Sum of two contributions over the union of their variables.

    Two layouts are understood.  When ``S1.next`` and ``S2.prev`` are the
    same slice the result runs from ``S1.prev`` to ``S2.next`` and the
    shared slice becomes bulk (auxiliary) variables.  When both actions
    span the same pair of steps the result lives on the label unions of
    those steps, so shared vertices have their couplings added.
    """
    if S1.next.step == S2.prev.step and S1.prev.step != S2.prev.step:
        if not S1.next.same_variables(S2.prev):
            raise ValueError(
                f"boundary {S1.next} has labels {S1.next.labels} in the first action "
                f"but {S2.prev.labels} in the second"
            )
        mid = S1.next
        aux_labels = (
            [_qualified(mid.step, lab) for lab in mid.labels]
            + list(S1.aux.labels)
            + list(S2.aux.labels)
        )
        aux = Slice("bulk", aux_labels)
        keys = (
            [(S1.prev.step, lab) for lab in S1.prev.labels]
            + [(S2.next.step, lab) for lab in S2.next.labels]
            + [(mid.step, lab) for lab in mid.labels]
            + [(S1.aux.step, lab) for lab in S1.aux.labels]
            + [(S2.aux.step, lab) for lab in S2.aux.labels]
        )
        if len(set(keys)) != len(keys):
            raise ValueError("variables of the two actions collide")
        H1, g1 = _embed(S1, keys)
        H2, g2 = _embed(S2, keys)
        meta = {"bulk_slices": [mid]}
        return QuadraticAction(S1.prev, S2.next, H1 + H2, g1 + g2, S1.s0 + S2.s0, aux, meta)

    if S1.prev.step == S2.prev.step and S1.next.step == S2.next.step:
        prev = Slice(S1.prev.step, _union(S1.prev.labels, S2.prev.labels))
        nxt = Slice(S1.next.step, _union(S1.next.labels, S2.next.labels))
        if set(S1.aux.labels) & set(S2.aux.labels):
            raise ValueError("auxiliary variables of the two actions collide")
        aux = Slice("bulk", list(S1.aux.labels) + list(S2.aux.labels))
        keys = (
            [(prev.step, lab) for lab in prev.labels]
            + [(nxt.step, lab) for lab in nxt.labels]
            + [("bulk", lab) for lab in aux.labels]
        )
        H1, g1 = _embed(_rebulk(S1), keys)
        H2, g2 = _embed(_rebulk(S2), keys)
        return QuadraticAction(prev, nxt, H1 + H2, g1 + g2, S1.s0 + S2.s0, aux)

    raise ValueError(
        f"cannot add actions {S1.prev.step}->{S1.next.step} and {S2.prev.step}->{S2.next.step}"
    )


def _rebulk(S: QuadraticAction) -> QuadraticAction:
    if S.aux.step == "bulk":
        return S
    return QuadraticAction(S.prev, S.next, S.hess, S.grad, S.s0, Slice("bulk", S.aux.labels), S.meta)


def _union(a: Sequence[str], b: Sequence[str]) -> list[str]:
    return list(a) + [lab for lab in b if lab not in a]


def hessian_at(S_in: QuadraticAction, S_out: QuadraticAction) -> np.ndarray:
    """Second derivatives with respect to the shared middle slice.

    The result is indexed by the labels of ``S_in.next``.
    """
    if not S_in.next.same_variables(S_out.prev):
        raise ValueError(f"{S_in.next} and {S_out.prev} are not the same slice")
    order = [S_out.prev.index(lab) for lab in S_in.next.labels]
    return S_in.C + S_out.A[np.ix_(order, order)]


def permute_action(S: QuadraticAction, prev_order: Sequence[int], next_order: Sequence[int]) -> QuadraticAction:
    """Relabel by reordering the variables of each boundary slice."""
    prev = Slice(S.prev.step, [S.prev.labels[i] for i in prev_order])
    nxt = Slice(S.next.step, [S.next.labels[i] for i in next_order])
    p = S.prev.dim
    idx = list(prev_order) + [p + j for j in next_order] + list(range(p + S.next.dim, S.size))
    return QuadraticAction(prev, nxt, S.hess[np.ix_(idx, idx)], S.grad[idx], S.s0, S.aux, dict(S.meta))
