"""Randomized invariant suites over small quadratic actions.

Each suite draws its trials from ``numpy.random.default_rng`` seeded by
``(seed, suite index)``, so a single suite reproduces the same trials
whether it runs alone or with the others.  Matrices use small integer
entries and deliberate rank deficiencies so that constraints actually
occur.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernel as K
from .action import QuadraticAction, RoleMap, Slice, build_action, hessian_at
from .analysis import VerificationFailed, counting_formulas
from .evolution import MissingParameter, Schedule, effective_action, match_and_propagate
from .legendre import MoveRelation, bracket, post_constraints, pre_constraints
from .local_moves import MoveSpec, extended_canonical_update, initial_state, move_relation

__all__ = ["SUITES", "SuiteResult", "random_action", "random_move", "run_suite", "run_suites"]


# -- generators ----------------------------------------------------------------

def _ints(rng: np.random.Generator, shape, lo: int = -3, hi: int = 3) -> np.ndarray:
    return rng.integers(lo, hi + 1, size=shape)


def _sym(rng, n: int) -> np.ndarray:
    M = _ints(rng, (n, n))
    return M + M.T


def _low_rank(rng, m: int, n: int, r: int) -> np.ndarray:
    if r <= 0 or m == 0 or n == 0:
        return np.zeros((m, n), dtype=int)
    return _ints(rng, (m, r), -2, 2) @ _ints(rng, (r, n), -2, 2)


def random_action(
    rng: np.random.Generator,
    prev: Slice,
    next: Slice,
    deficiency: int | None = None,
    offsets: bool = True,
) -> QuadraticAction:
    """Quadratic action whose mixed block has rank ``min(Q) − deficiency``."""
    qp, qn = prev.dim, next.dim
    if deficiency is None:
        deficiency = int(rng.integers(0, 3))
    r = max(0, min(qp, qn) - deficiency)
    a = _ints(rng, qp) if offsets else np.zeros(qp, dtype=int)
    c = _ints(rng, qn) if offsets else np.zeros(qn, dtype=int)
    return build_action(
        prev, next,
        A=_sym(rng, qp).tolist(), B=_low_rank(rng, qp, qn, r).tolist(), C=_sym(rng, qn).tolist(),
        a=a.tolist(), c=c.tolist(), s0=0,
    )


def _labels(n: int) -> tuple[str, ...]:
    return tuple(str(i + 1) for i in range(n))


def random_schedule(rng, n_moves: int, q_max: int = 3, offsets: bool = False, q_min: int = 1) -> Schedule:
    qs = [int(rng.integers(q_min, q_max + 1)) for _ in range(n_moves + 1)]
    slices = [Slice(n, _labels(q)) for n, q in enumerate(qs)]
    return Schedule([random_action(rng, slices[n], slices[n + 1], offsets=offsets) for n in range(n_moves)])


def _random_hessian_action(rng, prev_labels, next_labels, deficiency: int) -> QuadraticAction:
    """Action over the given labels with a rank-deficient full Hessian."""
    prev, nxt = Slice(0, tuple(prev_labels)), Slice(1, tuple(next_labels))
    m = prev.dim + nxt.dim
    r = max(0, m - deficiency)
    U = _ints(rng, (r, m), -2, 2)
    H = U.T @ np.diag(rng.choice([-1, 1], size=r)) @ U if r else np.zeros((m, m), dtype=int)
    g = _ints(rng, m)
    p = prev.dim
    return build_action(prev, nxt, A=H[:p, :p].tolist(), B=H[:p, p:].tolist(), C=H[p:, p:].tolist(),
                        a=g[:p].tolist(), c=g[p:].tolist())


def random_move(rng, kind: str | None = None) -> tuple[MoveSpec, tuple[str, ...]]:
    """A random local move of the given type and a slice it acts on."""
    kind = kind or str(rng.choice(["I", "II", "III", "IV"]))
    nb = int(rng.integers(0, 3))
    bs = tuple(f"b{i + 1}" for i in range(nb))
    if kind == "I":
        es = tuple(f"e{i + 1}" for i in range(int(rng.integers(1, 3))))
        ns = tuple(f"n{i + 1}" for i in range(int(rng.integers(1, 3))))
        S = _random_hessian_action(rng, (), es + ns, int(rng.integers(0, 3)))
        roles, labels = {**{e: "e" for e in es}, **{n: "n" for n in ns}}, bs + es
    elif kind == "II":
        es = tuple(f"e{i + 1}" for i in range(int(rng.integers(1, 3))))
        os = tuple(f"o{i + 1}" for i in range(int(rng.integers(1, 3))))
        S = _random_hessian_action(rng, es + os, (), int(rng.integers(0, 3)))
        roles, labels = {**{e: "e" for e in es}, **{o: "o" for o in os}}, bs + es + os
    elif kind == "III":
        k = int(rng.integers(1, 3))
        es = tuple(f"e{i + 1}" for i in range(int(rng.integers(0, 3))))
        os = tuple(f"o{i + 1}" for i in range(k))
        ns = tuple(f"n{i + 1}" for i in range(k))
        S = _random_hessian_action(rng, os, es + ns, int(rng.integers(0, 3)))
        roles = {**{e: "e" for e in es}, **{o: "o" for o in os}, **{n: "n" for n in ns}}
        labels = bs + es + os
    else:
        es = tuple(f"e{i + 1}" for i in range(int(rng.integers(1, 4))))
        S = _random_hessian_action(rng, (), es, int(rng.integers(0, 3)))
        roles, labels = {e: "e" for e in es}, bs + es
    return MoveSpec(kind, RoleMap(roles), S), labels


def _vec(rng, n: int) -> np.ndarray:
    return K.as_vector(_ints(rng, n).tolist(), n)


def _tangent(rng, grads: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Random integer combination of the tangent directions of an affine surface."""
    if grads.shape[0]:
        _, null, _ = K.rank_nullspace(grads)
    else:
        null = [K.eye(2 * n)[i] for i in range(2 * n)]
    w = K.zeros(2 * n)
    for v in null:
        w = w + K.scalar(int(rng.integers(-3, 4))) * v
    return w[:n], w[n:]


def _check_equal(a, b, what: str) -> None:
    a, b = K.scalar(a), K.scalar(b)
    scale = max(1.0, abs(float(a)), abs(float(b)))
    if not K.is_zero(a - b, scale):
        raise VerificationFailed(f"{what}: {K.format_scalar(a)} != {K.format_scalar(b)}")


def _check_zero_vec(v, what: str) -> None:
    for x in np.asarray(v).flat:
        if not K.is_zero(x, 10.0):
            raise VerificationFailed(f"{what}: nonzero entry {K.format_scalar(x)}")


# -- suites ------------------------------------------------------------------------

def suite_first_class(rng) -> None:
    """Brackets within a pre-set or a post-set vanish; p-gradients are null vectors."""
    qp, qn = (int(q) for q in rng.integers(1, 5, size=2))
    S = random_action(rng, Slice(0, _labels(qp)), Slice(1, _labels(qn)))
    for tag, cset in (("pre", pre_constraints(S)), ("post", post_constraints(S))):
        for i, f in enumerate(cset):
            for g in list(cset)[i + 1:]:
                _check_equal(bracket(f, g), 0, f"bracket within the {tag}-set")
    for c in pre_constraints(S):
        _check_zero_vec(c.gp @ S.B, "pre-constraint p-gradient is not a left-null vector")
    for c in post_constraints(S):
        _check_zero_vec(S.B @ c.gp, "post-constraint p-gradient is not a right-null vector")
    n_left = S.prev.dim - K.rank(S.B)
    n_right = S.next.dim - K.rank(S.B)
    if (len(pre_constraints(S)), len(post_constraints(S))) != (n_left, n_right):
        raise VerificationFailed("constraint counts differ from the null-space dimensions")


def suite_presymplectic(rng) -> None:
    """Forward evolution preserves the pairing of constraint-tangent vectors, for any λ."""
    qp, qn = (int(q) for q in rng.integers(1, 5, size=2))
    S = random_action(rng, Slice(0, _labels(qp)), Slice(1, _labels(qn)))
    rel = MoveRelation.from_action(S)
    pre = pre_constraints(S)
    n = qp
    u = _tangent(rng, pre.gradients() if len(pre) else K.zeros((0, 2 * n)), n)
    v = _tangent(rng, pre.gradients() if len(pre) else K.zeros((0, 2 * n)), n)
    n_free = len(post_constraints(S))
    lam_u = [int(x) for x in _ints(rng, n_free)]
    lam_v = [int(x) for x in _ints(rng, n_free)]
    before = K.symplectic_pairing(u, v)
    pu0, pv0 = rel.push_tangent("source", *u), rel.push_tangent("source", *v)
    pu1, pv1 = rel.push_tangent("source", *u, lam_u), rel.push_tangent("source", *v, lam_v)
    _check_equal(K.symplectic_pairing(pu0, pv0), before, "pairing after forward evolution")
    _check_equal(K.symplectic_pairing(pu1, pv1), before, "pairing after forward evolution with free parameters")
    # pullback of the canonical form equals the Lagrangian two-form
    dx0, dx1, dy0, dy1 = _vec(rng, qp), _vec(rng, qn), _vec(rng, qp), _vec(rng, qn)
    lag = -(dx0 @ S.B @ dy1) + dy0 @ S.B @ dx1
    post_u = (dx1, S.B.T @ dx0 + S.C @ dx1)
    post_v = (dy1, S.B.T @ dy0 + S.C @ dy1)
    _check_equal(K.symplectic_pairing(post_u, post_v), lag, "post-Legendre pullback")
    pre_u = (dx0, -(S.A @ dx0 + S.B @ dx1))
    pre_v = (dy0, -(S.A @ dy0 + S.B @ dy1))
    _check_equal(K.symplectic_pairing(pre_u, pre_v), lag, "pre-Legendre pullback")


def suite_local_symplectic(rng) -> None:
    """Momentum updating preserves the pairing on the move's pre-constraint surface."""
    move, labels = random_move(rng)
    fresh = tuple(lab for lab in move.new if lab not in labels)
    labels = labels + fresh
    rel = move_relation(move, labels)
    src = rel.constraints("source", "pre")
    N = len(labels)
    grads = src.gradients() if len(src) else K.zeros((0, 2 * N))
    u, v = _tangent(rng, grads, N), _tangent(rng, grads, N)
    before = K.symplectic_pairing(u, v)
    try:
        n_free = len(rel.solve("source", *_base_point(rel, N))[1])
    except MissingParameter:  # pragma: no cover - params default to zero
        n_free = 0
    lam_u = [int(x) for x in _ints(rng, n_free)]
    lam_v = [int(x) for x in _ints(rng, n_free)]
    pu = rel.push_tangent("source", *u, lam_u)
    pv = rel.push_tangent("source", *v, lam_v)
    _check_equal(K.symplectic_pairing(pu, pv), before, f"pairing under a type {move.kind} move")
    if move.kind == "III":
        S = move.action
        o_idx = [S.prev.index(lab) for lab in move.old]
        n_idx = [S.next.index(lab) for lab in move.new]
        kappa = len(move.old) - K.rank(S.B[np.ix_(o_idx, n_idx)])
        pre_n = len(src) - len(move.new)
        post_n = len(rel.constraints("target", "post")) - len(move.old)
        if (pre_n, post_n) != (kappa, kappa):
            raise VerificationFailed(
                f"type III rank rule: expected {kappa} pre and post constraints, got {pre_n} and {post_n}"
            )


def _base_point(rel: MoveRelation, N: int):
    """Some point on the source surface of ``rel``."""
    M = np.vstack([rel.D] + [G for G, _ in rel.gauge]) if rel.gauge else rel.D
    b = np.concatenate([rel.d] + [g for _, g in rel.gauge]) if rel.gauge else rel.d
    z = K.affine_solve(M, b).particular if M.shape[0] else K.zeros(rel.dim)
    return rel.Xs @ z + rel.xs, rel.Ps @ z + rel.ps


def suite_lhr(rng) -> None:
    """Bracket of a pre- and a post-constraint equals the Hessian contraction."""
    qa, q, qb = (int(x) for x in rng.integers(1, 5, size=3))
    mid = Slice(1, _labels(q))
    S_in = random_action(rng, Slice(0, _labels(qa)), mid)
    S_out = random_action(rng, mid, Slice(2, _labels(qb)))
    H = hessian_at(S_in, S_out)
    for f in pre_constraints(S_out):
        for g in post_constraints(S_in):
            _check_equal(bracket(f, g), f.gp @ H @ g.gp, "pre/post bracket against the Hessian")


def _stepwise_system(S1: QuadraticAction, S2: QuadraticAction):
    """Rows over ``(x0, x1, x2)`` for the bulk equation and the boundary momenta."""
    q0, q1, q2 = S1.prev.dim, S1.next.dim, S2.next.dim
    Z = lambda r, c: K.zeros((r, c))  # noqa: E731
    eom = np.hstack([S1.B.T, S1.C + S2.A, S2.B])
    eom_c = -(S1.c + S2.a)
    p0 = np.hstack([-S1.A, -S1.B, Z(q0, q2)])
    p0_c = -S1.a
    p2 = np.hstack([Z(q2, q0), S2.B.T, S2.C])
    p2_c = S2.c
    return eom, eom_c, p0, p0_c, p2, p2_c


def suite_commuting(rng) -> None:
    """Stepwise solutions and the effective action give the same boundary data."""
    q0, q1, q2 = (int(x) for x in rng.integers(1, 4, size=3))
    s = [Slice(n, _labels(q)) for n, q in enumerate((q0, q1, q2))]
    offsets = bool(rng.integers(0, 2))
    S1 = random_action(rng, s[0], s[1], offsets=offsets)
    S2 = random_action(rng, s[1], s[2], offsets=offsets)
    eom, eom_c, P0, p0c, P2, p2c = _stepwise_system(S1, S2)
    try:
        sol = K.affine_solve(eom, eom_c)
    except K.Infeasible:
        S1 = random_action(rng, s[0], s[1], offsets=False)
        S2 = random_action(rng, s[1], s[2], offsets=False)
        eom, eom_c, P0, p0c, P2, p2c = _stepwise_system(S1, S2)
        sol = K.affine_solve(eom, eom_c)
    E = effective_action(S1, S2)
    rel = MoveRelation.from_action(E)
    # stepwise → effective
    w = sol.point([int(x) for x in _ints(rng, len(sol.null_basis))])
    x0, x2 = w[:q0], w[q0 + q1:]
    p0, p2 = P0 @ w + p0c, P2 @ w + p2c
    M = np.vstack([rel.Xs, rel.Ps, rel.Xt, rel.Pt, rel.D])
    b = np.concatenate([x0 - rel.xs, p0 - rel.ps, x2 - rel.xt, p2 - rel.pt, rel.d])
    try:
        K.affine_solve(M, b)
    except K.Infeasible:
        raise VerificationFailed("stepwise solution not reproduced by the effective action") from None
    # effective → stepwise
    dom = K.affine_solve(rel.D, rel.d) if rel.D.shape[0] else None
    z = dom.point([int(x) for x in _ints(rng, len(dom.null_basis))]) if dom else _vec(rng, rel.dim)
    y0, y2 = rel.Xs @ z + rel.xs, rel.Xt @ z + rel.xt
    r0, r2 = rel.Ps @ z + rel.ps, rel.Pt @ z + rel.pt
    I0 = np.hstack([K.eye(q0), K.zeros((q0, q1 + q2))])
    I2 = np.hstack([K.zeros((q2, q0 + q1)), K.eye(q2)])
    M = np.vstack([eom, I0, I2, P0, P2])
    b = np.concatenate([eom_c, y0, y2, r0 - p0c, r2 - p2c])
    try:
        K.affine_solve(M, b)
    except K.Infeasible:
        raise VerificationFailed("effective boundary data admit no stepwise solution") from None


def suite_counting(rng) -> None:
    """Both counting formulas agree; constraint spans only grow with the schedule."""
    sched = random_schedule(rng, 3, q_max=3, q_min=0 if rng.integers(0, 4) == 0 else 1)
    for i in range(3):
        for f in range(i + 1, 4):
            a, b = counting_formulas(sched, i, f)
            if a != b:
                raise VerificationFailed(f"counting formulas disagree for {i}→{f}: {a} vs {b}")
    short = match_and_propagate(sched.prefix(2))
    full = match_and_propagate(sched)
    for n in range(3):
        big = full[n].combined.augmented()
        for c in short[n].combined:
            row = np.concatenate([c.gradient(), [c.c0]])
            if not big.shape[0] or not K.row_space_contains(big, row):
                raise VerificationFailed(f"constraint at slice {n} lost when the schedule grew")


def suite_extended_update(rng) -> None:
    """The unconstrained canonical update preserves the full pairing."""
    move, labels = random_move(rng)
    N = len(labels)
    x, p = _vec(rng, N), _vec(rng, N)
    u, v = (_vec(rng, N), _vec(rng, N)), (_vec(rng, N), _vec(rng, N))
    base = extended_canonical_update(move, initial_state(labels, x, p))
    su = extended_canonical_update(move, initial_state(labels, x + u[0], p + u[1]))
    sv = extended_canonical_update(move, initial_state(labels, x + v[0], p + v[1]))
    du = (su.point.x - base.point.x, su.point.p - base.point.p)
    dv = (sv.point.x - base.point.x, sv.point.p - base.point.p)
    M = base.slice.dim
    pad = lambda w: np.concatenate([w, K.zeros(M - N)])  # noqa: E731
    before = K.symplectic_pairing((pad(u[0]), pad(u[1])), (pad(v[0]), pad(v[1])))
    _check_equal(K.symplectic_pairing(du, dv), before, "full-space pairing under the canonical update")


SUITES: dict[str, Callable[[np.random.Generator], None]] = {
    "first-class": suite_first_class,
    "presymplectic": suite_presymplectic,
    "local-symplectic": suite_local_symplectic,
    "lhr": suite_lhr,
    "commuting": suite_commuting,
    "counting": suite_counting,
    "extended-update": suite_extended_update,
}


@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.trials - len(self.failures)}/{self.trials} trials"


def run_suite(name: str, seed: int = 0, count: int = 100) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}")
    rng = np.random.default_rng([seed, list(SUITES).index(name)])
    check = SUITES[name]
    result = SuiteResult(name, count)
    for t in range(count):
        try:
            check(rng)
        except (VerificationFailed, K.Infeasible, ArithmeticError, ValueError) as exc:
            result.failures.append(f"trial {t}: {exc}")
    return result


def run_suites(names=None, seed: int = 0, count: int = 100) -> list[SuiteResult]:
    return [run_suite(n, seed, count) for n in (names or list(SUITES))]
