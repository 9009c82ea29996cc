from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disevo import kernel as K
from disevo.action import Slice, build_action
from disevo.legendre import (
    AffineConstraint,
    ConstraintSet,
    bracket,
    lagrangian_two_form,
    post_constraints,
    post_legendre,
    pre_constraints,
    pre_legendre,
    two_form_value,
)
from disevo.models import SlabSpec, cdt_slab_action

F = Fraction
STRIP = [[1, 0, 0], [2, 1, 1]]


def _only(cset):
    assert len(cset) == 1
    c = cset[0]
    return list(c.gp), list(c.gx), c.c0


def test_post_constraint_of_two_to_three_slab():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    gp, gx, c0 = _only(post_constraints(S))
    assert gp == [0, 1, -1]
    assert gx == [0, F(-5, 2), F(5, 2)]
    assert c0 == 0
    assert len(pre_constraints(S)) == 0


def test_pre_constraint_of_reversed_slab():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP).transpose())
    gp, gx, c0 = _only(pre_constraints(S))
    assert gp == [0, 1, -1]
    assert gx == [0, F(5, 2), F(-5, 2)]
    assert len(post_constraints(S)) == 0


def test_regular_slab_has_no_constraints():
    S = cdt_slab_action(SlabSpec(3, 3, [[1, 1, 0], [0, 1, 1], [1, 0, 1]]))
    assert len(pre_constraints(S)) == 0
    assert len(post_constraints(S)) == 0


def test_post_momentum_example():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    pt = post_legendre(S, [0, 0], [0, 1, -1])
    assert list(pt.p) == [0, F(5, 2), F(-5, 2)]
    assert pt.tag == "post"


def test_constant_fields_have_zero_momenta():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    assert all(v == 0 for v in post_legendre(S, [1, 1], [1, 1, 1]).p)
    assert all(v == 0 for v in pre_legendre(S, [1, 1], [1, 1, 1]).p)


def test_zero_action_gives_zero_momenta_and_full_constraints():
    S = build_action(Slice(0, ("a", "b")), Slice(1, ("c",)))
    assert all(v == 0 for v in post_legendre(S, [1, 2], [3]).p)
    assert len(pre_constraints(S)) == 2 and len(post_constraints(S)) == 1


def test_extension_variable_gives_vanishing_momentum():
    # the action does not depend on next variable "v"
    S = build_action(Slice(0, ("a",)), Slice(1, ("a", "v")), A=[[1]], B=[[1, 0]], C=[[1, 0], [0, 0]])
    gp, gx, c0 = _only(post_constraints(S))
    assert gp == [0, 1] and gx == [0, 0] and c0 == 0
    S = build_action(Slice(0, ("a", "v")), Slice(1, ("a",)), B=[[1], [0]])
    gp, gx, c0 = _only(pre_constraints(S))
    assert gp == [0, 1] and gx == [0, 0]


def test_two_form_equals_minus_b():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    assert K.matrices_equal(lagrangian_two_form(S), -S.B)


def test_bracket_of_example_b_constraints():
    slc = Slice(1, ("1", "2", "3"))
    pre = AffineConstraint(slc, [0, F(5, 2), F(-5, 2)], [0, 1, -1], 0, "pre")
    post = AffineConstraint(slc, [0, F(-5, 2), F(5, 2)], [0, 1, -1], 0, "post")
    assert bracket(pre, post) == 10
    assert bracket(post, pre) == -10


def test_canonical_bracket():
    slc = Slice(0, ("1", "2"))
    for i in range(2):
        for j in range(2):
            phi = AffineConstraint(slc, [int(k == i) for k in range(2)], [0, 0], 0, "pre")
            pi = AffineConstraint(slc, [0, 0], [int(k == j) for k in range(2)], 0, "pre")
            assert bracket(phi, pi) == int(i == j)


def test_bracket_slice_mismatch():
    a = AffineConstraint(Slice(0, ("1",)), [1], [0], 0, "pre")
    b = AffineConstraint(Slice(1, ("1",)), [1], [0], 0, "pre")
    with pytest.raises(ValueError):
        bracket(a, b)


def test_reducible_set_rejected():
    slc = Slice(0, ("1",))
    c = AffineConstraint(slc, [1], [1], 0, "pre")
    with pytest.raises(ValueError):
        ConstraintSet(slc, (c, c))


def test_degenerate_slice_has_empty_sets():
    S = cdt_slab_action(SlabSpec(0, 1, []))
    assert len(pre_constraints(S)) == 0
    assert len(post_constraints(S)) == 1


ints = st.integers(-3, 3)


@st.composite
def actions(draw):
    qp, qn = draw(st.integers(1, 4)), draw(st.integers(1, 4))
    r = draw(st.integers(0, min(qp, qn)))
    U = np.array(draw(st.lists(st.lists(ints, min_size=max(r, 1), max_size=max(r, 1)), min_size=qp, max_size=qp)))
    V = np.array(draw(st.lists(st.lists(ints, min_size=qn, max_size=qn), min_size=max(r, 1), max_size=max(r, 1))))
    B = U[:, :r] @ V[:r] if r else np.zeros((qp, qn), dtype=int)
    A = np.array(draw(st.lists(st.lists(ints, min_size=qp, max_size=qp), min_size=qp, max_size=qp)))
    C = np.array(draw(st.lists(st.lists(ints, min_size=qn, max_size=qn), min_size=qn, max_size=qn)))
    a = draw(st.lists(ints, min_size=qp, max_size=qp))
    c = draw(st.lists(ints, min_size=qn, max_size=qn))
    labels = lambda q: tuple(str(i + 1) for i in range(q))  # noqa: E731
    return build_action(Slice(0, labels(qp)), Slice(1, labels(qn)),
                        A=(A + A.T).tolist(), B=B.tolist(), C=(C + C.T).tolist(), a=a, c=c)


@settings(max_examples=60, deadline=None)
@given(actions(), st.data())
def test_pullback_identity(S, data):
    qp, qn = S.prev.dim, S.next.dim
    vec = lambda n: K.as_vector(data.draw(st.lists(ints, min_size=n, max_size=n)))  # noqa: E731
    u, v = (vec(qp), vec(qn)), (vec(qp), vec(qn))
    lag = two_form_value(S, u, v)
    post_u = (u[1], S.B.T @ u[0] + S.C @ u[1])
    post_v = (v[1], S.B.T @ v[0] + S.C @ v[1])
    pre_u = (u[0], -(S.A @ u[0] + S.B @ u[1]))
    pre_v = (v[0], -(S.A @ v[0] + S.B @ v[1]))
    assert K.symplectic_pairing(post_u, post_v) == lag
    assert K.symplectic_pairing(pre_u, pre_v) == lag


@settings(max_examples=60, deadline=None)
@given(actions())
def test_count_balance_and_gradients(S):
    pre, post = pre_constraints(S), post_constraints(S)
    assert len(pre) - len(post) == S.prev.dim - S.next.dim
    for c in pre:
        assert all(v == 0 for v in c.gp @ S.B)
    for c in post:
        assert all(v == 0 for v in S.B @ c.gp)


@settings(max_examples=60, deadline=None)
@given(actions(), st.data())
def test_momenta_lie_on_constraint_surfaces(S, data):
    xp = data.draw(st.lists(ints, min_size=S.prev.dim, max_size=S.prev.dim))
    xn = data.draw(st.lists(ints, min_size=S.next.dim, max_size=S.next.dim))
    a, b = pre_legendre(S, xp, xn), post_legendre(S, xp, xn)
    assert all(r == 0 for r in pre_constraints(S).residuals(a.x, a.p))
    assert all(r == 0 for r in post_constraints(S).residuals(b.x, b.p))


@settings(max_examples=60, deadline=None)
@given(actions())
def test_first_class_within_pre_and_post(S):
    for cset in (pre_constraints(S), post_constraints(S)):
        for f in cset:
            for g in cset:
                assert bracket(f, g) == 0
