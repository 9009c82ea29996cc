import warnings

import numpy as np
import pytest

from disevo import kernel as K
from disevo.action import (
    RoleMap,
    Slice,
    add_actions,
    build_action,
    evaluate,
    hessian_at,
    permute_action,
    zero_action,
)


def _action():
    return build_action(
        Slice(0, ("1", "2")), Slice(1, ("1", "2", "3")),
        A=[[2, 0], [0, 1]], B=[[1, 0, 0], [2, 1, 1]], C=[[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        a=[1, 0], c=[0, 0, 1], s0=3,
    )


def test_blocks_round_trip():
    S = _action()
    assert K.matrices_equal(S.B, K.as_matrix([[1, 0, 0], [2, 1, 1]]))
    assert K.matrices_equal(S.A, K.as_matrix([[2, 0], [0, 1]]))
    assert list(S.a) == [1, 0] and list(S.c) == [0, 0, 1]


def test_evaluate_matches_formula():
    S = _action()
    xp, xn = K.as_vector([1, 2]), K.as_vector([0, 1, -1])
    expect = (xp @ S.A @ xp) / 2 + xp @ S.B @ xn + (xn @ S.C @ xn) / 2 + S.a @ xp + S.c @ xn + 3
    assert evaluate(S, xp, xn) == expect


def test_asymmetric_block_is_symmetrized_with_warning():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        S = build_action(Slice(0, ("a",)), Slice(1, ("b", "c")), A=[[1]], B=[[0, 0]], C=[[1, 2], [0, 1]])
    assert rec
    assert S.C[0, 1] == S.C[1, 0] == 1


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        build_action(Slice(0, ("a",)), Slice(1, ("b",)), A=[[1]], B=[[1, 2]], C=[[1]])


def test_zero_action_is_zero():
    S = zero_action(Slice(0, ("a",)), Slice(1, ("b",)))
    assert evaluate(S, [5], [7]) == 0


def test_add_actions_chains_through_the_middle_slice():
    mid = Slice(1, ("1", "2", "3"))
    S1 = build_action(Slice(0, ("1", "2")), mid, B=[[1, 0, 0], [2, 1, 1]])
    S2 = build_action(mid, Slice(2, ("1", "2")), B=[[1, 2], [0, 1], [0, 1]])
    S = add_actions(S1, S2)
    assert S.prev.labels == ("1", "2") and S.next.step == 2
    assert S.aux.dim == 3
    x0, x1, x2 = K.as_vector([1, -1]), K.as_vector([2, 0, 1]), K.as_vector([3, 1])
    assert evaluate(S, x0, x2, x1) == evaluate(S1, x0, x1) + evaluate(S2, x1, x2)


def test_hessian_at_aligns_labels():
    mid = Slice(1, ("a", "b"))
    S1 = build_action(Slice(0, ("x",)), mid, C=[[1, 0], [0, 2]])
    S2 = build_action(Slice(1, ("b", "a")), Slice(2, ("y",)), A=[[5, 0], [0, 7]])
    H = hessian_at(S1, S2)
    assert list(np.diag(H)) == [1 + 7, 2 + 5]


def test_permute_action_preserves_values():
    S = _action()
    P = permute_action(S, [1, 0], [2, 0, 1])
    assert P.prev.labels == ("2", "1") and P.next.labels == ("3", "1", "2")
    assert evaluate(P, [2, 1], [-1, 0, 1]) == evaluate(S, [1, 2], [0, 1, -1])


def test_role_map():
    roles = RoleMap({"v": "n", "a": "e"})
    assert roles.labels("n") == ("v",)
    assert roles.role("other") == "b"
    with pytest.raises(ValueError):
        RoleMap({"v": "x"})
    with pytest.raises(ValueError):
        RoleMap({"v": "n"}).check(Slice(0, ("v",)), Slice(1, ("v",)))
