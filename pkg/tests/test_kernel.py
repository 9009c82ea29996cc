from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disevo import kernel as K

F = Fraction

small = st.integers(-4, 4)


def int_matrix(max_rows=4, max_cols=4):
    return st.integers(1, max_rows).flatmap(
        lambda r: st.integers(1, max_cols).flatmap(
            lambda c: st.lists(st.lists(small, min_size=c, max_size=c), min_size=r, max_size=r)
        )
    )


def test_rank_and_nullspace_of_strip_adjacency():
    rank, right, left = K.rank_nullspace(K.as_matrix([[1, 0, 0], [2, 1, 1]]))
    assert rank == 2
    assert len(right) == 1 and list(right[0]) == [0, 1, -1]
    assert left == []


def test_regular_adjacency_has_full_rank():
    assert K.rank(K.as_matrix([[1, 1, 0], [0, 1, 1], [1, 0, 1]])) == 3


def test_empty_matrices():
    rank, right, left = K.rank_nullspace(K.zeros((0, 3)))
    assert rank == 0 and len(right) == 3 and left == []
    rank, right, left = K.rank_nullspace(K.zeros((2, 0)))
    assert rank == 0 and right == [] and len(left) == 2


def test_affine_solve_infeasible_certificate_in_both_modes():
    M = [[1, 0, 0], [2, 1, 1]]
    with pytest.raises(K.Infeasible):
        K.affine_solve(K.as_matrix([[1, 1], [1, 1]]), K.as_vector([1, 2]))
    for mode in ("exact", "float"):
        with K.arithmetic(mode):
            Mt = K.as_matrix(M).T
            with pytest.raises(K.Infeasible) as err:
                K.affine_solve(Mt, K.as_vector([0, 1, 0]))
            cert = np.asarray(err.value.certificate, dtype=float)
            assert np.allclose(cert @ np.asarray(Mt, dtype=float), 0)
            assert np.allclose(cert / cert[1], [0, 1, -1])


def test_affine_solve_min_norm_particular():
    sol = K.affine_solve(K.as_matrix([[1, 1]]), K.as_vector([2]))
    assert list(sol.particular) == [1, 1]
    assert len(sol.null_basis) == 1
    assert list(sol.point([3])) == list(sol.particular + 3 * sol.null_basis[0])


def test_scalar_parsing():
    assert K.scalar("5/2") == F(5, 2)
    assert K.scalar(0.1) == F(1, 10)
    with K.arithmetic("float"):
        assert K.scalar("1/4") == 0.25
    assert K.format_scalar(F(-3, 4)) == "-3/4"


def test_mode_from_env(monkeypatch):
    monkeypatch.setenv("DISEVO_MODE", "float")
    assert K.mode_from_env("exact") == "float"
    monkeypatch.delenv("DISEVO_MODE")
    assert K.mode_from_env("exact") == "exact"


def test_set_mode_rejects_unknown():
    with pytest.raises(ValueError):
        K.set_mode("symbolic")
    with pytest.raises(ValueError):
        K.set_mode("float", -1.0)


def test_symplectic_pairing_canonical():
    e = K.as_vector([1, 0])
    z = K.as_vector([0, 0])
    assert K.symplectic_pairing((e, z), (z, e)) == 1
    assert K.symplectic_pairing((z, e), (e, z)) == -1


def test_affine_image_equations_of_a_line():
    # image of t -> (t, 2t + 1)
    G, c = K.affine_image_equations(K.as_matrix([[1], [2]]), K.as_vector([0, 1]))
    assert G.shape == (1, 2)
    assert G[0] @ K.as_vector([3, 7]) + c[0] == 0


@settings(max_examples=60, deadline=None)
@given(int_matrix())
def test_rank_nullity(rows):
    M = K.as_matrix(rows)
    rank, right, left = K.rank_nullspace(M)
    assert rank + len(right) == M.shape[1]
    assert rank + len(left) == M.shape[0]
    for v in right:
        assert all(x == 0 for x in M @ v)
    for w in left:
        assert all(x == 0 for x in w @ M)


@settings(max_examples=60, deadline=None)
@given(int_matrix())
def test_exact_and_float_rank_agree(rows):
    exact = K.rank(K.as_matrix(rows))
    with K.arithmetic("float"):
        assert K.rank(K.as_matrix(rows)) == exact


@settings(max_examples=60, deadline=None)
@given(int_matrix(), st.lists(small, min_size=4, max_size=4))
def test_affine_solve_solves_or_certifies(rows, rhs):
    M = K.as_matrix(rows)
    b = K.as_vector(rhs[: M.shape[0]])
    try:
        sol = K.affine_solve(M, b)
    except K.Infeasible as exc:
        y = exc.certificate
        assert all(v == 0 for v in y @ M)
        assert y @ b != 0
    else:
        assert list(M @ sol.particular) == list(b)
        for v in sol.null_basis:
            assert all(x == 0 for x in M @ v)
            # particular solution is orthogonal to the null space
            assert sol.particular @ v == 0


@settings(max_examples=40, deadline=None)
@given(int_matrix(3, 5), int_matrix(3, 5))
def test_row_space_intersection_lies_in_both(a, b):
    A, B = K.as_matrix(a), K.as_matrix(b)
    if A.shape[1] != B.shape[1]:
        return
    for r in K.row_space_intersection(A, B):
        assert K.row_space_contains(A, r)
        assert K.row_space_contains(B, r)
