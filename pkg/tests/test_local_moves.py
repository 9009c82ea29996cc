from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disevo import kernel as K
from disevo.action import RoleMap, Slice, build_action
from disevo.evolution import MissingParameter
from disevo.legendre import OffConstraintSurface
from disevo.local_moves import (
    MoveSpec,
    extend_phase_space,
    extended_canonical_update,
    initial_state,
    momentum_update,
    move_post_constraints,
    move_pre_constraints,
    reduce_phase_space,
    transport_constraints,
)
from disevo.models import pachner_move, run_pachner_sequence, vertex_labels
from disevo.verify import suite_extended_update, suite_local_symplectic

F = Fraction


def _describe(cset):
    return sorted(
        (tuple(c.gp), tuple(c.gx), c.c0, c.provenance) for c in cset
    )


def test_one_two_move_updates_momenta():
    move = pachner_move("1-2", ("1", "2", "3"), 0)
    assert move.kind == "I" and move.new == ("v1",)
    state = momentum_update(move, initial_state(("1", "2", "3"), [1, 2, 3], [0, 0, 0]))
    assert state.labels == ("1", "2", "3", "v1")
    assert list(state.point.x) == [1, 2, 3, 0]
    assert list(state.point.p) == [0, F(3, 2), 0, F(-3, 2)]
    assert state.extension == frozenset()
    [c] = state.constraints
    # p_v - (v - (x1 + x2)/2) = 0
    assert list(c.gp) == [0, 0, 0, 1]
    assert list(c.gx) == [F(1, 2), F(1, 2), 0, -1]
    assert all(r == 0 for r in state.constraints.residuals(state.point.x, state.point.p))


def test_one_two_move_takes_the_new_position_as_parameter():
    move = pachner_move("1-2", ("1", "2", "3"), 0)
    state = momentum_update(move, initial_state(("1", "2", "3"), [1, 2, 3], [0, 0, 0]), [5])
    assert state.x("v1") == 5
    with pytest.raises(MissingParameter):
        momentum_update(move, initial_state(("1", "2", "3")), strict=True)


def test_two_one_move_pre_constraint():
    move = pachner_move("2-1", ("1", "2", "3", "4"), 1)
    assert move.kind == "II" and move.old == ("2",)
    pre = move_pre_constraints(move, ("1", "2", "3", "4"))
    assert _describe(pre) == [((0, 1, 0, 0), (F(-1, 2), 1, F(-1, 2), 0), 0, "primary")]
    post = move_post_constraints(move, ("1", "2", "3", "4"))
    assert _describe(post) == [((0, 1, 0, 0), (0, 0, 0, 0), 0, "primary")]


def test_two_one_move_off_surface():
    move = pachner_move("2-1", ("1", "2", "3", "4"), 1)
    with pytest.raises(OffConstraintSurface):
        momentum_update(move, initial_state(("1", "2", "3", "4"), [0, 1, 0, 0], [0, 0, 0, 0]))


def test_square_move_constraints():
    move = pachner_move("square", ("1", "2", "3"), 1)
    assert move.kind == "III" and move.old == ("2",) and move.new == ("v1",)
    labels = ("1", "2", "3", "v1")
    pre = move_pre_constraints(move, labels)
    assert ((0, 1, 0, 0), (-1, 2, -1, 0), 0, "primary") in _describe(pre)
    assert ((0, 0, 0, 1), (0, 0, 0, 0), 0, "primary") in _describe(pre)
    post = move_post_constraints(move, labels)
    assert ((0, 0, 0, 1), (1, 0, 1, -2), 0, "primary") in _describe(post)
    assert ((0, 1, 0, 0), (0, 0, 0, 0), 0, "primary") in _describe(post)


def test_square_move_data_and_extension():
    move = pachner_move("square", ("1", "2", "3"), 1)
    # on the pre-constraint surface: p2 = x1 - 2 x2 + x3
    state = initial_state(("1", "2", "3"), [1, 2, 5], [0, 2, 0])
    after = momentum_update(move, state, [4])
    assert after.extension == frozenset({"2"})
    assert after.live == ("1", "3", "v1")
    assert after.p("2") == 0 and after.x("2") == 2
    assert after.x("v1") == 4
    assert all(r == 0 for r in after.constraints.residuals(after.point.x, after.point.p))


def test_extended_update_agrees_with_momentum_update_on_square_move():
    move = pachner_move("square", ("1", "2", "3"), 1)
    state = initial_state(("1", "2", "3"), [1, 2, 5], [0, 2, 0])
    lam = 4
    via_moves = momentum_update(move, state, [lam])
    extended = extend_phase_space(state, ["v1"], gauge={"v1": lam})
    via_canonical = extended_canonical_update(move, extended)
    assert via_moves.labels == via_canonical.labels
    assert list(via_moves.point.x) == list(via_canonical.point.x)
    assert list(via_moves.point.p) == list(via_canonical.point.p)


def test_extended_update_with_zero_action_is_identity():
    move = MoveSpec("IV", RoleMap({"a": "e"}), build_action(Slice(0), Slice(1, ("a",))))
    state = initial_state(("a", "b"), [1, 2], [3, 4])
    out = extended_canonical_update(move, state)
    assert list(out.point.x) == [1, 2] and list(out.point.p) == [3, 4]


def test_extend_and_reduce_phase_space():
    state = initial_state(("a",), [1], [2])
    ext = extend_phase_space(state, ["n"], ["o"], gauge={"o": 7})
    assert ext.labels == ("a", "n", "o")
    assert ext.x("o") == 7 and ext.p("n") == 0
    assert all(c.tag == "both" and c.provenance == "extension" for c in ext.constraints)
    assert len(ext.constraints) == 2
    back = reduce_phase_space(ext, ["n", "o"])
    assert back.labels == ("a",) and len(back.constraints) == 0
    with pytest.raises(ValueError):
        extend_phase_space(state, ["a"])


def test_tetrahedron_move_adds_no_constraints():
    move = pachner_move("2-2-3d", vertex_labels(5), 0)
    assert move.kind == "IV"
    post = transport_constraints(move, initial_state(vertex_labels(5)).constraints)
    assert len(post) == 0


def test_move_spec_validation():
    S = build_action(Slice(0), Slice(1, ("a", "n")))
    with pytest.raises(ValueError):
        MoveSpec("I", RoleMap({"a": "e"}), S)
    with pytest.raises(ValueError):
        MoveSpec("II", RoleMap({"a": "e", "n": "n"}), S)
    with pytest.raises(ValueError):
        MoveSpec("V", RoleMap({"a": "e", "n": "n"}), S)
    with pytest.raises(ValueError):
        pachner_move("1-2", ("1",), 0)
    with pytest.raises(ValueError):
        pachner_move("flip", ("1", "2", "3"), 0)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_local_symplectic_property(seed):
    suite_local_symplectic(np.random.default_rng(seed))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_extended_update_property(seed):
    suite_extended_update(np.random.default_rng(seed))


kinds = st.sampled_from(["1-2", "2-1", "square", "2-2-3d"])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(kinds, st.integers(0, 50)), min_size=1, max_size=8))
def test_post_constraint_count_never_decreases(raw):
    surface = vertex_labels(5)
    moves, cur, taken = [], surface, set(surface)
    for kind, pos in raw:
        if kind == "2-1" and len(cur) < 5:
            kind = "1-2"
        pos %= len(cur)
        spec = pachner_move(kind, cur, pos, taken=taken)
        taken |= set(spec.surface_after)
        cur = spec.surface_after
        moves.append((kind, pos))
    run = run_pachner_sequence(surface, moves)
    counts = run.counts
    assert all(a <= b for a, b in zip(counts, counts[1:]))
