from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disevo import kernel as K
from disevo.action import Slice, build_action
from disevo.evolution import (
    EvolutionMap,
    Inconsistent,
    MissingParameter,
    Schedule,
    backward_evolve,
    effective_action,
    eliminate_bulk,
    forward_evolve,
    match_and_propagate,
)
from disevo.legendre import MoveRelation, OffConstraintSurface, PhasePoint, post_constraints, pre_constraints
from disevo.models import SlabSpec, cdt_slab_action
from disevo.verify import random_schedule, suite_commuting, suite_counting, suite_presymplectic

F = Fraction
A1 = [[1, 1, 0], [0, 1, 1], [1, 0, 1]]
STRIP = [[1, 0, 0], [2, 1, 1]]
REV = [[1, 2], [0, 1], [0, 1]]


def schedule(*adjacencies):
    return Schedule([
        cdt_slab_action(SlabSpec(len(a), len(a[0]), a), step=n) for n, a in enumerate(adjacencies)
    ])


def _counts(report):
    return [(len(s.pre), len(s.post)) for s in report.slices]


def test_zero_data_evolves_to_zero():
    S = cdt_slab_action(SlabSpec(3, 3, A1))
    pt = forward_evolve(S, PhasePoint(S.prev, [0, 0, 0], [0, 0, 0]))
    assert all(v == 0 for v in pt.x) and all(v == 0 for v in pt.p)


def test_constant_continuation_on_two_to_three_slab():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    emap = EvolutionMap.from_action(S)
    [(label, direction)] = emap.free_directions
    assert label == "lambda1" and list(direction) == [0, 1, -1]
    pt = forward_evolve(S, PhasePoint(S.prev, [1, 1], [0, 0]), [0])
    assert list(pt.x) == [1, 1, 1] and list(pt.p) == [0, 0, 0]
    assert all(r == 0 for r in post_constraints(S).residuals(pt.x, pt.p))


def test_lambda_shifts_along_the_null_direction():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    a = forward_evolve(S, PhasePoint(S.prev, [1, 1], [0, 0]), [0])
    b = forward_evolve(S, PhasePoint(S.prev, [1, 1], [0, 0]), [2])
    assert list(b.x - a.x) == [0, 2, -2]


def test_brute_force_reevolution_keeps_phi2_equal_phi3():
    # pick a next configuration with equal entries, read off pre-momenta, re-evolve
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    xp, xn = K.as_vector([1, 2]), K.as_vector([3, 5, 5])
    p = -(S.A @ xp + S.B @ xn + S.a)
    pt = forward_evolve(S, PhasePoint(S.prev, xp, p), [0])
    assert pt.x[1] == pt.x[2]
    assert list(pt.x) == list(xn)


def test_regular_slab_accepts_no_parameters():
    S = cdt_slab_action(SlabSpec(3, 3, A1))
    assert EvolutionMap.from_action(S).free_directions == []
    with pytest.raises(MissingParameter):
        forward_evolve(S, PhasePoint(S.prev, [1, 0, 0], [0, 0, 0]), [1])


def test_strict_mode_requires_parameters():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    with pytest.raises(MissingParameter) as err:
        forward_evolve(S, PhasePoint(S.prev, [1, 1], [0, 0]), strict=True)
    assert err.value.expected == 1


def test_off_surface_data_reports_residual():
    S = cdt_slab_action(SlabSpec(3, 2, REV))
    with pytest.raises(OffConstraintSurface) as err:
        forward_evolve(S, PhasePoint(S.prev, [0, 0, 0], [0, 1, 0]))
    assert [r for r in err.value.residuals if r != 0] == [1]


def test_backward_evolution_inverts_forward():
    S = cdt_slab_action(SlabSpec(3, 3, A1))
    start = PhasePoint(S.prev, [1, -2, 3], [F(1, 2), 0, 4])
    there = forward_evolve(S, start)
    back = backward_evolve(S, there)
    assert list(back.x) == list(start.x) and list(back.p) == list(start.p)


def test_example_a_effective_pre_constraint():
    sched = schedule(A1, REV)
    E = sched.effective(0, 2)
    pre = pre_constraints(E)
    assert len(pre) == 1
    c = pre[0]
    # oracle: elimination of the bulk gives p1 - p3 + 10/3 (x1 - x3) = 0
    assert list(c.gp) == [1, 0, -1]
    assert list(c.gx) == [F(10, 3), 0, F(-10, 3)]
    assert c.c0 == 0
    assert len(post_constraints(E)) == 0


def test_example_b_effective_two_form_is_invertible():
    E = schedule(STRIP, REV).effective(0, 2)
    assert E.aux.dim == 0
    assert K.matrices_equal(E.B, K.as_matrix([[F(-3, 22), F(-4, 11)], [F(-4, 11), F(-18, 11)]]))
    assert K.rank(E.B) == 2
    assert len(pre_constraints(E)) == 0 and len(post_constraints(E)) == 0


def test_example_c_effective_action_has_no_multipliers():
    E = schedule(REV, STRIP).effective(0, 2)
    assert E.meta["kappa_count"] == 0
    assert len(pre_constraints(E)) == 1 and len(post_constraints(E)) == 1


def test_multiplier_for_boundary_data_constraint():
    # the bulk variable enters only through x_b x_c, so stationarity forces x_c = 0
    E = effective_action(
        build_action(Slice(0, ("a",)), Slice(1, ("b",)), A=[[1]], B=[[0]], C=[[0]]),
        build_action(Slice(1, ("b",)), Slice(2, ("c",)), A=[[0]], B=[[1]], C=[[0]]),
    )
    assert E.meta["kappa_count"] == 1
    assert E.aux.labels == ("kappa1@2",)
    [post] = post_constraints(E)
    assert list(post.gx) == [1] and list(post.gp) == [0] and post.c0 == 0
    [pre] = pre_constraints(E)
    assert list(pre.gp) == [1] and list(pre.gx) == [1]


def test_eliminate_bulk_without_aux_is_identity():
    S = cdt_slab_action(SlabSpec(2, 3, STRIP))
    assert eliminate_bulk(S) is S


def test_example_reports():
    a = match_and_propagate(schedule(A1, REV))
    assert _counts(a) == [(1, 0), (1, 0), (0, 0)]
    assert a[0].pre[0].provenance == "secondary"
    assert a[1].pre[0].provenance == "primary"
    b = match_and_propagate(schedule(STRIP, REV))
    assert _counts(b) == [(0, 0), (1, 1), (0, 0)]
    assert b[1].status == "fixes-parameters" and "c" in b[1].cases
    c = match_and_propagate(schedule(REV, STRIP))
    assert _counts(c) == [(1, 0), (0, 0), (0, 1)]


def test_secondary_constraint_matches_effective_pre_constraint():
    sched = schedule(A1, REV)
    report = match_and_propagate(sched)
    assert report[0].pre.same_span(pre_constraints(sched.effective(0, 2)).with_tag("pre"))


def test_inconsistent_schedule_names_the_slice():
    S1 = build_action(Slice(0, ()), Slice(1, ("v",)), c=[1])
    S2 = build_action(Slice(1, ("v",)), Slice(2, ()), a=[1])
    with pytest.raises(Inconsistent) as err:
        match_and_propagate(Schedule([S1, S2]))
    assert err.value.slice_index == 1
    assert err.value.report is not None


def test_schedule_rejects_mismatched_slices():
    with pytest.raises(ValueError):
        Schedule([cdt_slab_action(SlabSpec(2, 3, STRIP)), cdt_slab_action(SlabSpec(2, 3, STRIP), step=1)])
    with pytest.raises(ValueError):
        Schedule([])


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_presymplectic_property(seed):
    suite_presymplectic(np.random.default_rng(seed))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_commuting_diagram_property(seed):
    suite_commuting(np.random.default_rng(seed))


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_counting_and_monotone_property(seed):
    suite_counting(np.random.default_rng(seed))


def _boundary_relation(E):
    rel = MoveRelation.from_action(E)
    T = np.vstack([rel.Xs, rel.Ps, rel.Xt, rel.Pt])
    t = np.concatenate([rel.xs, rel.ps, rel.xt, rel.pt])
    G, c = K.affine_image_equations(T, t, rel.D, rel.d)
    return K.canonical_rows(np.hstack([G, c.reshape(-1, 1)])) if G.shape[0] else G


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_ordering_independence(seed):
    sched = random_schedule(np.random.default_rng(seed), 3, q_max=3, offsets=True)
    S1, S2, S3 = sched.moves
    left = effective_action(effective_action(S1, S2), S3)
    right = effective_action(S1, effective_action(S2, S3))
    try:
        rel_left = _boundary_relation(left)
    except K.Infeasible:
        # no stationary point at all: the other ordering must agree
        with pytest.raises(K.Infeasible):
            _boundary_relation(right)
        return
    assert K.matrices_equal(rel_left, _boundary_relation(right))
    assert pre_constraints(left).same_span(pre_constraints(right))
    assert post_constraints(left).same_span(post_constraints(right))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_schur_complement_two_form(seed):
    rng = np.random.default_rng(seed)
    sched = random_schedule(rng, 2, q_max=3, offsets=True)
    S1, S2 = sched.moves
    H = S1.C + S2.A
    if K.rank(H) < H.shape[0]:
        return
    E = effective_action(S1, S2)
    Hinv = np.vstack([K.affine_solve(H, e).particular for e in K.eye(H.shape[0])]).T
    assert K.matrices_equal(E.B, -(S1.B @ Hinv @ S2.B))
