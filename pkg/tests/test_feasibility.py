import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from safesocp.constraints import GpTerms, WorstCaseModel, exact_model
from safesocp.core import CbfSpec, ClassK
from safesocp.estimation import Dataset, LipschitzConstants, Oracle, build_worstcase_model
from safesocp.feasibility import (BoundB, GridSpec, OriginError, OutsideRegion, SlackInfeasible,
                                  check_gp_compat, check_worstcase_compat, compute_bound_B_analysis,
                                  feasibility_map, grid_K_alpha, gp_program, map_points,
                                  sigma_max, slack_program, synthetic_gp_instance,
                                  worstcase_program)
from safesocp.socp import brute_force_min_norm, phase1, solve_min_norm

X1 = np.array([1.0, 0.0])


def const_model(planar, barrier, e_f=0.0, e_g=0.0, e_h=0.0, e_gradh=0.0):
    return WorstCaseModel(planar.f, planar.g, barrier.h, barrier.gradh,
                          lambda x: e_f, lambda x: e_g, lambda x: e_h, lambda x: e_gradh)


def test_zero_error_margins(planar, barrier, clf, cbf):
    x = np.array([2.0, 6.0])
    mg = check_worstcase_compat(const_model(planar, barrier), clf, cbf, BoundB.constant(10.0), x)
    assert mg.clf_margin == pytest.approx(0.5 * clf.S(x))
    assert mg.cbf_margin == pytest.approx(0.5 * (0.5 + 0.5 * barrier.h(x)))
    assert mg.both and mg.confidence_label == 1.0


def test_clf_margin_examples(planar, barrier, clf):
    B = BoundB.constant(3.0)
    m = check_worstcase_compat(const_model(planar, barrier, e_f=0.05), clf, CbfSpec(eta_h=1.0), B, X1)
    assert m.clf_margin == pytest.approx(0.20)
    m = check_worstcase_compat(const_model(planar, barrier, e_f=0.3), clf, CbfSpec(eta_h=1.0), B, X1)
    assert m.clf_margin == pytest.approx(-0.05)
    assert m.holds == (False, False)


def test_origin_rejected(planar, barrier, clf, cbf):
    with pytest.raises(OriginError):
        check_worstcase_compat(const_model(planar, barrier), clf, cbf, BoundB.constant(1.0), np.zeros(2))


def test_infinite_bound_certifies_nothing(planar, barrier, clf, cbf):
    mg = check_worstcase_compat(const_model(planar, barrier), clf, cbf, lambda x: math.inf, X1)
    assert mg.clf_margin == -math.inf and not mg.both


def gp_terms(G_V, G_h, beta=1.0, delta=0.05):
    return GpTerms(lambda x: np.zeros(3), lambda x: G_V, lambda x: np.zeros(3), lambda x: G_h,
                   beta, delta)


def test_gp_margin_examples(clf):
    cbf = CbfSpec(eta_h=1.0)
    z = np.zeros((3, 3))
    m = check_gp_compat(gp_terms(z, z), clf, cbf, BoundB.constant(0.0), X1)
    assert m.clf_margin == pytest.approx(0.25) and m.cbf_margin == pytest.approx(0.5)
    assert m.confidence_label == pytest.approx(0.9)
    G = np.diag([0.2, 0.2, 0.2])
    assert check_gp_compat(gp_terms(G, z), clf, cbf, BoundB.constant(0.0), X1).clf_margin \
        == pytest.approx(0.05)
    m = check_gp_compat(gp_terms(G, z), clf, cbf, BoundB.constant(2.0), X1)
    assert m.clf_margin == pytest.approx(0.5 / (2 * math.sqrt(5)) - 0.2)
    assert not m.holds[0]


def test_gp_zeta_needs_lower_bound(clf, cbf):
    z = np.zeros((3, 3))
    with pytest.raises(ValueError):
        check_gp_compat(gp_terms(z, z), clf, cbf, BoundB.constant(1.0), X1)


@given(st.integers(0, 2**32 - 1))
def test_sigma_max_matches_spectral_norm(seed):
    G = np.random.default_rng(seed).normal(size=(3, 3))
    assert sigma_max(G) == pytest.approx(np.linalg.norm(G, 2), rel=1e-10)


def test_bound_analysis_at_far_point(planar, clf, cbf, barrier):
    grid = GridSpec((1.0, 5.0), (3.0, 7.0), (3, 3))
    B = compute_bound_B_analysis(planar, clf, cbf, barrier, grid, factor=1.5)
    x = np.array([2.0, 6.0])
    u = solve_min_norm(slack_program(planar, clf, cbf, barrier, x)).u_star
    assert B(x) == pytest.approx(1.5 * np.linalg.norm(u), rel=1e-9)
    oracle = brute_force_min_norm(slack_program(planar, clf, cbf, barrier, x), box_halfwidth=20.0)
    assert abs(np.linalg.norm(u) - np.linalg.norm(oracle)) <= 1e-2
    assert B.with_factor(1.0)(x) <= B(x)
    with pytest.raises(OutsideRegion):
        B(np.array([0.0, 0.0]))


def test_bound_zero_where_nothing_binds(planar, clf, cbf, barrier):
    # at the origin the CLF piece vanishes and u = 0 meets the CBF piece
    prog = slack_program(planar, clf, cbf, barrier, np.zeros(2))
    assert max(prog.residuals(np.zeros(2))) < 0
    grid = GridSpec((-0.5, -0.5), (0.5, 0.5), (3, 3))
    B = compute_bound_B_analysis(planar, clf, cbf, barrier, grid)
    assert B.grid_values[1, 1] == 0.0


def test_bound_infeasible_slack(planar, clf, cbf, barrier):
    # on the deadlock ray above the ball both slack inequalities conflict
    grid = GridSpec((0.0, 6.5), (0.0, 7.5), (1, 3))
    with pytest.raises(SlackInfeasible):
        compute_bound_B_analysis(planar, clf, cbf, barrier, grid)
    B = compute_bound_B_analysis(planar, clf, cbf, barrier, grid, on_infeasible="inf")
    assert np.all(np.isinf(B.grid_values))


def test_bound_validation():
    with pytest.raises(ValueError):
        BoundB.constant(-1.0)
    with pytest.raises(ValueError):
        BoundB("analysis", factor=0.5, axes=(np.zeros(2),), grid_values=np.zeros(2))


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 2), st.floats(0, 2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2).filter(lambda v: np.linalg.norm(v) > 0.1),
       st.floats(0, 10), st.floats(0, 1))
def test_margins_monotone(planar, barrier, clf, cbf, e_f, e_g, e_h, e_gh, xs, B, extra):
    x = np.array(xs)
    base = check_worstcase_compat(const_model(planar, barrier, e_f, e_g, e_h, e_gh), clf, cbf,
                                  BoundB.constant(B), x)
    for k in range(4):
        errs = [e_f, e_g, e_h, e_gh]
        errs[k] += extra
        more = check_worstcase_compat(const_model(planar, barrier, *errs), clf, cbf,
                                      BoundB.constant(B), x)
        assert more.clf_margin <= base.clf_margin + 1e-12
        assert more.cbf_margin <= base.cbf_margin + 1e-12
    bigger = check_worstcase_compat(const_model(planar, barrier, e_f, e_g, e_h, e_gh), clf, cbf,
                                    BoundB.constant(B + extra), x)
    assert bigger.clf_margin <= base.clf_margin + 1e-12
    assert bigger.cbf_margin <= base.cbf_margin + 1e-12


def test_grid_K_alpha():
    alpha = ClassK("user", fn=lambda s: s ** 3 + s, lipschitz=301.0, interval=(-10.0, 10.0))
    assert grid_K_alpha(alpha, [0.0, 1.0]) == pytest.approx(4.0, rel=0.05)
    assert grid_K_alpha(ClassK.linear(2.0), [0.0, 5.0]) == 2.0


def test_zero_error_map_all_pass(planar, barrier, clf, cbf):
    model = exact_model(planar.f, planar.g, barrier.h, barrier.gradh)
    pts = map_points(GridSpec((-5, -1), (5, 9), (12, 12)), barrier)
    fm = feasibility_map(lambda x: check_worstcase_compat(model, clf, cbf, BoundB.constant(50.0), x),
                         worstcase_program(model, clf, cbf), pts)
    assert all(r.margins.both for r in fm.rows)
    assert all(r.phase1_t < 0 for r in fm.rows)


def sparse_model(planar, barrier):
    ds = Dataset(2, 2)
    ds.measure(Oracle(planar), [np.array(p) for p in [(3.0, 7.0), (-3.0, 7.0), (3.0, 1.0)]])
    return build_worstcase_model(ds, LipschitzConstants(), barrier)


def test_sparse_map_sound_and_one_sided(planar, barrier, clf, cbf, tmp_path):
    model = sparse_model(planar, barrier)
    pts = map_points(GridSpec((-5, -1), (5, 9), (15, 15)), barrier, 1e-2)
    checker = lambda x: check_worstcase_compat(model, clf, cbf, BoundB.constant(2.0), x)
    fm = feasibility_map(checker, worstcase_program(model, clf, cbf), pts)
    assert fm.sound() == []
    assert fm.one_sided()
    # failures near the origin, where S is small
    near = [r for r in fm.rows if np.linalg.norm(r.x) < 1.5]
    assert near and not any(r.margins.both for r in near)
    fm.to_csv(tmp_path / "m.csv")
    head = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert head == "x0,x1,clf_margin,cbf_margin,holds_clf,holds_cbf,phase1_t"
    par = feasibility_map(checker, worstcase_program(model, clf, cbf), pts, workers=3)
    assert [r.phase1_t for r in par.rows] == [r.phase1_t for r in fm.rows]
    lazy = feasibility_map(checker, worstcase_program(model, clf, cbf), pts, only_where_holds=True)
    assert all(math.isnan(r.phase1_t) for r in lazy.rows if not r.margins.both)


def test_map_points_exclusions(barrier):
    pts = map_points(GridSpec((-5, -1), (5, 9), (11, 11)), barrier, 0.5)
    assert np.all(np.linalg.norm(pts, axis=1) > 0.5)
    assert all(barrier.h(p) >= 0 for p in pts)


@given(st.integers(0, 2**32 - 1))
def test_gp_surrogate_soundness(clf, cbf, seed):
    inst = synthetic_gp_instance(np.random.default_rng(seed), clf, cbf)
    mg = check_gp_compat(inst.terms, clf, cbf, BoundB.constant(inst.B), inst.x,
                         h_lb=lambda x: inst.point.hhat)
    assert mg.both
    t, _ = phase1(gp_program(inst), stop_below=-1e-9)
    assert t < -1e-9
