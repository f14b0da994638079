import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from safesocp.constraints import worstcase_soccs
from safesocp.core import AffineDynamics, CbfSpec, SystemDims, linear_dynamics
from safesocp.estimation import (AcquisitionPattern, Dataset, EmptyDataset, LipschitzConstants,
                                 Oracle, Workspace, WorkspaceError, acquire_on_infeasibility,
                                 build_worstcase_model, nn_estimate, uniform_box_dataset)

LIP = LipschitzConstants(3.0, 0.5)
pt = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2).map(np.array)


def dataset(oracle, pts):
    ds = Dataset(2, 2)
    ds.measure(oracle, [np.asarray(p, dtype=float) for p in pts])
    return ds


@pytest.fixture
def oracle(planar):
    return Oracle(planar)


def test_query_at_datapoint_is_exact(oracle):
    ds = dataset(oracle, [(1.0, 2.0), (3.0, -1.0)])
    est = nn_estimate(ds, LIP, np.array([3.0, -1.0]))
    assert est.e_f == 0.0 and est.e_g == 0.0
    np.testing.assert_array_equal(est.fhat, [3.0, -1.0])


def test_single_point_example(oracle):
    ds = dataset(oracle, [(2.0, 6.0)])
    est = nn_estimate(ds, LIP, np.array([2.5, 6.0]))
    np.testing.assert_array_equal(est.fhat, [2.0, 6.0])
    assert est.e_f == pytest.approx(1.5) and est.e_g == pytest.approx(0.25)


def test_tie_goes_to_earliest(oracle):
    ds = dataset(oracle, [(1.0, 0.0), (-1.0, 0.0)])
    assert nn_estimate(ds, LIP, np.zeros(2)).index == 0
    ds2 = dataset(oracle, [(-1.0, 0.0), (1.0, 0.0)])
    np.testing.assert_array_equal(nn_estimate(ds2, LIP, np.zeros(2)).fhat, [-1.0, 0.0])


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        nn_estimate(Dataset(2, 2), LIP, np.zeros(2))


def test_lipschitz_validation():
    with pytest.raises(ValueError):
        LipschitzConstants(0.0, 1.0)


def test_duplicates_ignored(oracle):
    ds = dataset(oracle, [(1.0, 1.0)])
    assert ds.measure(oracle, [np.array([1.0, 1.0])]) == 0
    assert len(ds) == 1


def test_acquisition_pattern_and_zero_error(oracle, barrier, clf):
    ds = dataset(oracle, [(4.0, 8.0)])
    model = build_worstcase_model(ds, LIP, barrier)
    xbar = np.array([1.0, 1.0])
    acquire_on_infeasibility(oracle, ds, xbar, AcquisitionPattern(0.1))
    assert len(ds) == 6
    p = model.at(xbar)
    assert p.e_f == 0.0 and p.e_g == 0.0 and p.e_h == 0.0 and p.e_gradh == 0.0
    v, _ = worstcase_soccs(model, clf, CbfSpec(), xbar)
    assert not np.any(v.Q)
    # a repeat acquisition adds nothing
    acquire_on_infeasibility(oracle, ds, xbar, AcquisitionPattern(0.1))
    assert len(ds) == 6


def test_workspace_guard(oracle):
    ws = Workspace(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    ds = Dataset(2, 2)
    with pytest.raises(WorkspaceError):
        acquire_on_infeasibility(oracle, ds, np.array([2.0, 0.0]), workspace=ws)
    acquire_on_infeasibility(oracle, ds, np.array([1.0, 0.0]), AcquisitionPattern(0.1), ws)
    assert len(ds) == 4  # the +x neighbour lies outside


def test_csv_round_trip(oracle, tmp_path):
    ds = dataset(oracle, [(0.1, 0.2), (np.pi, -np.e)])
    ds.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv", 2, 2)
    np.testing.assert_array_equal(back.points, ds.points)
    np.testing.assert_array_equal(back.g_values, ds.g_values)
    with pytest.raises(ValueError):
        Dataset.from_csv(tmp_path / "d.csv", 3, 1)


def test_uniform_box_dataset(oracle):
    ds = uniform_box_dataset(oracle, (2.0, 6.0), 0.5, 25, np.random.default_rng(0))
    assert len(ds) == 25
    assert np.all(np.abs(ds.points - [2.0, 6.0]) <= 0.5)


@given(st.lists(pt, min_size=1, max_size=20), pt)
def test_certified_bounds(pts, x):
    # a nonlinear truth with Lipschitz constants within (3, 0.5)
    def f(y):
        return np.array([np.sin(y[0]) + y[1], 2.0 * np.tanh(y[1])])

    def g(y):
        return np.eye(2) + 0.25 * np.array([[np.cos(y[0]), 0.0], [0.0, np.sin(y[1])]])

    truth = Oracle(AffineDynamics(SystemDims(2, 2), f, g))
    ds = dataset(truth, pts)
    est = nn_estimate(ds, LIP, x)
    assert np.linalg.norm(f(x) - est.fhat) <= est.e_f + 1e-12
    assert np.linalg.norm(g(x) - est.ghat, 2) <= est.e_g + 1e-12


@given(st.lists(pt, min_size=1, max_size=15), pt, pt)
def test_error_shrinks_with_data(planar, pts, extra, x):
    o = Oracle(planar)
    ds = dataset(o, pts)
    before = nn_estimate(ds, LIP, x)
    ds.measure(o, [extra])
    after = nn_estimate(ds, LIP, x)
    assert after.e_f <= before.e_f and after.e_g <= before.e_g


@given(st.lists(pt, min_size=1, max_size=15), pt)
def test_deterministic_estimates(planar, pts, x):
    o = Oracle(planar)
    a, b = nn_estimate(dataset(o, pts), LIP, x), nn_estimate(dataset(o, pts), LIP, x)
    assert a.index == b.index and a.e_f == b.e_f


def test_oracle_repeatable():
    o = Oracle(linear_dynamics(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(2)))
    y = np.array([0.3, 0.7])
    f1, g1 = o.query(y)
    f2, g2 = o.query(y)
    np.testing.assert_array_equal(f1, f2)
    np.testing.assert_array_equal(g1, g2)
