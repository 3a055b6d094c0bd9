import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aeroarm.trajectory import Trajectory, fmt


def test_from_points_and_accessors():
    tr = Trajectory.from_points([[0, 0], [1, 0], [2, 1]], 0.5, t0=1.0)
    assert len(tr) == 3
    assert np.allclose(tr.times, [1.0, 1.5, 2.0])
    assert np.allclose(tr.points, [[0, 0], [1, 0], [2, 1]])


def test_validation():
    with pytest.raises(ValueError):
        Trajectory.from_points([[0, 0]], 0.1)
    with pytest.raises(ValueError):
        Trajectory.from_points([[0, 0], [np.nan, 1]], 0.1)
    with pytest.raises(ValueError):
        Trajectory(np.array([[0, 0, 0], [0.1, 1, 1], [0.3, 2, 2]]), 0.1)
    with pytest.raises(ValueError):
        Trajectory(np.zeros((3, 2)), 0.1)


def test_samples_are_read_only():
    tr = Trajectory.from_points([[0, 0], [1, 1]], 0.1)
    with pytest.raises(ValueError):
        tr.samples[0, 1] = 5


def test_accelerations_of_parabola():
    t = np.arange(10) * 0.1
    tr = Trajectory.from_points(np.column_stack([0.5 * 3.0 * t**2, -t]), 0.1)
    acc = tr.accelerations()
    assert np.allclose(acc[:-1], [3.0, 0.0])
    assert np.allclose(acc[-1], 0.0)


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(arrays(float, (5, 2), elements=finite), st.floats(1e-3, 10))
def test_csv_round_trip_at_nine_digits(tmp_path_factory, pts, dt):
    path = tmp_path_factory.mktemp("tr") / "t.csv"
    tr = Trajectory.from_points(pts, dt)
    tr.to_csv(path)
    back = Trajectory.from_csv(path)
    expect = np.vectorize(lambda v: float(fmt(v)))(tr.samples)
    assert np.array_equal(back.samples, expect)
    assert path.read_text().splitlines()[0] == "t,x,y"


def test_fmt_nine_significant_digits():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(2.0) == "2"
