import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsadm.geometry import (AngleGrid, DistanceMatrix, beam_directions,
                            dm_to_pointcloud, ply_to_pointcloud,
                            pointcloud_to_ply, steering_vector)

angles = st.floats(-np.pi, np.pi, allow_nan=False, allow_infinity=False)


@given(angles, st.floats(-np.pi / 2, np.pi / 2), st.integers(1, 8))
def test_steering_vector_unit_norm_and_magnitudes(az, el, n_t):
    v = steering_vector(az, el, n_t)
    assert v.shape == (n_t * n_t,)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.abs(v), 1.0 / n_t)


def test_steering_vector_reference_entry():
    az, el, n_t = 0.3, -0.7, 4
    v = steering_vector(az, el, n_t).reshape(n_t, n_t)
    m, n = 2, 3
    phase = np.pi * (m * np.sin(el) * np.cos(az) + n * np.sin(el) * np.sin(az))
    assert v[m, n] == pytest.approx(np.exp(1j * phase) / n_t, abs=1e-14)


def test_steering_vector_broadside_is_uniform():
    v = steering_vector(0.9, 0.0, 4)
    assert np.allclose(v, 1 / 4)


def test_beam_directions_unit_and_reference():
    grid = AngleGrid.uniform(8, 6, (np.deg2rad(-80), np.deg2rad(-40)))
    dirs = beam_directions(grid)
    assert dirs.shape == (8, 6, 3)
    assert np.allclose(np.linalg.norm(dirs, axis=-1), 1.0)
    az, el = grid.azimuths[3], grid.elevations[2]
    expected = [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
    assert np.allclose(dirs[3, 2], expected)
    assert np.all(dirs[..., 2] < 0)  # the default span points downward


def test_uniform_grid_excludes_azimuth_endpoint():
    grid = AngleGrid.uniform(64, 5, (-0.5, -0.2))
    assert grid.azimuths[0] == pytest.approx(-np.pi)
    assert grid.azimuths[-1] < np.pi
    step = grid.azimuths[1] - grid.azimuths[0]
    assert step == pytest.approx(2 * np.pi / 64)


def test_distance_matrix_enforces_sentinel():
    values = np.array([[3.0, 7.0], [1.0, 2.0]])
    valid = np.array([[True, False], [True, True]])
    dm = DistanceMatrix(values, valid)
    assert dm.values[0, 1] == 0.0
    with pytest.raises(ValueError):
        DistanceMatrix(np.array([[np.inf, 0.0]]), np.array([[True, True]]))
    with pytest.raises(ValueError):
        DistanceMatrix(np.array([[-1.0, 0.0]]), np.array([[True, True]]))


def test_pointcloud_back_projection_reference():
    grid = AngleGrid(np.array([0.0, np.pi / 2]), np.array([-np.pi / 2]))
    dm = DistanceMatrix(np.array([[10.0], [4.0]]), np.ones((2, 1), bool))
    pts = dm_to_pointcloud(dm, grid)
    assert pts.shape == (2, 3)
    assert np.allclose(pts[0], [0.0, 0.0, -10.0], atol=1e-9)
    assert np.allclose(pts[1], [0.0, 0.0, -4.0], atol=1e-9)


def test_pointcloud_skips_invalid_and_orders_row_major(rng):
    grid = AngleGrid.uniform(5, 4, (-1.2, -0.8))
    values = rng.uniform(1, 50, size=(5, 4))
    valid = rng.uniform(size=(5, 4)) < 0.5
    pts = dm_to_pointcloud(DistanceMatrix(values, valid), grid)
    assert pts.shape == (int(valid.sum()), 3)
    dirs = beam_directions(grid)
    expected = (values[..., None] * dirs)[valid]
    assert np.allclose(pts, expected)


def test_ply_round_trip(tmp_path, rng):
    pts = rng.uniform(-40, 40, size=(137, 3))
    path = tmp_path / "cloud.ply"
    pointcloud_to_ply(pts, path)
    text = path.read_text()
    assert text.startswith("ply\n")
    assert "element vertex 137" in text
    back = ply_to_pointcloud(path)
    assert back.shape == pts.shape
    assert np.allclose(back, pts, rtol=1e-7, atol=1e-6)


def test_ply_write_is_deterministic(tmp_path, rng):
    pts = rng.uniform(-1, 1, size=(9, 3))
    pointcloud_to_ply(pts, tmp_path / "a.ply")
    pointcloud_to_ply(pts, tmp_path / "b.ply")
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_angle_grid_validation():
    with pytest.raises(ValueError):
        AngleGrid(np.array([0.0]), np.array([2.0]))  # elevation beyond pi/2
    with pytest.raises(ValueError):
        AngleGrid(np.array([]), np.array([0.0]))
