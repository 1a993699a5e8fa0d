import numpy as np
import pytest

from llgs.errors import DataError
from llgs.geometry import Camera, Image, PointCloud, load_cameras, project_point, save_camera


def identity_camera(f=1.0, c=0.0, size=2):
    return Camera(f, f, c, c, np.eye(3), np.zeros(3), size, size)


def test_project_point_identity():
    result = project_point(identity_camera(), (0.0, 0.0, 1.0))
    assert result.pixel == (0.0, 0.0)
    assert result.depth == 1.0
    assert result.in_front


def test_project_point_pinhole_formula():
    cam = identity_camera(f=100.0, c=50.0, size=100)
    result = project_point(cam, (0.1, 0.0, 1.0))
    assert result.pixel == pytest.approx((60.0, 50.0))
    assert result.depth == 1.0


def test_point_behind_camera_is_flagged():
    result = project_point(identity_camera(), (0.0, 0.0, -1.0))
    assert not result.in_front


def test_projection_commutes_with_rigid_motion():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    rotation = q * np.sign(np.linalg.det(q))
    translation = np.array([0.2, -0.1, 3.0])
    posed = Camera(30.0, 30.0, 16.0, 16.0, rotation, translation, 32, 32)
    plain = Camera(30.0, 30.0, 16.0, 16.0, np.eye(3), np.zeros(3), 32, 32)
    x = np.array([0.3, 0.2, -0.4])
    a = project_point(posed, x)
    b = project_point(plain, rotation @ x + translation)
    assert a.pixel == pytest.approx(b.pixel, abs=1e-12)
    assert a.depth == pytest.approx(b.depth, abs=1e-12)


def test_camera_validation():
    with pytest.raises(DataError):
        Camera(-1.0, 1.0, 0.0, 0.0, np.eye(3), np.zeros(3), 4, 4)
    with pytest.raises(DataError):
        Camera(1.0, 1.0, 5.0, 0.0, np.eye(3), np.zeros(3), 4, 4)
    with pytest.raises(DataError):
        Camera(1.0, 1.0, 0.0, 0.0, np.diag([1.0, 1.0, -1.0]), np.zeros(3), 4, 4)


def test_look_at_points_forward():
    cam = Camera.look_at((0.0, 0.0, -4.0), (0.0, 0.0, 0.0), focal=10.0, width=8, height=8)
    result = project_point(cam, (0.0, 0.0, 0.0))
    assert result.depth == pytest.approx(4.0)
    assert result.pixel == pytest.approx((4.0, 4.0))
    np.testing.assert_allclose(cam.center, [0.0, 0.0, -4.0], atol=1e-12)


def test_camera_json_round_trip(tmp_path):
    cam = Camera.look_at((1.0, -1.0, -3.0), (0.0, 0.0, 0.0), focal=12.0, width=16, height=12)
    path = save_camera(tmp_path / "cam.json", cam)
    (entry,) = load_cameras(path)
    restored = entry["camera"]
    np.testing.assert_array_equal(restored.rotation, cam.rotation)
    np.testing.assert_array_equal(restored.translation, cam.translation)
    assert restored.resolution == (16, 12)


def test_point_cloud_rejects_bad_colours():
    with pytest.raises(DataError):
        PointCloud(np.zeros((2, 3)), np.full((2, 3), 1.5))
    with pytest.raises(DataError):
        PointCloud(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(DataError):
        PointCloud(np.array([[0.0, np.nan, 0.0]]))


def test_image_shapes():
    assert Image(np.zeros((4, 5))).shape == (4, 5, 1)
    with pytest.raises(DataError):
        Image(np.zeros((4, 5, 2)))
    with pytest.raises(DataError):
        Image(np.full((2, 2, 3), np.inf))
