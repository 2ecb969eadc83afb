"""Tests for PointCloud validation and the DRF1 / XYZ file formats."""

import struct

import numpy as np
import pytest

from drfer.errors import DatasetLoadError, InvalidArgumentError
from drfer.geometry import PointCloud, read_cloud, read_drf, read_xyz, write_drf, write_xyz


@pytest.mark.parametrize(
    "points",
    [np.zeros((0, 3)), np.zeros((4, 2)), [[0.0, np.nan, 1.0]], [[np.inf, 0.0, 0.0]]],
)
def test_invalid_point_arrays(points):
    with pytest.raises(InvalidArgumentError):
        PointCloud(points)


def test_points_are_read_only():
    cloud = PointCloud([[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 5.0


def test_drf_layout(tmp_path):
    cloud = PointCloud([[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]], canonical=True)
    path = write_drf(cloud, tmp_path / "a.drf")
    raw = path.read_bytes()
    magic, count, flag = struct.unpack_from("<4sIB", raw)
    assert (magic, count, flag) == (b"DRF1", 2, 1)
    assert len(raw) == 9 + 2 * 12
    assert read_drf(path) == cloud


def test_drf_stores_float32(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(10, 3)))
    back = read_drf(write_drf(cloud, tmp_path / "b.drf"))
    np.testing.assert_array_equal(back.points, cloud.points.astype(np.float32))
    assert not back.canonical


def test_bad_magic_names_the_file(tmp_path):
    path = tmp_path / "bad.drf"
    path.write_bytes(b"XXXX" + b"\x00" * 5)
    with pytest.raises(DatasetLoadError, match="bad.drf"):
        read_drf(path)


def test_truncated_body(tmp_path):
    path = write_drf(PointCloud(np.ones((3, 3))), tmp_path / "t.drf")
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DatasetLoadError, match="size mismatch"):
        read_drf(path)


def test_missing_file(tmp_path):
    with pytest.raises(DatasetLoadError):
        read_drf(tmp_path / "nope.drf")


def test_xyz_import(tmp_path):
    path = tmp_path / "scan.xyz"
    path.write_text("# scan\n0 0 0\n1 2 3\n", encoding="utf-8")
    cloud = read_xyz(path)
    np.testing.assert_array_equal(cloud.points, [[0, 0, 0], [1, 2, 3]])


def test_xyz_wrong_columns(tmp_path):
    path = tmp_path / "scan.xyz"
    path.write_text("0 0\n1 2\n", encoding="utf-8")
    with pytest.raises(DatasetLoadError, match="scan.xyz"):
        read_xyz(path)


def test_read_cloud_dispatches_on_suffix(tmp_path):
    cloud = PointCloud([[0.5, 0.25, 1.0], [2.0, 3.0, 4.0]])
    write_drf(cloud, tmp_path / "c.drf")
    write_xyz(cloud, tmp_path / "c.txt")
    assert read_cloud(tmp_path / "c.drf").allclose(cloud, atol=1e-6)
    assert read_cloud(tmp_path / "c.txt").allclose(cloud, atol=1e-6)
