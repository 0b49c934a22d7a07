import numpy as np
import pytest

from carmguide.ply import PlyError, read_ply, write_ply


def test_round_trip_float32_exact(tmp_path, rng):
    pts = rng.uniform(-2000, 2000, (137, 3))
    path = tmp_path / "cloud.ply"
    write_ply(path, pts)
    back = read_ply(path)
    np.testing.assert_allclose(back, pts, atol=2e-3)  # float32 quantization
    np.testing.assert_array_equal(back, pts.astype(np.float32).astype(np.float64))


def test_rewrite_is_byte_identical(tmp_path, rng):
    pts = rng.uniform(-2000, 2000, (64, 3))
    a, b = tmp_path / "a.ply", tmp_path / "b.ply"
    write_ply(a, pts)
    write_ply(b, read_ply(a))
    assert a.read_bytes() == b.read_bytes()


def test_empty_cloud(tmp_path):
    path = tmp_path / "empty.ply"
    write_ply(path, np.empty((0, 3)))
    assert read_ply(path).shape == (0, 3)


def test_truncated_body(tmp_path, rng):
    path = tmp_path / "trunc.ply"
    write_ply(path, rng.uniform(size=(10, 3)))
    blob = path.read_bytes()
    path.write_bytes(blob[:-7])
    with pytest.raises(PlyError, match="truncated"):
        read_ply(path)


def test_trailing_garbage(tmp_path, rng):
    path = tmp_path / "extra.ply"
    write_ply(path, rng.uniform(size=(3, 3)))
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(PlyError, match="trailing"):
        read_ply(path)


def test_not_a_ply(tmp_path):
    path = tmp_path / "nope.ply"
    path.write_bytes(b"hello world")
    with pytest.raises(PlyError, match="not a PLY"):
        read_ply(path)


def test_wrong_properties(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_bytes(
        b"ply\nformat binary_little_endian 1.0\nelement vertex 0\n"
        b"property float x\nproperty float y\nend_header\n"
    )
    with pytest.raises(PlyError, match="x/y/z"):
        read_ply(path)
