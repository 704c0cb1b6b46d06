import numpy as np
import pytest

from routeseg.data import NetpbmError, read_pgm, read_ppm, write_pgm, write_ppm
from routeseg.data.netpbm import decode_pgm, decode_ppm, encode_pgm, encode_ppm, parse_header
from routeseg.seeding import Seeder


def test_ppm_round_trip_is_byte_exact(tmp_path):
    image = Seeder(1).rng.uniform(size=(3, 5, 7))
    path = write_ppm(tmp_path / "a.ppm", image)
    raw = path.read_bytes()
    loaded = read_ppm(path)
    assert loaded.shape == (3, 5, 7)
    assert np.abs(loaded - image).max() <= 0.5 / 255 + 1e-12
    assert encode_ppm(loaded) == raw


def test_pgm_round_trip(tmp_path):
    mask = Seeder(2).rng.integers(0, 4, size=(6, 3))
    mask[0, 0] = 255
    path = write_pgm(tmp_path / "m.pgm", mask)
    assert np.array_equal(read_pgm(path), mask)
    assert encode_pgm(read_pgm(path)) == path.read_bytes()


def test_single_ignore_pixel():
    assert decode_pgm(b"P5\n1 1\n255\n\xff").tolist() == [[255]]


def test_manual_header():
    buffer = b"P6 4 4 255\n" + bytes(range(48))
    assert parse_header(buffer, b"P6") == (4, 4, 11)
    image = decode_ppm(buffer)
    assert image.shape == (3, 4, 4)
    assert image[:, 0, 0].tolist() == [0.0, 1 / 255, 2 / 255]


def test_header_comments():
    buffer = b"P5 # a mask\n2 # width\n 1\n# maxval next\n255\n\x01\x02"
    assert decode_pgm(buffer).tolist() == [[1, 2]]


def test_rounding_half_up():
    image = np.zeros((3, 1, 3))
    image[:, 0] = [0.0, 0.5, 1.0]
    raw = encode_ppm(image)
    assert list(raw[-9:]) == [0, 0, 0, 128, 128, 128, 255, 255, 255]


def test_bad_magic():
    with pytest.raises(NetpbmError, match="offset 0"):
        decode_ppm(b"P3 1 1 255\n\x00\x00\x00")
    with pytest.raises(NetpbmError, match="offset 0"):
        decode_pgm(b"P6 1 1 255\n\x00\x00\x00")


def test_bad_dimension_offset():
    with pytest.raises(NetpbmError, match="offset 3"):
        decode_pgm(b"P5 x 1 255\n\x00")
    with pytest.raises(NetpbmError, match="height"):
        decode_pgm(b"P5 1 0 255\n")


def test_unsupported_maxval():
    with pytest.raises(NetpbmError, match="maxval"):
        decode_pgm(b"P5 1 1 65535\n\x00\x00")


def test_truncated_raster():
    with pytest.raises(NetpbmError, match="offset"):
        decode_ppm(b"P6 2 2 255\n" + bytes(11))


def test_encode_rejects_bad_input():
    with pytest.raises(ValueError):
        encode_ppm(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        encode_pgm(np.full((2, 2), 256))
