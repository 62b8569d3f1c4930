import numpy as np
import pytest

from kinoguide.io import load_kgt, load_pgm16, save_gif, save_kgt, save_png


def test_kgt_roundtrip_f64(tmp_path):
    arr = np.random.default_rng(0).standard_normal((3, 4, 5))
    path = tmp_path / "a.kgt"
    save_kgt(path, arr)
    back = load_kgt(path)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, arr)


def test_kgt_roundtrip_f32(tmp_path):
    arr = np.random.default_rng(1).standard_normal((2, 7)).astype(np.float32)
    path = tmp_path / "b.kgt"
    save_kgt(path, arr)
    back = load_kgt(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, arr)


def test_kgt_header_layout(tmp_path):
    arr = np.zeros((2, 3), dtype=np.float32)
    path = tmp_path / "c.kgt"
    save_kgt(path, arr)
    raw = path.read_bytes()
    assert raw[:4] == b"KGT1"
    assert raw[4] == 0  # f32 dtype code
    assert raw[5] == 2  # rank
    assert raw[6:14] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert len(raw) == 14 + 6 * 4


def test_kgt_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.kgt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        load_kgt(path)


def test_kgt_rejects_int_dtype(tmp_path):
    with pytest.raises(ValueError, match="float"):
        save_kgt(tmp_path / "d.kgt", np.arange(4))


def test_pgm16_big_endian(tmp_path):
    path = tmp_path / "depth.pgm"
    values = np.array([[1, 2], [300, 65535]], dtype=">u2")
    path.write_bytes(b"P5\n# a comment\n2 2\n65535\n" + values.tobytes())
    depth = load_pgm16(path)
    np.testing.assert_array_equal(depth, [[1, 2], [300, 65535]])


def test_pgm16_8bit(tmp_path):
    path = tmp_path / "depth8.pgm"
    path.write_bytes(b"P5\n2 1\n255\n" + bytes([7, 250]))
    depth = load_pgm16(path)
    np.testing.assert_array_equal(depth, [[7, 250]])


def test_png_and_gif(tmp_path):
    video = np.random.default_rng(2).uniform(size=(4, 1, 8, 8))
    save_png(tmp_path / "f.png", video[0])
    save_gif(tmp_path / "v.gif", video)
    from PIL import Image

    img = Image.open(tmp_path / "f.png")
    assert img.size == (8, 8)
    gif = Image.open(tmp_path / "v.gif")
    assert gif.n_frames == 4
