import os
import struct

import numpy as np
import pytest

from glandtopo.fileio import (MalformedFileError, read_f32r, read_image_png,
                              read_labels_png, read_mask_png, write_f32r,
                              write_image_png, write_labels_png,
                              write_mask_png)


def test_mask_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    mask = rng.random((17, 23)) < 0.4
    p = tmp_path / "m.png"
    write_mask_png(p, mask)
    assert np.array_equal(read_mask_png(p), mask)


def test_labels_roundtrip_16bit(tmp_path):
    labels = np.arange(70000).reshape(350, 200) % 60000
    labels = labels.astype(np.int32)
    p = tmp_path / "l.png"
    write_labels_png(p, labels)
    got = read_labels_png(p)
    assert got.dtype == np.int32
    assert np.array_equal(got, labels)


def test_labels_out_of_range_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_labels_png(tmp_path / "l.png", np.full((2, 2), 70000))
    with pytest.raises(ValueError):
        write_labels_png(tmp_path / "l.png", np.full((2, 2), -1))


def test_image_roundtrip_quantized(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.random((12, 9))
    p = tmp_path / "i.png"
    write_image_png(p, img)
    got = read_image_png(p)
    assert np.abs(got - img).max() <= 0.5 / 255 + 1e-9


def test_f32r_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(2)
    vals = rng.standard_normal((33, 47)).astype(np.float32)
    p = tmp_path / "v.f32r"
    write_f32r(p, vals)
    got = read_f32r(p)
    assert got.dtype == np.float32
    assert np.array_equal(got, vals)


def test_f32r_header_layout(tmp_path):
    vals = np.zeros((3, 5), np.float32)
    p = tmp_path / "v.f32r"
    write_f32r(p, vals)
    with open(p, "rb") as fh:
        raw = fh.read()
    assert raw[:4] == b"F32R"
    assert struct.unpack("<II", raw[4:12]) == (5, 3)  # width, height
    assert len(raw) == 12 + 4 * 15


def test_f32r_bad_magic(tmp_path):
    p = tmp_path / "bad.f32r"
    with open(p, "wb") as fh:
        fh.write(b"NOPE" + b"\x00" * 16)
    with pytest.raises(MalformedFileError):
        read_f32r(p)


def test_f32r_truncated(tmp_path):
    vals = np.ones((4, 4), np.float32)
    p = tmp_path / "t.f32r"
    write_f32r(p, vals)
    with open(p, "rb") as fh:
        raw = fh.read()
    with open(p, "wb") as fh:
        fh.write(raw[:-5])
    with pytest.raises(MalformedFileError):
        read_f32r(p)


def test_f32r_rejects_non_2d(tmp_path):
    with pytest.raises(ValueError):
        write_f32r(tmp_path / "x.f32r", np.zeros(5, np.float32))


def test_png_garbage_is_malformed(tmp_path):
    p = tmp_path / "g.png"
    with open(p, "wb") as fh:
        fh.write(b"this is not a png at all")
    with pytest.raises(MalformedFileError):
        read_labels_png(p)


def test_missing_file_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_mask_png(tmp_path / "absent.png")


def test_writes_are_deterministic(tmp_path):
    labels = (np.arange(64).reshape(8, 8) % 5).astype(np.int32)
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    write_labels_png(a, labels)
    write_labels_png(b, labels)
    assert a.read_bytes() == b.read_bytes()


def test_no_temp_files_left_behind(tmp_path):
    write_mask_png(tmp_path / "m.png", np.ones((4, 4), bool))
    assert sorted(os.listdir(tmp_path)) == ["m.png"]
