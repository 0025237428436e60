import struct

import numpy as np
import pytest

from phvae import idx
from phvae.data import DatasetSpec, build_dataset
from phvae.errors import DownscaleError, IdxFormatError, IdxTruncatedError


def image_file(tmp_path, payload, dims, magic=0x00000803):
    buf = struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload)
    p = tmp_path / "images.idx"
    p.write_bytes(buf)
    return p


def test_hand_built_file(tmp_path):
    p = image_file(tmp_path, [0, 255, 255, 0], [1, 2, 2])
    np.testing.assert_array_equal(idx.load_idx(p), [[0.0, 1.0, 1.0, 0.0]])


def test_label_magic_rejected_for_images(tmp_path):
    p = image_file(tmp_path, [1, 2, 3], [3], magic=0x00000801)
    with pytest.raises(IdxFormatError):
        idx.load_idx(p)
    np.testing.assert_array_equal(idx.read_labels(p), [1, 2, 3])


def test_garbage_magic(tmp_path):
    p = image_file(tmp_path, [0] * 4, [1, 2, 2], magic=0x12345678)
    with pytest.raises(IdxFormatError):
        idx.load_idx(p)


def test_truncated_payload(tmp_path):
    p = image_file(tmp_path, [0, 255, 3], [1, 2, 2])
    with pytest.raises(IdxTruncatedError):
        idx.load_idx(p)


def test_truncated_header():
    with pytest.raises(IdxTruncatedError):
        idx.parse_idx(b"\x00\x00\x08\x03\x00\x00")


def test_errors_are_distinct():
    assert not issubclass(IdxFormatError, IdxTruncatedError)
    assert not issubclass(IdxTruncatedError, IdxFormatError)
    assert not issubclass(DownscaleError, (IdxFormatError, IdxTruncatedError))


def test_downscale_constant(tmp_path):
    p = image_file(tmp_path, [128] * 16, [1, 4, 4])
    np.testing.assert_allclose(idx.load_idx(p, size=2), [[128 / 255] * 4])


def test_downscale_block_average(tmp_path):
    p = image_file(tmp_path, list(range(16)), [1, 4, 4])
    got = idx.load_idx(p, size=2)[0] * 255
    np.testing.assert_allclose(got, [(0 + 1 + 4 + 5) / 4, (2 + 3 + 6 + 7) / 4,
                                     (8 + 9 + 12 + 13) / 4, (10 + 11 + 14 + 15) / 4])


def test_downscale_must_divide(tmp_path):
    p = image_file(tmp_path, [0] * 16, [1, 4, 4])
    with pytest.raises(DownscaleError):
        idx.load_idx(p, size=3)


def test_round_trip_byte_stable(tmp_path):
    raw = np.random.default_rng(0).integers(0, 256, size=(5, 8, 8)).astype(np.uint8)
    idx.write_idx(tmp_path / "a.idx", raw)
    first = (tmp_path / "a.idx").read_bytes()
    pixels = idx.load_idx(tmp_path / "a.idx")
    idx.write_idx(tmp_path / "b.idx", idx.to_bytes_pixels(pixels, 8, 8))
    assert (tmp_path / "b.idx").read_bytes() == first
    np.testing.assert_array_equal(idx.load_idx(tmp_path / "b.idx"), pixels)


def test_dataset_from_idx(tmp_path):
    raw = np.random.default_rng(1).integers(0, 256, size=(12, 32, 32)).astype(np.uint8)
    idx.write_idx(tmp_path / "imgs.idx", raw)
    ds = build_dataset(DatasetSpec("idx_file", path=str(tmp_path / "imgs.idx")))
    assert ds.x.shape == (10, 256)
    assert ds.x.min() >= 0.0 and ds.x.max() <= 1.0
