import struct

import numpy as np
import pytest

from cpsample_lab.common import ArchiveFormatException
from cpsample_lab.libtensor import Tensor
from cpsample_lab.util.archive import (
    decode_archive,
    encode_archive,
    read_archive,
    write_archive,
)


def sample_tensors():
    rng = np.random.default_rng(0)
    return {
        "train": Tensor(rng.normal(size=(5, 3))),
        "half": Tensor(rng.normal(size=(4,)), storage="f32"),
        "scalar": Tensor(np.array(2.5)),
    }


def test_round_trip_is_bitwise(tmp_path):
    tensors = sample_tensors()
    path = str(tmp_path / "x.cpta")
    write_archive(path, tensors, '{"stage": "test"}')
    archive = read_archive(path)
    assert archive.metadata == '{"stage": "test"}'
    assert archive["train"].data.tobytes() == tensors["train"].data.tobytes()
    assert archive["train"].shape == [5, 3]
    assert archive["scalar"].shape == []
    # f32 storage rounds once and then stays put
    expected = tensors["half"].data.astype(np.float32).astype(np.float64)
    assert archive["half"].storage == "f32"
    assert archive["half"].data.tobytes() == expected.tobytes()
    assert not (tmp_path / "x.cpta.tmp").exists()


def test_names_keep_their_order_and_prefixes_select():
    blob = encode_archive([("ema.w", np.ones(2)), ("w", np.zeros(2)), ("ema.b", np.ones(1))])
    archive = decode_archive(blob)
    assert list(archive.tensors) == ["ema.w", "w", "ema.b"]
    assert sorted(archive.with_prefix("ema.")) == ["ema.b", "ema.w"]
    assert "w" in archive and "b" not in archive


def test_empty_archive():
    blob = encode_archive({})
    assert blob[:4] == b"CPTA"
    assert struct.unpack("<II", blob[4:12]) == (1, 0)
    archive = decode_archive(blob)
    assert archive.tensors == {} and archive.metadata == ""


def test_zero_row_tensor():
    archive = decode_archive(encode_archive({"test": np.zeros((0, 2))}))
    assert archive["test"].shape == [0, 2]


def test_bad_magic():
    blob = encode_archive(sample_tensors())
    with pytest.raises(ArchiveFormatException, match="magic"):
        decode_archive(b"NOPE" + blob[4:])


def test_unsupported_version():
    blob = encode_archive(sample_tensors())
    with pytest.raises(ArchiveFormatException, match="version"):
        decode_archive(blob[:4] + struct.pack("<I", 2) + blob[8:])


@pytest.mark.parametrize("cut", [3, 10, 30, -1])
def test_truncated(cut):
    blob = encode_archive(sample_tensors(), "meta")
    with pytest.raises(ArchiveFormatException):
        decode_archive(blob[:cut])


def test_trailing_bytes():
    blob = encode_archive(sample_tensors())
    with pytest.raises(ArchiveFormatException, match="trailing"):
        decode_archive(blob + b"\x00")


def test_duplicate_names():
    with pytest.raises(ArchiveFormatException, match="duplicate"):
        encode_archive([("a", np.ones(1)), ("a", np.zeros(1))])
    # hand-built archive with the same name twice
    one = struct.pack("<I", 1) + b"a" + struct.pack("<BIQ", 2, 1, 1) + np.ones(1).tobytes()
    blob = b"CPTA" + struct.pack("<II", 1, 2) + one + one + struct.pack("<I", 0)
    with pytest.raises(ArchiveFormatException, match="duplicate"):
        decode_archive(blob)


def test_unknown_dtype_code():
    one = struct.pack("<I", 1) + b"a" + struct.pack("<BIQ", 9, 1, 1) + np.ones(1).tobytes()
    blob = b"CPTA" + struct.pack("<II", 1, 1) + one + struct.pack("<I", 0)
    with pytest.raises(ArchiveFormatException, match="dtype"):
        decode_archive(blob)
