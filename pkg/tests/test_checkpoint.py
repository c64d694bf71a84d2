"""Tensor container: byte layout, bit-exact roundtrip, corruption errors."""

import struct

import numpy as np
import pytest

from maskdenoise.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointError,
    dumps,
    load,
    loads,
    save,
)


def sample_tensors():
    rng = np.random.default_rng(0)
    return {
        "embed.w": rng.normal(size=(3, 8)).astype(np.float32),
        "blocks.0.attn.bias_table": rng.normal(size=(225, 4)).astype(np.float32),
        "opt.t": np.array([17.0], dtype=np.float32),
        "scalar": np.float32(2.5),
    }


class TestRoundtrip:
    def test_bit_exact(self):
        tensors = sample_tensors()
        back = loads(dumps(tensors))
        assert set(back) == set(tensors)
        for k, v in tensors.items():
            assert back[k].dtype == np.float32
            assert np.array_equal(back[k], np.asarray(v, dtype=np.float32))
            assert back[k].shape == np.asarray(v).shape

    def test_serialization_is_deterministic(self):
        tensors = sample_tensors()
        assert dumps(tensors) == dumps(tensors)

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "model.ckpt"
        tensors = sample_tensors()
        save(path, tensors)
        back = load(path)
        assert np.array_equal(back["embed.w"], tensors["embed.w"])

    def test_float64_input_stored_as_float32(self):
        back = loads(dumps({"w": np.array([1.0, 2.0], dtype=np.float64)}))
        assert back["w"].dtype == np.float32

    def test_empty_container(self):
        assert loads(dumps({})) == {}

    def test_zero_dim_tensor(self):
        back = loads(dumps({"s": np.float32(3.0)}))
        assert back["s"].shape == ()
        assert back["s"] == np.float32(3.0)

    def test_insertion_order_preserved(self):
        names = [f"t{i}" for i in range(10)]
        tensors = {n: np.zeros(1, dtype=np.float32) for n in names}
        assert list(loads(dumps(tensors))) == names


class TestByteLayout:
    def test_header(self):
        blob = dumps({})
        assert blob[:4] == MAGIC == b"MDNC"
        version, count = struct.unpack_from("<II", blob, 4)
        assert version == FORMAT_VERSION
        assert count == 0

    def test_single_tensor_layout(self):
        arr = np.arange(6, dtype=np.float32).reshape(2, 3)
        blob = dumps({"ab": arr})
        pos = 12
        (name_len,) = struct.unpack_from("<H", blob, pos)
        assert name_len == 2
        assert blob[pos + 2 : pos + 4] == b"ab"
        dtype_tag, ndim = struct.unpack_from("<BB", blob, pos + 4)
        assert dtype_tag == 0 and ndim == 2
        assert struct.unpack_from("<2I", blob, pos + 6) == (2, 3)
        data = np.frombuffer(blob[pos + 14 : pos + 14 + 24], dtype="<f4")
        assert np.array_equal(data.reshape(2, 3), arr)
        assert len(blob) == pos + 14 + 24

    def test_values_are_little_endian(self):
        blob = dumps({"x": np.array([1.0], dtype=np.float32)})
        assert blob[-4:] == struct.pack("<f", 1.0)


class TestErrors:
    def test_bad_magic(self):
        with pytest.raises(CheckpointError):
            loads(b"NOPE" + b"\x00" * 8)

    def test_truncated_data(self):
        blob = dumps({"w": np.ones(4, dtype=np.float32)})
        with pytest.raises(CheckpointError):
            loads(blob[:-3])

    def test_trailing_garbage(self):
        blob = dumps({"w": np.ones(2, dtype=np.float32)})
        with pytest.raises(CheckpointError):
            loads(blob + b"\x00")

    def test_unknown_version(self):
        blob = bytearray(dumps({}))
        struct.pack_into("<I", blob, 4, 99)
        with pytest.raises(CheckpointError):
            loads(bytes(blob))

    def test_unknown_dtype_tag(self):
        blob = bytearray(dumps({"w": np.ones(1, dtype=np.float32)}))
        # dtype tag sits right after the 2-byte length and 1-byte name
        blob[12 + 2 + 1] = 7
        with pytest.raises(CheckpointError):
            loads(bytes(blob))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load(tmp_path / "absent.ckpt")

    def test_loaded_arrays_are_writable_copies(self):
        back = loads(dumps({"w": np.zeros(3, dtype=np.float32)}))
        back["w"][0] = 1.0  # must not raise
