"""Binary checkpoint format round-trips and validation."""

import struct

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kgembed.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from kgembed.numerics import named_rng


def test_roundtrip(tmp_path):
    rng = named_rng(0, "ckpt")
    state = {
        "ent.embed": rng.normal(size=(5, 3)),
        "dec.proj": rng.normal(size=(9, 4)),
    }
    path = tmp_path / "model.kge"
    save_checkpoint(path, state)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(state)  # order preserved
    for name in state:
        assert_allclose(loaded[name], state[name], rtol=0)


def test_file_layout(tmp_path):
    path = tmp_path / "model.kge"
    save_checkpoint(path, {"w": np.array([[1.5, -2.0]])})
    data = path.read_bytes()
    assert data[:4] == b"KGE1"
    assert struct.unpack_from("<I", data, 4)[0] == 1
    name_len = struct.unpack_from("<I", data, 8)[0]
    assert name_len == 1
    assert data[12:13] == b"w"
    rank, rows, cols = struct.unpack_from("<III", data, 13)
    assert (rank, rows, cols) == (2, 1, 2)
    values = np.frombuffer(data, dtype="<f8", count=2, offset=25)
    assert_allclose(values, [1.5, -2.0])


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.kge"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_bad_version(tmp_path):
    path = tmp_path / "bad.kge"
    path.write_bytes(b"KGE1" + struct.pack("<I", 9))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_non_2d_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "x.kge", {"v": np.zeros(3)})


def test_identical_states_identical_bytes(tmp_path):
    rng = named_rng(1, "ckpt")
    state = {"a": rng.normal(size=(3, 3))}
    p1, p2 = tmp_path / "a.kge", tmp_path / "b.kge"
    save_checkpoint(p1, state)
    save_checkpoint(p2, {k: v.copy() for k, v in state.items()})
    assert p1.read_bytes() == p2.read_bytes()
