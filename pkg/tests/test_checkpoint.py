import numpy as np
import pytest

from clangvqa.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from clangvqa.errors import CheckpointError


@pytest.fixture
def payload(rng):
    return {"b": 1, "a": [1.5, "x"]}, {"w": rng.normal(size=(3, 2)).astype(np.float32),
                                        "s": np.array(2.5, dtype=np.float32),
                                        "v": rng.normal(size=4).astype(np.float32)}


def test_round_trip_is_exact(payload, tmp_path):
    meta, tensors = payload
    path = save_checkpoint(tmp_path / "c.clgc", meta, tensors)
    meta2, tensors2 = load_checkpoint(path)
    assert meta2 == meta
    assert set(tensors2) == set(tensors)
    for k in tensors:
        assert tensors2[k].tobytes() == tensors[k].tobytes()
        assert tensors2[k].shape == tensors[k].shape
    assert encode_checkpoint(meta2, tensors2) == path.read_bytes()


def test_header(payload):
    blob = encode_checkpoint(*payload)
    assert blob[:4] == b"CLGC"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[12:16], "little") == 3


def test_insertion_order_does_not_matter(payload):
    meta, tensors = payload
    reordered = dict(reversed(list(tensors.items())))
    assert encode_checkpoint(meta, tensors) == encode_checkpoint(meta, reordered)


@pytest.mark.parametrize("corrupt", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + (7).to_bytes(4, "little") + b[8:],
    lambda b: b[:-3],
    lambda b: b + b"\0",
    lambda b: b[:10],
])
def test_corruption_rejected(payload, corrupt):
    with pytest.raises(CheckpointError):
        decode_checkpoint(corrupt(encode_checkpoint(*payload)))
