import json
import struct

import numpy as np
import pytest

from bmrc.checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from bmrc.corpus import synthetic_corpus
from bmrc.encoder import EncoderConfig, Vocabulary
from bmrc.model import BMRCModel

CFG = EncoderConfig(d_h=16, n_layers=1, n_heads=2, d_ff=32, max_len=48)


@pytest.fixture
def saved(tmp_path):
    sents = synthetic_corpus(4)
    model = BMRCModel(CFG, Vocabulary.build(sents), seed=7)
    path = tmp_path / "m.bin"
    save_checkpoint(path, model, meta={"seed": 7})
    return model, path, sents


def test_round_trip_is_exact(saved):
    model, path, sents = saved
    back = load_checkpoint(path)
    assert back.config == CFG
    assert back.vocab.tokens == model.vocab.tokens
    assert set(back.params) == set(model.params)
    for k, v in model.params.items():
        np.testing.assert_array_equal(back.params[k], v)
    header, _ = read_checkpoint(path)
    assert header["meta"] == {"seed": 7}
    assert (path.parent / "m.vocab.txt").is_file()


def test_loaded_model_predicts_identically(saved):
    model, path, sents = saved
    back = load_checkpoint(path)
    from bmrc.queries import Direction, build_nonrestrictive_query

    q = [build_nonrestrictive_query(Direction.OtoA)]
    a, b = model.predict_spans(sents[0], q)[0], back.predict_spans(sents[0], q)[0]
    np.testing.assert_array_equal(a.p_start, b.p_start)


def test_saving_is_byte_stable(saved, tmp_path):
    model, path, _ = saved
    other = tmp_path / "again.bin"
    save_checkpoint(other, model, meta={"seed": 7})
    assert other.read_bytes() == path.read_bytes()


def test_head_count_mismatch(saved):
    _, path, _ = saved
    with pytest.raises(CheckpointError, match="n_heads"):
        load_checkpoint(path, EncoderConfig(d_h=16, n_layers=1, n_heads=4, d_ff=32, max_len=48))


def test_shape_mismatch_names_tensor(saved):
    _, path, _ = saved
    with pytest.raises(CheckpointError, match="layer0.ffn.w1"):
        load_checkpoint(path, EncoderConfig(d_h=16, n_layers=1, n_heads=2, d_ff=64, max_len=48))


def test_missing_layer(saved):
    _, path, _ = saved
    with pytest.raises(CheckpointError, match="lacks tensor"):
        load_checkpoint(path, EncoderConfig(d_h=16, n_layers=2, n_heads=2, d_ff=32, max_len=48))


def test_bad_magic_and_truncation(saved, tmp_path):
    _, path, _ = saved
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTACKPT" + path.read_bytes()[8:])
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(bad)
    cut = tmp_path / "cut.bin"
    cut.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        read_checkpoint(cut)


def test_header_is_documented_json(saved):
    _, path, _ = saved
    data = path.read_bytes()
    (n,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12 : 12 + n])
    assert header["format"] == "bmrc-checkpoint"
    total = sum(int(np.prod(t["shape"])) for t in header["tensors"])
    assert len(data) == 12 + n + 4 * total
