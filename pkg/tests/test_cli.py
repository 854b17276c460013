import json

import pytest

from bmrc.cli import main
from bmrc.corpus import load_split, synthetic_corpus, write_split
from bmrc.records import read_predictions

TINY = {"d_h": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_len": 64, "dropout_rate": 0.1}


@pytest.fixture
def workspace(tmp_path):
    sents = synthetic_corpus(6, seed=1)
    write_split(tmp_path / "train.txt", sents)
    write_split(tmp_path / "dev.txt", sents[:3])
    cfg = {
        "data": {"train": "train.txt", "dev": "dev.txt"},
        "encoder": TINY,
        "optimizer": {"epochs": 2, "encoder_lr": 1e-3},
        "seeds": [3],
        "output_dir": "runs",
    }
    (tmp_path / "config.json").write_text(json.dumps(cfg))
    return tmp_path


def _train(ws, *extra):
    return main(["train", "--config", str(ws / "config.json"), *extra])


def test_train_writes_checkpoint_and_log(workspace, capsys):
    assert _train(workspace) == 0
    run = workspace / "runs" / "seed-3"
    assert (run / "checkpoint.bin").is_file() and (run / "checkpoint.vocab.txt").is_file()
    lines = [json.loads(l) for l in (run / "metrics.jsonl").read_text().splitlines()]
    assert [l["epoch"] for l in lines] == [0, 1, 2]
    assert set(lines[0]) == {"epoch", "l_n", "l_r", "l_s", "total", "dev_f1"}
    assert set(lines[0]["dev_f1"]) == {"A-S", "O", "P", "T"}
    assert str(run / "checkpoint.bin") in capsys.readouterr().out


def test_flags_override_config(workspace):
    out = workspace / "elsewhere"
    assert _train(workspace, "--seed", "5", "--seed", "6", "--epochs", "1", "--out", str(out)) == 0
    assert sorted(p.name for p in out.iterdir()) == ["seed-5", "seed-6"]
    lines = (out / "seed-5" / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2


def test_invalid_delta_fails_before_work(workspace, capsys):
    assert _train(workspace, "--delta", "1.2") != 0
    assert "delta" in capsys.readouterr().err
    assert not (workspace / "runs").exists()


def test_missing_train_file(workspace, capsys):
    assert main(["train", "--config", str(workspace / "config.json"), "--train", str(workspace / "nope.txt")]) == 2
    assert "not readable" in capsys.readouterr().err


def test_training_is_byte_reproducible(workspace):
    assert _train(workspace, "--out", str(workspace / "a")) == 0
    assert _train(workspace, "--out", str(workspace / "b")) == 0
    for name in ("metrics.jsonl", "checkpoint.bin", "checkpoint.vocab.txt"):
        assert (workspace / "a" / "seed-3" / name).read_bytes() == (workspace / "b" / "seed-3" / name).read_bytes()


@pytest.fixture
def trained(workspace):
    assert _train(workspace) == 0
    return workspace, workspace / "runs" / "seed-3" / "checkpoint.bin"


def test_predict_every_sentence_gets_a_record(trained):
    ws, ckpt = trained
    out = ws / "pred.jsonl"
    assert main(["predict", "--checkpoint", str(ckpt), "--input", str(ws / "train.txt"), "--out", str(out)]) == 0
    preds = read_predictions(out)
    assert sorted(preds, key=int) == [s.id for s in load_split(ws / "train.txt", "train")]
    # rerun is byte-identical
    again = ws / "pred2.jsonl"
    main(["predict", "--checkpoint", str(ckpt), "--input", str(ws / "train.txt"), "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_predict_empty_input_writes_header_only(trained):
    ws, ckpt = trained
    (ws / "empty.txt").write_text("")
    out = ws / "pred.jsonl"
    assert main(["predict", "--checkpoint", str(ckpt), "--input", str(ws / "empty.txt"), "--out", str(out)]) == 0
    assert out.read_text().splitlines() == ['{"format": "bmrc-predictions", "version": 1}']


def test_single_direction_is_subset_of_union(trained):
    ws, ckpt = trained
    keys = {}
    for mode in ("ao", "oa"):
        out = ws / f"{mode}.jsonl"
        args = ["predict", "--checkpoint", str(ckpt), "--input", str(ws / "train.txt"), "--out", str(out),
                "--direction", mode, "--tau", "0.3"]
        assert main(args) == 0
        keys[mode] = {(sid, tuple(t.aspect), tuple(t.opinion)) for sid, ts in read_predictions(out).items() for t in ts}
    out = ws / "both.jsonl"
    main(["predict", "--checkpoint", str(ckpt), "--input", str(ws / "train.txt"), "--out", str(out),
          "--tau", "0.3", "--delta", "0"])
    both = {(sid, tuple(t.aspect), tuple(t.opinion)) for sid, ts in read_predictions(out).items() for t in ts}
    assert keys["ao"] <= both and keys["oa"] <= both
    assert both == keys["ao"] | keys["oa"]


def test_predict_with_mismatched_encoder(trained, capsys):
    ws, ckpt = trained
    cfg = json.loads((ws / "config.json").read_text())
    cfg["encoder"] = dict(TINY, d_ff=48)
    (ws / "wrong.json").write_text(json.dumps(cfg))
    rc = main(["predict", "--config", str(ws / "wrong.json"), "--checkpoint", str(ckpt),
               "--input", str(ws / "train.txt"), "--out", str(ws / "p.jsonl")])
    assert rc == 2
    assert "ffn.w1" in capsys.readouterr().err


def _gold_file(tmp_path):
    gold = tmp_path / "gold.txt"
    gold.write_text(
        "a b c d e f g h i j k l m n o p####[([0], [2], 'POS'), ([4], [6], 'NEG'), ([8, 9], [11], 'POS'), "
        "([13], [15], 'NEU')]\n"
        "nothing here####[]\n"
    )
    return gold


def _pred_file(path, triplets_by_id):
    lines = ['{"format": "bmrc-predictions", "version": 1}']
    for sid, trips in triplets_by_id.items():
        recs = [{"aspect": a, "opinion": o, "sentiment": s, "pair_probability": 1.0, "sentiment_probability": 1.0}
                for a, o, s in trips]
        lines.append(json.dumps({"id": sid, "triplets": recs}))
    path.write_text("\n".join(lines) + "\n")
    return path


GOLD = [([0, 0], [2, 2], "POS"), ([4, 4], [6, 6], "NEG"), ([8, 9], [11, 11], "POS"), ([13, 13], [15, 15], "NEU")]


def _eval(tmp_path, *preds):
    out = tmp_path / "report.jsonl"
    rc = main(["eval", "--gold", str(_gold_file(tmp_path)), "--predictions", *map(str, preds), "--out", str(out)])
    return rc, {r["mode"]: r for r in map(json.loads, out.read_text().splitlines())} if rc == 0 else None


def test_eval_identity(tmp_path):
    rc, rep = _eval(tmp_path, _pred_file(tmp_path / "p.jsonl", {"1": GOLD, "2": []}))
    assert rc == 0
    assert {m: r["f1"] for m, r in rep.items()} == {"A-S": 1.0, "O": 1.0, "P": 1.0, "T": 1.0}


def test_eval_empty_predictions(tmp_path):
    rc, rep = _eval(tmp_path, _pred_file(tmp_path / "p.jsonl", {"1": [], "2": []}))
    assert {m: r["f1"] for m, r in rep.items()} == {"A-S": 0.0, "O": 0.0, "P": 0.0, "T": 0.0}


def test_eval_three_vs_four(tmp_path):
    pred = GOLD[:2] + [([8, 9], [12, 12], "POS")]
    rc, rep = _eval(tmp_path, _pred_file(tmp_path / "p.jsonl", {"1": pred, "2": []}))
    assert abs(rep["T"]["f1"] - 4 / 7) < 1e-12
    assert abs(rep["T"]["precision"] - 2 / 3) < 1e-12 and abs(rep["T"]["recall"] - 0.5) < 1e-12


def test_eval_aggregates_runs(tmp_path):
    a = _pred_file(tmp_path / "a.jsonl", {"1": GOLD, "2": []})
    b = _pred_file(tmp_path / "b.jsonl", {"1": [], "2": []})
    rc, rep = _eval(tmp_path, a, b)
    assert rep["T"]["f1"] == 0.5
    assert [r["f1"] for r in rep["T"]["runs"]] == [1.0, 0.0]


def test_eval_id_mismatch(tmp_path, capsys):
    rc, _ = _eval(tmp_path, _pred_file(tmp_path / "p.jsonl", {"1": GOLD, "7": []}))
    assert rc == 2
    err = capsys.readouterr().err
    assert "missing=['2']" in err and "extra=['7']" in err


def test_eval_to_stdout(tmp_path, capsys):
    p = _pred_file(tmp_path / "p.jsonl", {"1": GOLD, "2": []})
    assert main(["eval", "--gold", str(_gold_file(tmp_path)), "--predictions", str(p)]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 4
