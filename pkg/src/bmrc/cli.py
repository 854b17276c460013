"""``bmrc`` command line: train, predict, eval.

Settings come from one JSON config file; command-line flags override it.
Example config::

    {
      "data": {"train": "train.txt", "dev": "dev.txt", "test": "test.txt"},
      "encoder": {"d_h": 64, "n_layers": 2, "n_heads": 4, "d_ff": 256, "max_len": 128, "dropout_rate": 0.1},
      "optimizer": {"head_lr": 0.001, "encoder_lr": 1e-05, "weight_decay": 0.01,
                    "warmup_fraction": 0.1, "batch_size": 4, "epochs": 40},
      "inference": {"delta": 0.8, "tau": 0.5, "max_span_len": 8, "direction": "both"},
      "seeds": [0, 1, 2, 3, 4],
      "output_dir": "runs"
    }

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import CorpusError, load_split
from .encoder import EncoderConfig, Vocabulary
from .evaluation import report_records, score_all
from .model import BMRCModel
from .records import RecordError, read_predictions, write_predictions
from .training import InferenceParams, OptimizerConfig, TrainingError, fit, predict_split

log = logging.getLogger("bmrc")

DEFAULT_SEEDS = [0, 1, 2, 3, 4]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: Dict[str, Optional[Path]] = field(default_factory=dict)
    # None: train with the default toy encoder, predict with the checkpoint's own
    encoder: Optional[EncoderConfig] = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    inference: InferenceParams = field(default_factory=InferenceParams)
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    output_dir: Path = Path("runs")

    def validate(self) -> None:
        inf = self.inference
        if not 0.0 <= inf.delta < 1.0:
            raise ConfigError(f"delta {inf.delta} outside [0, 1)")
        if not 0.0 < inf.tau < 1.0:
            raise ConfigError(f"tau {inf.tau} outside (0, 1)")
        if inf.max_span_len < 1:
            raise ConfigError("max_span_len must be >= 1")
        if inf.direction not in ("both", "ao", "oa"):
            raise ConfigError(f"direction {inf.direction!r} not in both/ao/oa")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    base = Path(path).resolve().parent
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        data = {k: (base / v if v else None) for k, v in raw.get("data", {}).items()}
        cfg = RunConfig(
            data=data,
            encoder=EncoderConfig(**raw["encoder"]) if "encoder" in raw else None,
            optimizer=OptimizerConfig(**raw.get("optimizer", {})),
            inference=InferenceParams(**raw.get("inference", {})),
            seeds=list(raw.get("seeds", DEFAULT_SEEDS)),
            output_dir=base / raw.get("output_dir", "runs"),
        )
    except (OSError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return cfg


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    inf = cfg.inference
    for name in ("delta", "tau", "direction", "max_span_len"):
        value = getattr(args, name, None)
        if value is not None:
            inf = replace(inf, **{name: value})
    cfg.inference = inf
    if getattr(args, "seed", None):
        cfg.seeds = list(args.seed)
    if getattr(args, "out", None) and args.command == "train":
        cfg.output_dir = Path(args.out)
    for split in ("train", "dev", "test"):
        value = getattr(args, split, None)
        if value:
            cfg.data[split] = Path(value)
    if getattr(args, "epochs", None) is not None:
        cfg.optimizer = replace(cfg.optimizer, epochs=args.epochs)
    cfg.validate()
    return cfg


def _require(cfg: RunConfig, split: str) -> Path:
    path = cfg.data.get(split)
    if path is None:
        raise ConfigError(f"no {split} path given (config data.{split} or --{split})")
    if not Path(path).is_file():
        raise ConfigError(f"{split} file {path} is not readable")
    return Path(path)


def cmd_train(cfg: RunConfig) -> List[Path]:
    train_path, dev_path = _require(cfg, "train"), _require(cfg, "dev")
    train = load_split(train_path, "train")
    dev = load_split(dev_path, "dev")
    vocab = Vocabulary.build(train.sentences)
    written = []
    for seed in cfg.seeds:
        run_dir = cfg.output_dir / f"seed-{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        model = BMRCModel(cfg.encoder or EncoderConfig(), vocab, seed=seed)
        log_path = run_dir / "metrics.jsonl"
        with open(log_path, "w", encoding="utf-8") as mlog:
            def on_epoch(rec):
                mlog.write(rec.to_json() + "\n")
                mlog.flush()
                log.info("seed %d epoch %d loss %.4f dev T-F1 %.4f", seed, rec.epoch, rec.loss.total, rec.dev["T"])

            result = fit(model, train, dev, replace(cfg.optimizer, seed=seed), cfg.inference, on_epoch=on_epoch)
        ckpt = run_dir / "checkpoint.bin"
        save_checkpoint(ckpt, result.model, meta={"seed": seed, "best_epoch": result.best_epoch,
                                                  "best_dev_triplet_f1": result.best_dev_f1})
        written.append(ckpt)
    return written


def cmd_predict(cfg: RunConfig, checkpoint: str, input_path: str, out: str) -> None:
    model = load_checkpoint(checkpoint, cfg.encoder)
    split = load_split(input_path, "test")
    preds = predict_split(model, split.sentences, cfg.inference)
    write_predictions(out, preds, [s.id for s in split.sentences])


def cmd_eval(prediction_paths: List[str], gold_path: str, split_name: str = "test") -> List[dict]:
    gold_split = load_split(gold_path, "test")
    gold = {s.id: s.triplets for s in gold_split.sentences}
    per_run = []
    for path in prediction_paths:
        pred = read_predictions(path)
        missing = sorted(set(gold) - set(pred), key=_id_key)
        extra = sorted(set(pred) - set(gold), key=_id_key)
        if missing or extra:
            raise RecordError(f"{path}: sentence ids do not match gold; missing={missing} extra={extra}")
        per_run.append(score_all(pred, gold))
    return report_records(per_run, split_name)


def _id_key(s: str):
    return (0, int(s)) if s.isdigit() else (1, s)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmrc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--delta", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--max-span-len", dest="max_span_len", type=int)
        p.add_argument("--direction", choices=("both", "ao", "oa"))

    p = sub.add_parser("train", help="train one model per seed")
    common(p)
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, action="append", help="repeatable; replaces the config's seeds")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("predict", help="extract triplets with a trained checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="predictions file")

    p = sub.add_parser("eval", help="score prediction files against gold")
    p.add_argument("--predictions", nargs="+", required=True, help="one file per run")
    p.add_argument("--gold", required=True)
    p.add_argument("--split", default="test", help="split label for the report")
    p.add_argument("--out", help="report file (default: stdout)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "eval":
            records = cmd_eval(args.predictions, args.gold, args.split)
            text = "".join(json.dumps(r) + "\n" for r in records)
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return 0
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "train":
            for ckpt in cmd_train(cfg):
                print(ckpt)
        else:
            cmd_predict(cfg, args.checkpoint, args.input, args.out)
    except (ConfigError, CorpusError, CheckpointError, RecordError, TrainingError, ValueError, OSError) as exc:
        print(f"bmrc: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
