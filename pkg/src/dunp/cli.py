"""Batch command-line front end.

Commands: train, eval, predict, gradcheck, ablate, ttest, synth.  Run
configs are canonical JSON (sorted keys, two-space indent) with four
top-level sections: seed, network, train, data.  Exit codes: 0 success,
2 bad input (missing/malformed config, shape or id mismatch, zero
variance), 3 training divergence (the last good checkpoint is saved).
The DUNP_SEED environment variable overrides the config seed; an
explicit --seed flag overrides both.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import blocks, losses
from .autodiff import Tensor, no_grad
from .data import (
    AUGMENT_KINDS,
    SegSample,
    expand_with_augments,
    generate_synthetic,
    load_corpus,
    load_image,
    resize_to,
    save_corpus,
    save_mask,
    split,
)
from .errors import ConfigurationError, TrainingDiverged, ZeroVarianceError
from .gradcheck import grad_check
from .model import DoubleUNetPlus, NetworkConfig, load_checkpoint, save_checkpoint
from .stats import paired_t_test
from .train import TrainConfig, ablate, ablation_csv, epochs_csv, evaluate, train

_NETWORK_KEYS = tuple(sorted(
    f.name for f in dataclasses.fields(NetworkConfig) if f.name != "seed"))
_TRAIN_KEYS = tuple(sorted(
    f.name for f in dataclasses.fields(TrainConfig) if f.name != "seed"))

TTEST_COLUMNS = ("precision", "recall", "dsc", "iou")


@dataclass
class DataSpec:
    """Where samples come from and how they are partitioned."""
    dir: str | None = None
    n: int = 20
    shape_kind: str = "disk"
    ratios: tuple = (0.8, 0.1, 0.1)
    augment: tuple = ()

    def validate(self) -> "DataSpec":
        if self.n < 1:
            raise ConfigurationError(f"data.n must be >= 1, got {self.n}")
        if len(self.ratios) != 3:
            raise ConfigurationError(f"data.ratios needs 3 entries, got {self.ratios}")
        for kind in self.augment:
            if kind not in AUGMENT_KINDS:
                raise ConfigurationError(f"unknown augmentation kind {kind!r}")
        return self


@dataclass
class RunConfig:
    """One experiment: seed plus network/train/data sections.

    The single top-level seed feeds weight init, shuffling, splitting,
    and synthetic generation; the nested sections deliberately have no
    seed fields of their own.
    """
    seed: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataSpec = field(default_factory=DataSpec)

    def network_config(self) -> NetworkConfig:
        return dataclasses.replace(self.network, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)

    def as_dict(self) -> dict:
        net = {k: getattr(self.network, k) for k in _NETWORK_KEYS}
        net["input_size"] = list(net["input_size"])
        tr = {k: getattr(self.train, k) for k in _TRAIN_KEYS}
        da = {"dir": self.data.dir, "n": self.data.n,
              "shape_kind": self.data.shape_kind,
              "ratios": list(self.data.ratios),
              "augment": list(self.data.augment)}
        return {"seed": self.seed, "network": net, "train": tr, "data": da}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_dict(doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("run config must be a JSON object")
        unknown = set(doc) - {"seed", "network", "train", "data"}
        if unknown:
            raise ConfigurationError(f"unknown run config keys: {sorted(unknown)}")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigurationError(f"seed must be an integer, got {seed!r}")

        net_doc = dict(doc.get("network", {}))
        bad = set(net_doc) - set(_NETWORK_KEYS)
        if bad:
            raise ConfigurationError(f"unknown network keys: {sorted(bad)}")
        if "input_size" in net_doc:
            net_doc["input_size"] = tuple(net_doc["input_size"])
        network = NetworkConfig(**net_doc, seed=seed).validate()

        tr_doc = dict(doc.get("train", {}))
        bad = set(tr_doc) - set(_TRAIN_KEYS)
        if bad:
            raise ConfigurationError(f"unknown train keys: {sorted(bad)}")
        train_cfg = TrainConfig(**tr_doc, seed=seed).validate()

        da_doc = dict(doc.get("data", {}))
        bad = set(da_doc) - {"dir", "n", "shape_kind", "ratios", "augment"}
        if bad:
            raise ConfigurationError(f"unknown data keys: {sorted(bad)}")
        if "ratios" in da_doc:
            da_doc["ratios"] = tuple(da_doc["ratios"])
        if "augment" in da_doc:
            da_doc["augment"] = tuple(da_doc["augment"])
        data = DataSpec(**da_doc).validate()
        return RunConfig(seed=seed, network=network, train=train_cfg, data=data)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigurationError(
                f"malformed JSON at line {err.lineno} column {err.colno}: {err.msg}")
        return RunConfig.from_dict(doc)


def read_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return RunConfig.from_json(path.read_text())


def _apply_seed_overrides(run: RunConfig, flag_seed) -> RunConfig:
    # precedence: explicit flag, then DUNP_SEED, then the file
    seed = run.seed
    env = os.environ.get("DUNP_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigurationError(f"DUNP_SEED must be an integer, got {env!r}")
    if flag_seed is not None:
        seed = flag_seed
    return dataclasses.replace(run, seed=seed)


def load_dataset(run: RunConfig):
    """Materialize train/val/test sample lists for a run config."""
    net = run.network_config()
    if run.data.dir:
        samples = [resize_to(s, net.input_size) for s in load_corpus(run.data.dir)]
        for s in samples:
            if s.image.shape[0] != net.in_channels:
                raise ConfigurationError(
                    f"sample {s.id} has {s.image.shape[0]} channels, "
                    f"network expects {net.in_channels}")
    else:
        h, w = net.input_size
        if h != w:
            raise ConfigurationError(
                f"synthetic generation needs a square input size, got {net.input_size}")
        samples = generate_synthetic(run.data.n, size=h,
                                     shape_kind=run.data.shape_kind,
                                     seed=run.seed, channels=net.in_channels)
    train_s, val_s, test_s = split(samples, tuple(run.data.ratios), seed=run.seed)
    if run.data.augment:
        train_s = expand_with_augments(train_s, tuple(run.data.augment), seed=run.seed)
    return train_s, val_s, test_s


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    run = _apply_seed_overrides(read_run_config(args.config), args.seed)
    out = Path(args.out)
    model = DoubleUNetPlus(run.network_config())
    train_s, val_s, _ = load_dataset(run)
    try:
        result = train(model, train_s, val_s, run.train_config())
    except TrainingDiverged as err:
        model.load_state_arrays(err.best_state)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, out / "checkpoint.dunp")
        print(f"dunp: training diverged at epoch {err.epoch}; "
              f"last good checkpoint saved to {out / 'checkpoint.dunp'}",
              file=sys.stderr)
        return 3
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.dunp")
    _write(out / "epochs.csv", epochs_csv(result.log))
    _write(out / "config.json", run.to_json())
    print(f"best epoch {result.best_epoch}, val loss {result.best_val_loss:.6g}; "
          f"artifacts in {out}")
    return 0


def _load_corpus_for_model(model, data_dir):
    samples = [resize_to(s, model.config.input_size)
               for s in load_corpus(data_dir)]
    for s in samples:
        if s.image.shape[0] != model.config.in_channels:
            raise ConfigurationError(
                f"sample {s.id} has {s.image.shape[0]} channels, "
                f"checkpoint expects {model.config.in_channels}")
    return samples


def cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    samples = _load_corpus_for_model(model, args.data)
    report = evaluate(model, samples, batch_size=args.batch_size,
                      average=args.average)
    text = report.to_csv()
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.model)
    image = load_image(args.image)
    if image.shape[0] != model.config.in_channels:
        raise ConfigurationError(
            f"image has {image.shape[0]} channels, checkpoint expects "
            f"{model.config.in_channels}")
    # carry the image through the sample resizer with a placeholder mask
    holder = SegSample(image=image,
                       mask=np.zeros((1,) + image.shape[1:], np.float32),
                       id="input").validate()
    image = resize_to(holder, model.config.input_size).image
    model.eval()
    with no_grad():
        out = model(Tensor(image[None].astype(model.dtype)))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_mask(outdir / "mask1.png", out.mask1.data[0])
    save_mask(outdir / "mask2.png", out.mask2.data[0])
    print(f"wrote {outdir / 'mask1.png'} and {outdir / 'mask2.png'}")
    return 0


def _gradcheck_cases(seed: int, size: int):
    """Small float64 instances of every block plus the composed model."""
    f64 = np.float64

    def rng(i):
        return np.random.default_rng([seed, i])

    def xin(shape, i):
        return Tensor(rng(100 + i).standard_normal(shape), requires_grad=True)

    def case(name, module, x):
        def f():
            y = module(x)
            return (y * y).sum()
        return name, f, list(module.named_parameters()) + [("x", x)]

    yield case("se_block", blocks.SEBlock(4, rng(0), dtype=f64), xin((2, 4, 5, 5), 0))
    yield case("channel_attention",
               blocks.ChannelAttention(4, rng(1), dtype=f64), xin((2, 4, 5, 5), 1))
    yield case("spatial_attention",
               blocks.SpatialAttention(rng(2), dtype=f64), xin((2, 4, 5, 5), 2))
    yield case("tam", blocks.TAM(4, 4, rng(3), dtype=f64), xin((1, 4, 5, 5), 3))
    yield case("ag_residual",
               blocks.AGResidual(3, 4, rng(4), dtype=f64), xin((1, 3, 6, 6), 4))
    yield case("mkrc", blocks.MKRC(3, 4, rng(5), dtype=f64), xin((1, 3, 6, 6), 5))
    yield case("se_aspp", blocks.SEASPP(4, 4, rng(6), dtype=f64), xin((1, 4, 6, 6), 6))
    yield case("gating_signal",
               blocks.GatingSignal(4, 2, rng(7), dtype=f64), xin((1, 4, 3, 3), 7))

    tag = blocks.TAG(4, 4, rng(8), dtype=f64)
    skip = xin((1, 4, 6, 6), 8)
    gate = xin((1, 4, 3, 3), 9)

    def tag_f():
        y = tag(skip, gate)
        return (y * y).sum()
    yield "tag", tag_f, list(tag.named_parameters()) + [("skip", skip), ("gate", gate)]

    cfg = NetworkConfig(levels=2, base_channels=2, input_size=(size, size),
                        in_channels=1, seed=seed)
    model = DoubleUNetPlus(cfg, dtype=f64)
    x = Tensor(rng(200).uniform(0.1, 0.9, (1, 1, size, size)))
    y = Tensor((rng(201).uniform(size=(1, 1, size, size)) > 0.5).astype(f64))

    def model_f():
        out = model(x)
        return losses.total_loss(out.mask1, out.mask2, y,
                                 cfg.deep_supervision_weight)
    yield "end_to_end", model_f, list(model.named_parameters())


def cmd_gradcheck(args) -> int:
    ok = True
    for name, f, params in _gradcheck_cases(args.seed, args.size):
        tol = args.tol if name == "end_to_end" else args.block_tol
        report = grad_check(f, params, tol=tol,
                            samples_per_param=args.samples,
                            rng=np.random.default_rng(args.seed))
        ok = ok and report.passed
        print(f"{name:<20} max rel err {report.max_rel_err:.3e}  "
              f"{'pass' if report.passed else 'FAIL'} (tol {tol:g})")
    print(f"overall: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_ablate(args) -> int:
    run = _apply_seed_overrides(read_run_config(args.config), args.seed)
    train_s, val_s, test_s = load_dataset(run)
    rows = ablate(run.network_config(), run.train_config(),
                  train_s, val_s, test_s)
    text = ablation_csv(rows)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _read_metric_column(path, column: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"metrics file not found: {path}")
    values = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ConfigurationError(
                f"{path} has no {column!r} column (header {reader.fieldnames})")
        for row in reader:
            sid = row["sample_id"]
            if sid == "aggregate":
                continue
            if sid in values:
                raise ConfigurationError(f"duplicate sample id {sid!r} in {path}")
            values[sid] = float(row[column])
    if not values:
        raise ConfigurationError(f"no per-sample rows in {path}")
    return values


def cmd_ttest(args) -> int:
    a = _read_metric_column(args.a, args.column)
    b = _read_metric_column(args.b, args.column)
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))[:3]
        only_b = sorted(set(b) - set(a))[:3]
        raise ConfigurationError(
            f"sample ids differ between the two files "
            f"(only in first: {only_a}, only in second: {only_b})")
    ids = sorted(a)
    res = paired_t_test([a[i] for i in ids], [b[i] for i in ids])
    print(f"n = {len(ids)}")
    print(f"t = {res.t:.6g}")
    print(f"df = {res.df}")
    print(f"p = {res.p:.6g}")
    print(f"significant at 0.05: {'yes' if res.significant(0.05) else 'no'}")
    return 0


def cmd_synth(args) -> int:
    samples = generate_synthetic(args.n, size=args.size, shape_kind=args.kind,
                                 seed=args.seed, channels=args.channels)
    save_corpus(samples, args.out)
    print(f"wrote {len(samples)} {args.kind} samples to {args.out}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dunp",
        description="Dual attention U-Net segmentation toolkit (batch use).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--out", default="run_out",
                   help="artifact directory (checkpoint + CSVs)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against an image corpus")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-d", "--data", required=True)
    p.add_argument("-o", "--out", default=None, help="metrics CSV (default stdout)")
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--average", choices=("macro", "micro"), default="macro")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="emit both predicted masks for one image")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-i", "--image", required=True)
    p.add_argument("-o", "--out", default="predict_out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check per block and end to end")
    p.add_argument("--size", type=int, default=8, help="input side for the model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-3, help="end-to-end tolerance")
    p.add_argument("--block-tol", type=float, default=1e-4)
    p.add_argument("--samples", type=int, default=3,
                   help="coordinates probed per parameter tensor")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train the 7-row configuration grid")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--out", default=None, help="CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("ttest",
                       help="paired t-test of one metric between two eval CSVs")
    p.add_argument("-a", required=True, help="first metrics CSV")
    p.add_argument("-b", required=True, help="second metrics CSV")
    p.add_argument("--column", choices=TTEST_COLUMNS, default="dsc")
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("synth", help="write a synthetic corpus to disk")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("-n", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--kind", choices=("disk", "rect", "blob"), default="disk")
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ZeroVarianceError) as err:
        print(f"dunp: error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"dunp: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
