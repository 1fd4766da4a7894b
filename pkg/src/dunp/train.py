"""Training loop, Adam, plateau scheduling, evaluation, ablation grid.

The monitored quantity is the validation hybrid loss.  The epoch log's
lr column records the rate in effect during that epoch; the scheduler
consumes each epoch's validation loss afterwards, so a reduction shows
up from the next row on.  Divergence (non-finite loss or gradient)
aborts with the best checkpoint preserved on the raised error.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .autodiff import Tensor, backward, no_grad
from .errors import ConfigurationError, TrainingDiverged
from .metrics import MetricsReport, report_for_pairs
from .model import DoubleUNetPlus

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    plateau_factor: float = 0.1
    patience: int = 10
    batch_size: int = 2
    max_epochs: int = 50
    seed: int = 0
    tol: float = 1e-8

    def validate(self) -> "TrainConfig":
        if self.lr0 <= 0:
            raise ConfigurationError(f"lr0 must be > 0, got {self.lr0}")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ConfigurationError(
                f"plateau_factor must be in (0, 1), got {self.plateau_factor}")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be >= 1")
        return self


class Adam:
    """Adam with bias correction; moments match the parameter dtype."""

    def __init__(self, named_params, lr: float):
        self.items = [(name, p) for name, p in named_params]
        self.lr = lr
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.items}
        self._v = {name: np.zeros_like(p.data) for name, p in self.items}

    def zero_grad(self):
        for _, p in self.items:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - ADAM_BETA1 ** self.t
        c2 = 1.0 - ADAM_BETA2 ** self.t
        for name, p in self.items:
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.isfinite(g).all():
                raise TrainingDiverged(
                    f"non-finite gradient in parameter {name}", parameter=name)
            m = self._m[name]
            v = self._v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


class ReduceOnPlateau:
    """Cut lr by factor after `patience` epochs without improvement.

    Improvement means value < best - tol; ties count as no improvement,
    and the first observed value counts as non-improving (a tie with
    itself), so `patience` flat epochs from the start already trigger
    one reduction.
    """

    def __init__(self, lr0: float, factor: float = 0.1, patience: int = 10,
                 tol: float = 1e-8):
        if not 0.0 < factor < 1.0:
            raise ConfigurationError(f"factor must be in (0, 1), got {factor}")
        if patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {patience}")
        self.lr = lr0
        self.factor = factor
        self.patience = patience
        self.tol = tol
        self.best = None
        self.wait = 0

    def step(self, value: float) -> float:
        if self.best is None:
            self.best = value
            self.wait = 1
        elif value < self.best - self.tol:
            self.best = value
            self.wait = 0
        else:
            self.wait += 1
        if self.wait >= self.patience:
            self.lr *= self.factor
            self.wait = 0
        return self.lr


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_dsc: float
    val_iou: float
    val_precision: float
    val_recall: float


EPOCH_CSV_HEADER = "epoch,lr,train_loss,val_loss,val_dsc,val_iou,val_precision,val_recall"


def epochs_csv(log) -> str:
    buf = io.StringIO()
    buf.write(EPOCH_CSV_HEADER + "\n")
    for e in log:
        buf.write(f"{e.epoch},{e.lr:.10g},{e.train_loss:.10g},{e.val_loss:.10g},"
                  f"{e.val_dsc:.10g},{e.val_iou:.10g},"
                  f"{e.val_precision:.10g},{e.val_recall:.10g}\n")
    return buf.getvalue()


@dataclass
class TrainResult:
    log: list
    best_epoch: int
    best_val_loss: float
    best_state: dict = field(repr=False, default_factory=dict)


def _stack(samples, dtype):
    x = np.stack([s.image for s in samples]).astype(dtype, copy=False)
    y = np.stack([s.mask for s in samples]).astype(dtype, copy=False)
    return Tensor(x), Tensor(y)


def _batches(n, batch_size, order=None):
    idx = np.arange(n) if order is None else order
    for lo in range(0, n, batch_size):
        yield idx[lo:lo + batch_size]


def _sample_row_id(s) -> str:
    return s.id if s.augment == "orig" else f"{s.id}+{s.augment}"


def _val_loss(model, samples, batch_size: int, lam: float) -> float:
    total = 0.0
    for batch in _batches(len(samples), batch_size):
        xs = [samples[i] for i in batch]
        x, y = _stack(xs, model.dtype)
        out = model(x)
        total += losses.total_loss(out.mask1, out.mask2, y, lam).item() * len(xs)
    return total / len(samples)


def evaluate(model: DoubleUNetPlus, samples, batch_size: int = 4,
             threshold: float = 0.5, average: str = "macro") -> MetricsReport:
    """Forward every sample in eval mode and score mask2."""
    if not samples:
        raise ConfigurationError("evaluate needs at least one sample")
    model.eval()
    pairs = []
    with no_grad():
        for batch in _batches(len(samples), batch_size):
            xs = [samples[i] for i in batch]
            x, _ = _stack(xs, model.dtype)
            out = model(x)
            for j, s in enumerate(xs):
                pairs.append((_sample_row_id(s), out.mask2.data[j], s.mask))
    return report_for_pairs(pairs, threshold=threshold, average=average)


def train(model: DoubleUNetPlus, train_set, val_set, cfg: TrainConfig) -> TrainResult:
    """Optimize on train_set, monitor val_set, keep the best weights.

    The model is left loaded with the best-validation-loss state, which
    is also returned (deep copies) for checkpointing.
    """
    cfg.validate()
    if not train_set or not val_set:
        raise ConfigurationError("train and val sets must be non-empty")
    lam = model.config.deep_supervision_weight
    optimizer = Adam(model.named_parameters(), lr=cfg.lr0)
    scheduler = ReduceOnPlateau(cfg.lr0, cfg.plateau_factor, cfg.patience, cfg.tol)
    log: list[EpochLog] = []
    best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    best_val = np.inf
    best_epoch = -1

    for epoch in range(cfg.max_epochs):
        lr_now = scheduler.lr
        optimizer.lr = lr_now
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_set))
        model.train()
        running = 0.0
        try:
            for batch in _batches(len(train_set), cfg.batch_size, order):
                xs = [train_set[i] for i in batch]
                x, y = _stack(xs, model.dtype)
                out = model(x)
                loss = losses.total_loss(out.mask1, out.mask2, y, lam)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite training loss at epoch {epoch}", epoch=epoch)
                optimizer.zero_grad()
                backward(loss)
                optimizer.step()
                running += value * len(xs)
        except TrainingDiverged as err:
            err.epoch = epoch
            err.best_state = best_state
            raise
        train_loss = running / len(train_set)

        model.eval()
        with no_grad():
            val_loss = _val_loss(model, val_set, cfg.batch_size, lam)
        report = evaluate(model, val_set, batch_size=cfg.batch_size)
        agg = report.aggregate()
        log.append(EpochLog(epoch=epoch, lr=lr_now, train_loss=train_loss,
                            val_loss=val_loss, val_dsc=agg["dsc"], val_iou=agg["iou"],
                            val_precision=agg["precision"], val_recall=agg["recall"]))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
        scheduler.step(val_loss)

    model.load_state_arrays(best_state)
    return TrainResult(log=log, best_epoch=best_epoch, best_val_loss=float(best_val),
                       best_state=best_state)


ABLATION_GRID = (
    ("baseline", {"mkrc_on": False, "tam_on": False, "tag_on": False}),
    ("wo_mkrc", {"mkrc_on": False, "tam_on": True, "tag_on": True}),
    ("wo_tam", {"mkrc_on": True, "tam_on": False, "tag_on": True}),
    ("wo_tag", {"mkrc_on": True, "tam_on": True, "tag_on": False}),
    ("wo_tam_mkrc", {"mkrc_on": False, "tam_on": False, "tag_on": True}),
    ("wo_tam_mkrc_tag", {"mkrc_on": False, "tam_on": False, "tag_on": False}),
    ("full", {"mkrc_on": True, "tam_on": True, "tag_on": True}),
)


def ablate(net_cfg, train_cfg: TrainConfig, train_set, val_set, test_set) -> list:
    """Train every grid row from the same seed; score on the test set."""
    rows = []
    for name, flags in ABLATION_GRID:
        cfg = net_cfg.with_flags(**flags)
        model = DoubleUNetPlus(cfg)
        result = train(model, train_set, val_set, train_cfg)
        agg = evaluate(model, test_set, batch_size=train_cfg.batch_size).aggregate()
        rows.append({"config": name, **flags, "params": model.param_count(),
                     "best_val_loss": result.best_val_loss, **agg})
    return rows


ABLATION_CSV_HEADER = ("config,mkrc_on,tam_on,tag_on,params,"
                       "best_val_loss,precision,recall,dsc,iou")


def ablation_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(ABLATION_CSV_HEADER + "\n")
    for r in rows:
        buf.write(f"{r['config']},{int(r['mkrc_on'])},{int(r['tam_on'])},"
                  f"{int(r['tag_on'])},{r['params']},{r['best_val_loss']:.10g},"
                  f"{r['precision']:.10g},{r['recall']:.10g},"
                  f"{r['dsc']:.10g},{r['iou']:.10g}\n")
    return buf.getvalue()
