"""Mini-batch training with Adam and cross-entropy, plus deterministic evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ops
from .dataset import SampleWindow
from .errors import TrainingAbort, ValidationError
from .metrics import EvalReport
from .model import SlipModel, SlipModelConfig, save_checkpoint
from .optim import Adam
from .tensor import no_grad

log = logging.getLogger(__name__)

DEFAULT_LR = 1e-7
SYNTHETIC_LR = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    lr: float = DEFAULT_LR
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    seq_len: int = 13
    modality: str = "fused"
    checkpoint_every: int = 0
    early_stop_patience: int | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.seq_len < 1:
            raise ValidationError(f"seq_len must be >= 1, got {self.seq_len}")


@dataclass
class WindowArrays:
    """Windows pre-stacked into contiguous arrays for fast batching."""

    x_t: np.ndarray | None
    x_v: np.ndarray | None
    y: np.ndarray
    object_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_windows(cls, windows: Sequence[SampleWindow], tactile: bool = True, visual: bool = True) -> WindowArrays:
        if len(windows) == 0:
            return cls(None, None, np.zeros(0, dtype=np.int64), np.array([], dtype=object))
        lengths = {w.length for w in windows}
        if len(lengths) != 1:
            raise ValidationError(f"windows have mixed lengths {sorted(lengths)}")
        x_t = np.stack([w.x_t for w in windows]) if tactile else None
        x_v = np.stack([w.x_v for w in windows]) if visual else None
        y = np.array([w.y for w in windows], dtype=np.int64)
        return cls(x_t, x_v, y, np.array([w.object_id for w in windows], dtype=object))

    @property
    def seq_len(self) -> int:
        arr = self.x_t if self.x_t is not None else self.x_v
        return int(arr.shape[1]) if arr is not None else 0

    def take(self, idx) -> tuple:
        return (None if self.x_t is None else self.x_t[idx],
                None if self.x_v is None else self.x_v[idx], self.y[idx])


@dataclass
class TrainResult:
    model: SlipModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    checkpoints: list[Path] = field(default_factory=list)


def _as_arrays(windows, cfg: SlipModelConfig) -> WindowArrays:
    if isinstance(windows, WindowArrays):
        arr = windows
    else:
        arr = WindowArrays.from_windows(list(windows), tactile=cfg.uses_tactile, visual=cfg.uses_visual)
    if len(arr) == 0:
        return arr
    if arr.seq_len != cfg.seq_len:
        raise ValidationError(f"windows have length {arr.seq_len}, model expects {cfg.seq_len}")
    if cfg.uses_tactile and arr.x_t is None:
        raise ValidationError(f"{cfg.modality} model needs tactile windows")
    if cfg.uses_visual:
        if arr.x_v is None:
            raise ValidationError(f"{cfg.modality} model needs visual windows")
        if tuple(arr.x_v.shape[2:]) != cfg.visual.frame_shape:
            raise ValidationError(
                f"visual items have shape {arr.x_v.shape[2:]}, encoder expects {cfg.visual.frame_shape}"
            )
    return arr


def predict_arrays(model: SlipModel, data: WindowArrays, batch: int = 512) -> np.ndarray:
    preds = []
    with no_grad():
        for s in range(0, len(data), batch):
            x_t, x_v, _ = data.take(slice(s, s + batch))
            preds.append(model.predict_labels(x_t, x_v))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(model: SlipModel, windows) -> EvalReport:
    """Confusion matrix and metrics of ``model`` on ``windows`` (no parameter changes)."""
    data = _as_arrays(windows, model.cfg)
    if len(data) == 0:
        raise ValidationError("cannot evaluate on an empty window set")
    preds = predict_arrays(model, data)
    return EvalReport.from_predictions(data.y, preds, data.object_ids)


def _snapshot(model: SlipModel) -> dict[str, np.ndarray]:
    return {n: p.data.copy() for n, p in model.params.items()}


def train(model_cfg: SlipModelConfig, cfg: TrainConfig, train_windows, val_windows=(),
          out_dir=None, init_seed: int | None = None) -> TrainResult:
    """Train from a seeded random init.

    Each epoch reshuffles with a seeded generator, runs ``ceil(N / batch_size)``
    Adam steps (the last partial batch is kept) and appends a history row.  The
    returned model holds the parameters of the best validation epoch, or of the
    last epoch when there is no validation set.
    """
    if model_cfg.seq_len != cfg.seq_len:
        raise ValidationError(f"model seq_len {model_cfg.seq_len} != train seq_len {cfg.seq_len}")
    if model_cfg.modality != cfg.modality:
        raise ValidationError(f"model modality {model_cfg.modality} != train modality {cfg.modality}")
    data = _as_arrays(train_windows, model_cfg)
    if len(data) == 0:
        raise ValidationError("training set is empty")
    val = _as_arrays(val_windows, model_cfg)

    model = SlipModel(model_cfg, seed=cfg.seed if init_seed is None else init_seed)
    opt = Adam(model.params, lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 1])
    out_dir = Path(out_dir) if out_dir is not None else None
    result = TrainResult(model)
    best_score, best_params, since_best = -np.inf, _snapshot(model), 0

    n = len(data)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for b, s in enumerate(range(0, n, cfg.batch_size)):
            idx = order[s: s + cfg.batch_size]
            x_t, x_v, y = data.take(idx)
            logits = model.forward(x_t, x_v)
            loss = ops.softmax_cross_entropy(logits, y)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingAbort(f"non-finite loss at epoch {epoch}, batch {b}", epoch=epoch, batch=b)
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += value * len(idx)
            correct += int((np.argmax(logits.data, axis=1) == y).sum())
        row = {"epoch": epoch, "train_loss": loss_sum / n, "train_accuracy": correct / n}
        if len(val):
            rep = evaluate(model, val)
            row["val_accuracy"] = rep.accuracy
            row["val_f1"] = rep.f1
            score = rep.accuracy
        else:
            score = epoch  # no validation data: keep the latest epoch
        result.history.append(row)
        log.info("epoch %d %s", epoch, row)
        if score > best_score:
            best_score, best_params, since_best = score, _snapshot(model), 0
            result.best_epoch = epoch
        else:
            since_best += 1
        if out_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            result.checkpoints.append(save_checkpoint(model, out_dir / f"checkpoint_epoch{epoch:04d}.bin"))
        if cfg.early_stop_patience is not None and since_best > cfg.early_stop_patience:
            log.info("early stop after epoch %d (best %d)", epoch, result.best_epoch)
            break

    for name, arr in best_params.items():
        model.params[name].data = arr
    if out_dir is not None:
        result.checkpoints.append(save_checkpoint(model, out_dir / "checkpoint.bin"))
    return result


def train_accuracy(model: SlipModel, windows) -> float:
    return evaluate(model, windows).accuracy

