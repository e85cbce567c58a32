"""Training loop: AdamW, scheduled auxiliary loss, best-checkpoint selection."""

import copy
from dataclasses import dataclass, field
from enum import Enum
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint
from .data import Dataset
from .errors import ConfigurationError, ShapeError, TrainingError
from .losses import (
    ClassWeights,
    ScheduleConfig,
    ccc_loss,
    combined_loss,
    inverse_frequency_weights,
    lambda_schedule,
    uniform_weights,
    weighted_cross_entropy,
)
from .metrics import EvalReport, make_report
from .model import Model

log = logging.getLogger(__name__)

__all__ = [
    "AuxMode",
    "WceMode",
    "TrainConfig",
    "TrainState",
    "TaskData",
    "EpochStats",
    "EpochRecord",
    "FitResult",
    "adamw_step",
    "prepare_task",
    "train_epoch",
    "evaluate",
    "fit",
    "format_history",
]

HISTORY_COLUMNS = (
    "epoch", "train_loss", "train_ccc_loss", "train_aux_loss", "val_loss", "lambda",
    "val_ccc_v", "val_ccc_a", "val_ccc_d", "val_ccc_mean", "val_macro_f1", "val_accuracy",
)


class AuxMode(Enum):
    SPHERICAL_REGION = "spherical"
    CATEGORICAL = "categorical"
    NONE = "none"


class WceMode(Enum):
    WEIGHTED = "weighted"
    UNWEIGHTED = "unweighted"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    schedule: ScheduleConfig = ScheduleConfig()
    aux_mode: AuxMode = AuxMode.SPHERICAL_REGION
    wce_mode: WceMode = WceMode.WEIGHTED
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.aux_mode, str):
            object.__setattr__(self, "aux_mode", AuxMode(self.aux_mode))
        if isinstance(self.wce_mode, str):
            object.__setattr__(self, "wce_mode", WceMode(self.wce_mode))
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2 (CCC needs two samples)")


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    best_val_loss: float = float("inf")
    moment1: Dict[str, np.ndarray] = field(default_factory=dict)
    moment2: Dict[str, np.ndarray] = field(default_factory=dict)
    rng: np.random.Generator = None

    @classmethod
    def fresh(cls, seed: int) -> "TrainState":
        return cls(rng=np.random.default_rng(seed))


def adamw_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: TrainState, cfg: TrainConfig):
    """One in-place AdamW update with decoupled weight decay."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name}")
    state.step += 1
    b1, b2 = cfg.betas
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if name not in state.moment1:
            state.moment1[name] = np.zeros_like(p)
            state.moment2[name] = np.zeros_like(p)
        m, v = state.moment1[name], state.moment2[name]
        p -= cfg.lr * cfg.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


@dataclass
class TaskData:
    """Arrays the loop consumes: frames, normalized VAD and class targets."""

    features: List[np.ndarray]
    vad: np.ndarray
    aux_labels: np.ndarray
    regions: np.ndarray

    def __len__(self):
        return len(self.features)


@dataclass
class Task:
    train: TaskData
    val: TaskData
    weights: ClassWeights
    n_classes: int
    class_names: Optional[List[str]]


def prepare_task(train_set: Dataset, val_set: Dataset, cfg: TrainConfig) -> Task:
    """Build targets and class weights from datasets with loaded features."""
    for name, ds in (("train", train_set), ("val", val_set)):
        if ds.features is None:
            raise ConfigurationError(f"{name} set has no loaded features")
        if len(ds) == 0:
            raise ConfigurationError(f"{name} set is empty")
    overlap = {r.id for r in train_set.records} & {r.id for r in val_set.records}
    if overlap:
        raise ConfigurationError(f"{len(overlap)} ids appear in both train and val")

    class_names = None
    if cfg.aux_mode is AuxMode.CATEGORICAL:
        class_names = sorted({r.category for r in train_set.records})
        index = {c: i for i, c in enumerate(class_names)}
        unknown = {r.category for r in val_set.records} - set(index)
        if unknown:
            raise ConfigurationError(f"val categories unseen in train: {sorted(unknown)}")
        train_aux = np.array([index[r.category] for r in train_set.records], dtype=np.int64)
        val_aux = np.array([index[r.category] for r in val_set.records], dtype=np.int64)
        n_classes = len(class_names)
    else:
        train_aux, val_aux = train_set.regions(), val_set.regions()
        n_classes = train_set.partition.n_regions

    if cfg.wce_mode is WceMode.WEIGHTED:
        weights = inverse_frequency_weights(np.bincount(train_aux, minlength=n_classes), n_classes)
    else:
        weights = uniform_weights(n_classes)

    def pack(ds, aux):
        return TaskData(list(ds.features), ds.vad_norm(), aux, ds.regions())

    return Task(pack(train_set, train_aux), pack(val_set, val_aux), weights, n_classes, class_names)


def _batches(data: TaskData, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Seeded shuffle, bucketed by utterance length; singleton batches dropped."""
    order = rng.permutation(len(data))
    lengths = np.array([data.features[i].shape[0] for i in order])
    batches = []
    for length in np.unique(lengths):
        bucket = order[lengths == length]
        for start in range(0, len(bucket), batch_size):
            chunk = bucket[start:start + batch_size]
            if len(chunk) < 2:
                log.warning("dropping a batch of size 1 (CCC undefined)")
                continue
            batches.append(chunk)
    if len(batches) > 1:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def _stack(data: TaskData, idx) -> np.ndarray:
    return np.stack([data.features[i] for i in idx])


@dataclass
class EpochStats:
    epoch: int
    weight: float
    loss: float
    ccc_loss: float
    aux_loss: Optional[float]
    batch_losses: List[float]
    batch_ccc_losses: List[float]


def _batch_loss(model: Model, x, vad, aux, task: Task, epoch: int, cfg: TrainConfig):
    out = model.forward(x)
    part_ccc = ccc_loss(out.vad_pred, vad)
    part_aux = None
    if cfg.aux_mode is not AuxMode.NONE:
        part_aux = weighted_cross_entropy(out.region_logits, aux, task.weights)
    return out, combined_loss(part_ccc, part_aux, epoch, cfg.schedule)


def train_epoch(model: Model, task: Task, cfg: TrainConfig, state: TrainState) -> EpochStats:
    """One pass over the training data; advances ``state.epoch``."""
    if state.rng is None:
        state.rng = np.random.default_rng(cfg.seed)
    data = task.train
    if model.cfg.feat_dim != data.features[0].shape[1]:
        raise ShapeError(
            f"features have dim {data.features[0].shape[1]}, model expects {model.cfg.feat_dim}"
        )
    epoch = state.epoch
    totals, cccs, auxes = [], [], []
    for idx in _batches(data, cfg.batch_size, state.rng):
        _, loss = _batch_loss(model, _stack(data, idx), data.vad[idx], data.aux_labels[idx], task, epoch, cfg)
        grads = model.backward(loss.grad_logits, loss.grad_vad)
        adamw_step(model.params, grads, state, cfg)
        totals.append(loss.value)
        cccs.append(loss.ccc_value)
        if loss.aux_value is not None:
            auxes.append(loss.aux_value)
    if not totals:
        raise TrainingError("no batch of size >= 2 could be formed")
    state.epoch += 1
    weight = 0.0 if cfg.aux_mode is AuxMode.NONE else lambda_schedule(epoch, cfg.schedule)
    return EpochStats(
        epoch, weight, float(np.mean(totals)), float(np.mean(cccs)),
        float(np.mean(auxes)) if auxes else None, totals, cccs,
    )


def predict(model: Model, data: TaskData, chunk: int = 256):
    """Forward the whole set in length-homogeneous chunks; returns (vad, logits)."""
    n = len(data)
    vad = np.empty((n, 3))
    logits = np.empty((n, model.cfg.n_regions))
    lengths = np.array([f.shape[0] for f in data.features])
    for length in np.unique(lengths):
        idx = np.nonzero(lengths == length)[0]
        for start in range(0, len(idx), chunk):
            part = idx[start:start + chunk]
            out = model.forward(_stack(data, part))
            vad[part] = out.vad_pred
            logits[part] = out.region_logits
    return vad, logits


def evaluate(model: Model, task: Task, data: TaskData, epoch: int, cfg: TrainConfig):
    """Set-level loss (at the schedule weight of ``epoch``) and EvalReport."""
    vad, logits = predict(model, data)
    part_aux = None
    if cfg.aux_mode is not AuxMode.NONE:
        part_aux = weighted_cross_entropy(logits, data.aux_labels, task.weights)
    loss = combined_loss(ccc_loss(vad, data.vad), part_aux, epoch, cfg.schedule)
    report = make_report(vad, data.vad, logits, data.aux_labels, model.cfg.n_regions)
    return loss.value, report


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_ccc_loss: float
    train_aux_loss: Optional[float]
    val_loss: float
    weight: float
    report: EvalReport


@dataclass
class FitResult:
    best_model: Model
    best_epoch: int
    best_val_loss: float
    history: List[EpochRecord]
    final_model: Model


def fit(
    model: Model,
    train_set,
    val_set,
    cfg: TrainConfig,
    checkpoint_path=None,
    meta: Optional[dict] = None,
    state: Optional[TrainState] = None,
) -> FitResult:
    """Train for ``cfg.epochs`` and keep the lowest-validation-loss weights.

    ``train_set``/``val_set`` are Datasets with loaded features, or a prepared
    Task passed as ``train_set`` with ``val_set=None``. When
    ``checkpoint_path`` is given the checkpoint is rewritten every time the
    validation loss strictly improves.
    """
    task = train_set if isinstance(train_set, Task) else prepare_task(train_set, val_set, cfg)
    if model.cfg.n_regions != task.n_classes:
        raise ConfigurationError(
            f"model has {model.cfg.n_regions} classes, task has {task.n_classes}"
        )
    state = state or TrainState.fresh(cfg.seed)
    meta = dict(meta or {})
    if task.class_names is not None:
        meta.setdefault("class_names", task.class_names)
    history, best, best_epoch = [], None, -1
    for _ in range(cfg.epochs):
        stats = train_epoch(model, task, cfg, state)
        val_loss, report = evaluate(model, task, task.val, stats.epoch, cfg)
        history.append(EpochRecord(
            stats.epoch, stats.loss, stats.ccc_loss, stats.aux_loss, val_loss, stats.weight, report
        ))
        log.info(
            "epoch %d train %.5f val %.5f ccc %.4f", stats.epoch, stats.loss, val_loss, report.ccc_mean
        )
        if val_loss < state.best_val_loss:
            state.best_val_loss = val_loss
            best, best_epoch = model.copy(), stats.epoch
            if checkpoint_path is not None:
                try:
                    checkpoint.save(checkpoint_path, best, meta)
                except OSError as exc:
                    raise TrainingError(f"could not write checkpoint {checkpoint_path}: {exc}") from exc
    if best is None:
        best, best_epoch = model.copy(), history[-1].epoch
    return FitResult(best, best_epoch, state.best_val_loss, history, model)


def _fmt(x) -> str:
    return "nan" if x is None else repr(float(x))


def format_history(history: Sequence[EpochRecord]) -> str:
    """Tab-separated log, one row per epoch, floats at full precision."""
    lines = ["\t".join(HISTORY_COLUMNS)]
    for h in history:
        r = h.report
        row = [str(h.epoch)] + [_fmt(x) for x in (
            h.train_loss, h.train_ccc_loss, h.train_aux_loss, h.val_loss, h.weight,
            r.ccc_v, r.ccc_a, r.ccc_d, r.ccc_mean, r.macro_f1, r.accuracy,
        )]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
