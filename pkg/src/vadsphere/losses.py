"""Training objectives: weighted cross-entropy, CCC loss and the decay schedule.

Every loss returns its value together with the analytic gradient with respect
to the network output it consumes.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError

__all__ = [
    "CCC_EPS",
    "ClassWeights",
    "LossValue",
    "ScheduleConfig",
    "CombinedLoss",
    "inverse_frequency_weights",
    "uniform_weights",
    "weighted_cross_entropy",
    "ccc",
    "ccc_loss",
    "lambda_schedule",
    "combined_loss",
]

CCC_EPS = 1e-8


@dataclass(frozen=True)
class ClassWeights:
    w: np.ndarray
    counts: np.ndarray


@dataclass
class LossValue:
    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class ScheduleConfig:
    """Linear decay of the auxiliary weight, zero from ``cutoff_epoch`` on.

    With ``enabled=False`` the auxiliary weight stays at 1 for every epoch.
    """

    decay_slope: float = 0.99 / 5
    cutoff_epoch: int = 5
    enabled: bool = True

    def __post_init__(self):
        if self.cutoff_epoch < 0:
            raise ConfigurationError("cutoff_epoch must be >= 0")


@dataclass
class CombinedLoss:
    value: float
    ccc_value: float
    aux_value: Optional[float]
    weight: float
    grad_vad: np.ndarray
    grad_logits: Optional[np.ndarray]


def inverse_frequency_weights(counts, n: Optional[int] = None) -> ClassWeights:
    """Per-class weights proportional to 1/count, rescaled to mean 1.

    Empty classes are treated as if they had a single sample.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if n is None:
        n = counts.shape[0]
    if n < 1 or counts.shape != (n,):
        raise ConfigurationError(f"expected {n} counts, got shape {counts.shape}")
    if np.any(counts < 0):
        raise ConfigurationError("counts must be non-negative")
    if not counts.any():
        raise ConfigurationError("all class counts are zero")
    raw = 1.0 / np.maximum(counts, 1).astype(np.float64)
    return ClassWeights(w=raw / raw.mean(), counts=counts)


def uniform_weights(n: int) -> ClassWeights:
    return ClassWeights(w=np.ones(n), counts=np.zeros(n, dtype=np.int64))


def weighted_cross_entropy(logits, targets, weights) -> LossValue:
    """Batch mean of ``-w[y] * log_softmax(logits)[y]``.

    ``weights`` is a ClassWeights or a plain array of length N.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    w = weights.w if isinstance(weights, ClassWeights) else np.asarray(weights, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (B, N), got {logits.shape}")
    batch, n = logits.shape
    if batch < 1:
        raise DomainError("empty batch")
    if targets.shape != (batch,):
        raise ShapeError(f"targets shape {targets.shape} does not match batch {batch}")
    if w.shape != (n,):
        raise ShapeError(f"weights shape {w.shape} does not match {n} classes")
    if np.any(targets < 0) or np.any(targets >= n):
        raise IndexError(f"target index outside [0, {n})")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(batch)
    wy = w[targets]
    value = float(-(wy * log_p[rows, targets]).sum() / batch)

    grad = np.exp(log_p)
    grad[rows, targets] -= 1.0
    grad *= (wy / batch)[:, None]
    return LossValue(value, grad)


def _ccc_parts(pred, target):
    mu_p = pred.mean(axis=0)
    mu_t = target.mean(axis=0)
    dp = pred - mu_p
    dt = target - mu_t
    cov = (dp * dt).mean(axis=0)
    var_p = (dp * dp).mean(axis=0)
    var_t = (dt * dt).mean(axis=0)
    den = var_t + var_p + (mu_t - mu_p) ** 2 + CCC_EPS
    return 2.0 * cov / den, cov, den, dp, dt, mu_p, mu_t


def ccc(pred, target) -> float:
    """Concordance correlation coefficient with population statistics."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise DomainError(f"ccc needs equal-length vectors, got {pred.shape} and {target.shape}")
    if pred.shape[0] < 2:
        raise DomainError("ccc needs at least 2 samples")
    return float(_ccc_parts(pred, target)[0])


def ccc_loss(pred, target) -> LossValue:
    """Mean over columns of ``1 - CCC`` computed across the batch axis."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} must match as (B, D)")
    batch, dims = pred.shape
    if batch < 2:
        raise DomainError("ccc_loss needs a batch of at least 2")
    values, cov, den, dp, dt, mu_p, mu_t = _ccc_parts(pred, target)
    # d CCC / d pred, per column
    d_cov = dt / batch
    d_den = (2.0 * dp - 2.0 * (mu_t - mu_p)) / batch
    d_ccc = (2.0 * d_cov * den - 2.0 * cov * d_den) / den ** 2
    value = float(np.mean(1.0 - values))
    return LossValue(value, -d_ccc / dims)


def lambda_schedule(epoch: int, cfg: ScheduleConfig = ScheduleConfig()) -> float:
    if epoch < 0:
        raise DomainError(f"epoch must be >= 0, got {epoch}")
    if not cfg.enabled:
        return 1.0
    if epoch >= cfg.cutoff_epoch:
        return 0.0
    return 1.0 - cfg.decay_slope * epoch


def combined_loss(
    ccc_part: LossValue,
    aux_part: Optional[LossValue],
    epoch: int,
    cfg: ScheduleConfig = ScheduleConfig(),
) -> CombinedLoss:
    """CCC loss plus the scheduled auxiliary term.

    ``aux_part=None`` disables the auxiliary task entirely. When the schedule
    weight is zero the auxiliary term is skipped, so the total equals the CCC
    loss bit for bit and the logits gradient is exactly zero.
    """
    if aux_part is None:
        return CombinedLoss(ccc_part.value, ccc_part.value, None, 0.0, ccc_part.grad, None)
    lam = lambda_schedule(epoch, cfg)
    if lam == 0.0:
        return CombinedLoss(
            ccc_part.value, ccc_part.value, aux_part.value, 0.0,
            ccc_part.grad, np.zeros_like(aux_part.grad),
        )
    return CombinedLoss(
        ccc_part.value + lam * aux_part.value,
        ccc_part.value,
        aux_part.value,
        lam,
        ccc_part.grad,
        lam * aux_part.grad,
    )
