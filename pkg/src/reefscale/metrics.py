"""Label-quality and student-training metrics over (tile, class) pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from reefscale.errors import DegenerateLabels, EmptyInput, KeyMismatch

MICRO = "micro"
MACRO = "macro"
DEFAULT_KL_EPS = 1e-7
DEFAULT_POSITIVE_THRESHOLD = 0.5


@dataclass(frozen=True)
class PairedScores:
    """Aligned reference and predicted values keyed by (tile_id, class)."""

    keys: tuple[tuple[str, str], ...]
    reference: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        ref = np.asarray(self.reference, dtype=float)
        pred = np.asarray(self.predicted, dtype=float)
        if ref.shape != pred.shape or ref.ndim != 1 or len(self.keys) != len(ref):
            raise ValueError("keys, reference and predicted must be 1-D and equally long")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("duplicate (tile_id, class) keys")
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "predicted", pred)

    def __len__(self):
        return len(self.keys)

    @classmethod
    def from_arrays(cls, reference, predicted) -> "PairedScores":
        ref = np.asarray(reference, dtype=float).ravel()
        keys = tuple((str(i), "") for i in range(len(ref)))
        return cls(keys, ref, np.asarray(predicted, dtype=float).ravel())


def pair_scores(
    reference: Mapping[str, Mapping[str, float]],
    predicted: Mapping[str, Mapping[str, float]],
) -> PairedScores:
    """Align nested {tile_id: {class: value}} maps on the predicted keys.

    Every predicted (tile, class) key must exist in ``reference``; extra
    reference entries are ignored.

    Raises:
        KeyMismatch: naming the first predicted key absent from the reference.
    """
    keys, ref, pred = [], [], []
    for tile_id in sorted(predicted):
        row = predicted[tile_id]
        ref_row = reference.get(tile_id)
        for cls in sorted(row):
            if ref_row is None or cls not in ref_row:
                raise KeyMismatch(f"missing reference for tile {tile_id!r} class {cls!r}")
            keys.append((tile_id, cls))
            ref.append(ref_row[cls])
            pred.append(row[cls])
    return PairedScores(tuple(keys), np.array(ref, dtype=float), np.array(pred, dtype=float))


def _nonempty(pairs: PairedScores) -> None:
    if len(pairs) == 0:
        raise EmptyInput("no (tile, class) pairs to score")


def rmse(pairs: PairedScores) -> float:
    _nonempty(pairs)
    return float(np.sqrt(np.mean((pairs.predicted - pairs.reference) ** 2)))


def mae(pairs: PairedScores) -> float:
    _nonempty(pairs)
    return float(np.mean(np.abs(pairs.predicted - pairs.reference)))


def binary_kl(pairs: PairedScores, epsilon: float = DEFAULT_KL_EPS) -> float:
    """Mean Bernoulli KL(reference || predicted), both clamped to [eps, 1-eps]."""
    _nonempty(pairs)
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must be in (0, 0.5), got {epsilon}")
    p = np.clip(pairs.reference, epsilon, 1.0 - epsilon)
    q = np.clip(pairs.predicted, epsilon, 1.0 - epsilon)
    kl = p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))
    return float(np.mean(kl))


def _auc(labels: np.ndarray, scores: np.ndarray) -> float:
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need positives and negatives, got {n_pos} positive / {n_neg} negative")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(
    pairs: PairedScores,
    positive_threshold: float = DEFAULT_POSITIVE_THRESHOLD,
    averaging: str = MICRO,
) -> float:
    """Mann-Whitney estimate of ROC AUC with tied scores at average rank.

    References >= ``positive_threshold`` are positives. ``micro`` pools all
    pairs; ``macro`` averages per-class AUCs over classes that have both
    positives and negatives.
    """
    _nonempty(pairs)
    labels = pairs.reference >= positive_threshold
    if averaging == MICRO:
        return _auc(labels, pairs.predicted)
    if averaging != MACRO:
        raise ValueError(f"averaging must be 'micro' or 'macro', got {averaging!r}")
    classes = np.array([k[1] for k in pairs.keys])
    aucs = []
    for cls in sorted(set(classes)):
        sel = classes == cls
        lab = labels[sel]
        if lab.all() or not lab.any():
            continue
        aucs.append(_auc(lab, pairs.predicted[sel]))
    if not aucs:
        raise DegenerateLabels("no class has both positive and negative references")
    return float(np.mean(aucs))


def bce_soft_loss(targets: Sequence[float], logits: Sequence[float]) -> float:
    """Mean binary cross-entropy of sigmoid(logits) against soft targets.

    Uses ``max(z, 0) - z * P + log(1 + exp(-|z|))``, which never takes the
    log of a saturated sigmoid.
    """
    p = np.asarray(targets, dtype=float)
    z = np.asarray(logits, dtype=float)
    if p.shape != z.shape:
        raise ValueError(f"targets {p.shape} and logits {z.shape} are not aligned")
    if p.size == 0:
        raise EmptyInput("no targets")
    loss = np.maximum(z, 0.0) - z * p + np.log1p(np.exp(-np.abs(z)))
    return float(np.mean(loss))


def bce_soft_grad(targets: Sequence[float], logits: Sequence[float]) -> np.ndarray:
    """Gradient of :func:`bce_soft_loss` w.r.t. each logit."""
    p = np.asarray(targets, dtype=float)
    z = np.asarray(logits, dtype=float)
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return (sig - p) / p.size


def metric_report(pairs: PairedScores, positive_threshold: float = DEFAULT_POSITIVE_THRESHOLD) -> dict[str, float]:
    """All metrics in a fixed order; AUCs are NaN when undefined."""
    report = {
        "n_pairs": float(len(pairs)),
        "rmse": rmse(pairs),
        "mae": mae(pairs),
        "kl": binary_kl(pairs),
    }
    for mode in (MICRO, MACRO):
        try:
            report[f"auc_{mode}"] = roc_auc(pairs, positive_threshold, mode)
        except DegenerateLabels:
            report[f"auc_{mode}"] = math.nan
    return report


def format_report(report: Mapping[str, float]) -> str:
    lines = []
    for key, value in report.items():
        if key.startswith("n_"):
            lines.append(f"{key}: {int(value)}")
        else:
            lines.append(f"{key}: {value:.10f}")
    return "\n".join(lines) + "\n"
