"""Precision/recall curves, average-precision AUC and top-k metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ScoredLabel:
    score: float
    positive: bool
    id: str = ""

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValidationError(f"non-finite score for item {self.id!r}")


@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray
    recall: np.ndarray
    precision: np.ndarray

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.recall.tolist(), self.precision.tolist()))


def scored(scores: Sequence[float], labels: Sequence[bool], ids: Sequence[str] | None = None) -> list[ScoredLabel]:
    if len(scores) != len(labels):
        raise ValidationError("scores and labels differ in length")
    ids = ids if ids is not None else [f"{i:09d}" for i in range(len(scores))]
    return [ScoredLabel(float(s), bool(y), str(i)) for s, y, i in zip(scores, labels, ids)]


def pr_curve(items: Sequence[ScoredLabel]) -> PRCurve:
    """One point per distinct score; tied items enter the prediction set together."""
    scores = np.array([it.score for it in items], dtype=np.float64)
    labels = np.array([it.positive for it in items], dtype=bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValidationError("precision/recall undefined without positive items")
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    last_of_group = np.r_[scores[1:] != scores[:-1], True]
    tp = np.cumsum(labels)[last_of_group]
    predicted = np.flatnonzero(last_of_group) + 1
    return PRCurve(scores[last_of_group], tp / n_pos, tp / predicted)


def pr_auc(curve: PRCurve) -> float:
    """Average precision: sum of recall increments times the precision where they occur."""
    delta = np.diff(np.r_[0.0, curve.recall])
    return float(np.sum(delta * curve.precision))


def average_precision(scores: Sequence[float], labels: Sequence[bool]) -> float:
    return pr_auc(pr_curve(scored(scores, labels)))


def _ordered(items: Sequence[ScoredLabel]) -> list[ScoredLabel]:
    return sorted(items, key=lambda it: (-it.score, it.id))


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")


def precision_at_k(items: Sequence[ScoredLabel], k: int) -> float:
    _check_k(k, len(items))
    return sum(it.positive for it in _ordered(items)[:k]) / k


def recall_at_k(items: Sequence[ScoredLabel], k: int) -> float:
    _check_k(k, len(items))
    total = sum(it.positive for it in items)
    if total == 0:
        raise ValidationError("recall undefined without positive items")
    return sum(it.positive for it in _ordered(items)[:k]) / total


def precision_of_ranked(flags: Sequence[bool], k: int) -> float:
    """Precision of the first ``k`` entries of an already ordered ranking."""
    _check_k(k, len(flags))
    return sum(bool(f) for f in flags[:k]) / k


def recall_of_ranked(flags: Sequence[bool], k: int) -> float:
    _check_k(k, len(flags))
    total = sum(bool(f) for f in flags)
    if total == 0:
        raise ValidationError("recall undefined without positive items")
    return sum(bool(f) for f in flags[:k]) / total


def random_baseline(items: Sequence[ScoredLabel], k: int, trials: int = 10, seed: int = 0) -> float:
    """Mean precision@k over ``trials`` uniform shuffles."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    _check_k(k, len(items))
    flags = np.array([it.positive for it in items], dtype=bool)
    rng = np.random.default_rng(seed)
    return float(np.mean([flags[rng.permutation(len(flags))[:k]].mean() for _ in range(trials)]))


def summary(items: Sequence[ScoredLabel], ks: Sequence[int] = (10, 50, 100)) -> dict[str, float]:
    out = {"auc": pr_auc(pr_curve(items))}
    for k in ks:
        if k <= len(items):
            out[f"p@{k}"] = precision_at_k(items, k)
    return out


def write_curve_csv(path, curve: PRCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "recall", "precision"])
        for t, r, p in curve.points():
            writer.writerow([repr(t), repr(r), repr(p)])
