"""Biometric evaluation metrics: AUC, EER threshold, HTER, TPR@FPR.

Conventions (fixed so results are deterministic):
  - scores are real-class probabilities; labels 1=real (positive), 0=spoof
  - a spoof sample is falsely accepted when score >= threshold (FAR uses >=)
  - a real sample is falsely rejected when score < threshold
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata


class SingleClassError(ValueError):
    """Threshold metrics are undefined when only one class is present."""


@dataclass
class ScoreSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.scores.ndim != 1 or self.scores.shape != self.labels.shape:
            raise ValueError("scores and labels must be equal-length vectors")
        if self.scores.size < 1:
            raise ValueError("empty score set")
        if not np.isfinite(self.scores).all():
            raise ValueError("non-finite scores")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0/1")

    @property
    def real(self) -> np.ndarray:
        return self.scores[self.labels == 1]

    @property
    def spoof(self) -> np.ndarray:
        return self.scores[self.labels == 0]

    def require_both_classes(self):
        if self.real.size == 0 or self.spoof.size == 0:
            raise SingleClassError("both classes required")


def auc(score_set: ScoreSet) -> float:
    """Probability a random real sample outscores a random spoof; ties count 1/2."""
    score_set.require_both_classes()
    n_real = score_set.real.size
    n_spoof = score_set.spoof.size
    ranks = rankdata(score_set.scores, method="average")
    rank_sum = ranks[score_set.labels == 1].sum()
    return float((rank_sum - n_real * (n_real + 1) / 2.0) / (n_real * n_spoof))


def far_frr(score_set: ScoreSet, threshold: float) -> tuple[float, float]:
    far = float(np.mean(score_set.spoof >= threshold))
    frr = float(np.mean(score_set.real < threshold))
    return far, frr


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct scores, with +-inf sentinels."""
    distinct = np.unique(scores)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate(([-math.inf], mids, [math.inf]))


def eer_threshold(score_set: ScoreSet) -> tuple[float, float]:
    """Threshold minimizing |FAR - FRR|; ties resolved toward the lower one.

    Returns (threshold, eer) with eer = (FAR + FRR)/2 at that threshold.
    """
    score_set.require_both_classes()
    candidates = candidate_thresholds(score_set.scores)
    far = (score_set.spoof[None, :] >= candidates[:, None]).mean(axis=1)
    frr = (score_set.real[None, :] < candidates[:, None]).mean(axis=1)
    best = int(np.argmin(np.abs(far - frr)))  # argmin takes the first = lowest
    return float(candidates[best]), float((far[best] + frr[best]) / 2.0)


def hter(score_set: ScoreSet, threshold: float) -> float:
    score_set.require_both_classes()
    far, frr = far_frr(score_set, threshold)
    return (far + frr) / 2.0


def roc_vertices(score_set: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    """ROC operating points sweeping thresholds over distinct scores.

    Tied scores form a single vertex. Returns (fpr, tpr) arrays starting at
    (0, 0) and ending at (1, 1), monotone non-decreasing.
    """
    score_set.require_both_classes()
    thresholds = np.unique(score_set.scores)[::-1]
    fpr = [0.0]
    tpr = [0.0]
    for t in thresholds:
        fpr.append(float(np.mean(score_set.spoof >= t)))
        tpr.append(float(np.mean(score_set.real >= t)))
    return np.array(fpr), np.array(tpr)


def tpr_at_fpr(score_set: ScoreSet, fpr_target: float) -> float:
    """Highest TPR with FPR <= target, interpolating between ROC vertices."""
    if not 0.0 < fpr_target < 1.0:
        raise ValueError("fpr_target must be in (0, 1)")
    fpr, tpr = roc_vertices(score_set)
    # collapse vertical segments: keep the highest TPR at each distinct FPR
    best: dict[float, float] = {}
    for f, t in zip(fpr, tpr):
        best[f] = max(best.get(f, 0.0), t)
    xs = np.array(sorted(best))
    ys = np.array([best[x] for x in xs])
    return float(np.interp(fpr_target, xs, ys))


def operating_threshold(score_set: ScoreSet, rule: str = "eer") -> float:
    if rule == "eer":
        return eer_threshold(score_set)[0]
    if rule == "fixed":
        return 0.5
    raise ValueError(f"unknown threshold rule {rule!r}")


@dataclass
class MetricsReport:
    scenario: str
    hter: float
    auc: float
    tpr_at_fpr1: float
    threshold: float

    def row(self) -> str:
        return (f"{self.scenario:<24s} {self.hter * 100:8.2f} {self.auc * 100:8.2f} "
                f"{self.tpr_at_fpr1 * 100:12.2f}")


def summarize(score_set: ScoreSet, scenario: str, threshold_rule: str = "eer") -> MetricsReport:
    thr = operating_threshold(score_set, threshold_rule)
    return MetricsReport(
        scenario=scenario,
        hter=hter(score_set, thr),
        auc=auc(score_set),
        tpr_at_fpr1=tpr_at_fpr(score_set, 0.01),
        threshold=thr,
    )


def format_report(reports: list[MetricsReport]) -> str:
    lines = [f"{'scenario':<24s} {'HTER%':>8s} {'AUC%':>8s} {'TPR@FPR=1%':>12s}"]
    lines += [r.row() for r in reports]
    if len(reports) > 1:
        avg = MetricsReport(
            scenario="average",
            hter=float(np.mean([r.hter for r in reports])),
            auc=float(np.mean([r.auc for r in reports])),
            tpr_at_fpr1=float(np.mean([r.tpr_at_fpr1 for r in reports])),
            threshold=float("nan"),
        )
        lines.append(avg.row())
    return "\n".join(lines) + "\n"


SCORE_FIELDS = ("sample_id", "score", "label", "domain")


def save_scores(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SCORE_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in SCORE_FIELDS})


def load_scores(path: str | Path) -> tuple[list[dict], ScoreSet | None]:
    """Read a score CSV; the ScoreSet is None when labels are absent."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    labels = [r.get("label", "") for r in rows]
    if any(l == "" for l in labels):
        return rows, None
    return rows, ScoreSet(np.array([float(r["score"]) for r in rows]),
                          np.array([int(r["label"]) for r in rows]))
