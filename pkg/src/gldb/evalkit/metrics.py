"""Evaluation subset, confusion-matrix metrics, throughput and degree correlation."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import ConstantSeries, EmptyInput, LengthMismatch, TooFewNormals


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    subset_size: int
    throughput_entries_per_sec: float | None = None

    @property
    def confusion(self) -> tuple[int, int, int, int]:
        return self.tp, self.fp, self.tn, self.fn

    def to_dict(self) -> dict:
        return asdict(self)


def _div(a, b) -> float:
    return a / b if b else 0.0


def compute_metrics(predicted: Sequence[int], truth: Sequence[int], throughput: float | None = None) -> MetricsReport:
    """Anomaly is the positive class; any zero denominator gives 0."""
    if len(predicted) != len(truth):
        raise LengthMismatch(f"{len(predicted)} predictions vs {len(truth)} labels")
    if len(truth) == 0:
        raise EmptyInput("no samples")
    p = np.asarray(predicted, dtype=bool)
    y = np.asarray(truth, dtype=bool)
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    tn = int(np.sum(~p & ~y))
    fn = int(np.sum(~p & y))
    precision = _div(tp, tp + fp)
    recall = _div(tp, tp + fn)
    f1 = _div(2 * precision * recall, precision + recall)
    return MetricsReport(
        accuracy=(tp + tn) / len(y),
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        subset_size=len(y),
        throughput_entries_per_sec=throughput,
    )


def build_eval_subset(truth: Sequence[int], n_normal: int = 50, seed: int = 0) -> list[int]:
    """Positions of every anomaly plus ``n_normal`` random normal entries, sorted."""
    truth = np.asarray(truth)
    pos = np.flatnonzero(truth == 1)
    neg = np.flatnonzero(truth == 0)
    if len(neg) < n_normal:
        raise TooFewNormals(f"need {n_normal} normal entries, have {len(neg)}")
    rng = np.random.default_rng(seed)
    picked = rng.choice(neg, size=n_normal, replace=False) if n_normal else np.array([], dtype=int)
    return sorted(pos.tolist() + picked.tolist())


@dataclass(frozen=True)
class Throughput:
    mean: float
    std: float
    runs: tuple[float, ...]


def measure_throughput(detector: Callable[[Sequence], object], test_log: Sequence, repeats: int = 3) -> Throughput:
    """Entries per second of ``detector(test_log)``; mean and std over ``repeats`` runs."""
    if len(test_log) == 0:
        raise EmptyInput("empty test log")
    rates = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        detector(test_log)
        rates.append(len(test_log) / (time.perf_counter() - t0))
    return Throughput(float(np.mean(rates)), float(np.std(rates)), tuple(rates))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ConstantSeries("need at least two samples")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ConstantSeries("one of the series is constant")
    return float(np.clip(dx @ dy / (sx * sy), -1.0, 1.0))


def degree_accuracy_correlation(degrees: Sequence[int], correct: Sequence[int]) -> float:
    """Pearson r between per-entry event degree and a 0/1 correctness series."""
    return pearson(degrees, correct)
