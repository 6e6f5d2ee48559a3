"""End-to-end runs: generate, split, inject, train, detect, score."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConstantSeries
from ..logmodel import AnomalyLabel, LogEntry, split_train_test
from ..neural.model import ModelConfig
from ..pipeline import Checkpoint, EntryVerdict, TrainConfig, detect_online, train_online
from .inject import InjectionConfig, InjectionKind, inject, truth_vector
from .metrics import MetricsReport, Throughput, build_eval_subset, compute_metrics, degree_accuracy_correlation, measure_throughput
from .synthetic import SyntheticLogConfig, generate_synthetic

log = logging.getLogger(__name__)


def entry_predictions(verdicts: Sequence[EntryVerdict], kind: InjectionKind) -> list[int]:
    """Entry-level calls: any flagged link (object anomalies) or the event verdict."""
    if InjectionKind(kind) is InjectionKind.OBJECT_SWAP:
        return [int(any(lp.anomaly_flag for lp in v.link_predictions)) for v in verdicts]
    return [int(v.event_anomaly == 1) for v in verdicts]


def entry_correctness(verdicts: Sequence[EntryVerdict], entries: Sequence[LogEntry], kind: InjectionKind) -> list[int]:
    """Event runs compare the event verdict; object runs need every link flag right."""
    out = []
    for v, e in zip(verdicts, entries):
        lab = e.label or AnomalyLabel()
        if InjectionKind(kind) is InjectionKind.EVENT_SWAP:
            out.append(int(int(v.event_anomaly == 1) == int(lab.event_label == 1)))
        else:
            objs = lab.object_labels or {}
            out.append(int(all(lp.anomaly_flag == objs.get(lp.object, 0) for lp in v.link_predictions)))
    return out


def link_labels(verdict: EntryVerdict, entry: LogEntry) -> list[int]:
    lab = entry.label or AnomalyLabel()
    if lab.event_label == 1:
        return [1] * len(verdict.link_predictions)
    objs = lab.object_labels or {}
    return [objs.get(lp.object, 0) for lp in verdict.link_predictions]


def score_histogram(verdicts: Sequence[EntryVerdict], entries: Sequence[LogEntry], bins: int = 20) -> list[dict]:
    """Link-score counts per bin, split into normal and anomalous links."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    scores = {0: [], 1: []}
    for v, e in zip(verdicts, entries):
        for lp, y in zip(v.link_predictions, link_labels(v, e)):
            scores[y].append(lp.score)
    rows = []
    for y, name in ((0, "normal"), (1, "anomalous")):
        counts, _ = np.histogram(scores[y], bins=edges)
        rows += [{"bin": f"{edges[i]:.2f}-{edges[i + 1]:.2f}", "count": int(c), "class": name} for i, c in enumerate(counts)]
    return rows


def write_histogram_csv(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["bin", "count", "class"])
        w.writeheader()
        w.writerows(rows)


@dataclass
class ExperimentResult:
    kind: str
    metrics: MetricsReport
    correlation: float | None
    throughput: Throughput
    train_seconds: float
    detect_seconds: float
    verdicts: list[EntryVerdict]
    test_log: list[LogEntry]
    subset: list[int]
    checkpoint: Checkpoint
    config_echo: dict = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "metrics": self.metrics.to_dict(),
            "correlation": self.correlation,
            "throughput": {"mean": self.throughput.mean, "std": self.throughput.std},
            "train_seconds": self.train_seconds,
            "detect_seconds": self.detect_seconds,
            "config_echo": self.config_echo,
        }


def evaluate(
    verdicts: Sequence[EntryVerdict],
    test_log: Sequence[LogEntry],
    kind: InjectionKind,
    n_normal: int = 50,
    seed: int = 0,
    throughput: float | None = None,
):
    """Metrics on the subset of every anomaly plus ``n_normal`` normal entries."""
    truth = truth_vector(test_log, kind)
    pred = entry_predictions(verdicts, kind)
    subset = build_eval_subset(truth, n_normal, seed)
    metrics = compute_metrics([pred[i] for i in subset], [truth[i] for i in subset], throughput)
    degrees = [len(v.link_predictions) for v in verdicts]
    try:
        corr = degree_accuracy_correlation(degrees, entry_correctness(verdicts, test_log, kind))
    except ConstantSeries:
        corr = None
    return metrics, subset, corr


def run_synthetic_experiment(
    seed: int,
    synth: SyntheticLogConfig | None = None,
    injection_kind: InjectionKind = InjectionKind.OBJECT_SWAP,
    rate: float = 0.05,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    model_kind: str = "gnn",
    train_fraction: float = 0.9,
    n_normal: int = 50,
    throughput_repeats: int = 3,
) -> ExperimentResult:
    """Seed drives the generator, the injector, training and the subset draw."""
    synth = synth or SyntheticLogConfig()
    synth = SyntheticLogConfig(**{**synth.to_dict(), "objects_per_entry": tuple(synth.objects_per_entry), "seed": seed})
    tc = train_config or TrainConfig()
    tc = TrainConfig(**{**tc.to_dict(), "seed": seed})
    full = generate_synthetic(synth)
    train, test = split_train_test(full, train_fraction)
    injected = inject(full, InjectionConfig(rate, injection_kind, seed), start=len(train))
    test = injected[len(train) :]

    t0 = time.perf_counter()
    ckpt = train_online(train, model_config, tc, kind=model_kind)
    train_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    verdicts, _ = detect_online(test, ckpt)
    detect_s = time.perf_counter() - t0
    tp = measure_throughput(lambda xs: detect_online(xs, ckpt), test, repeats=throughput_repeats)
    metrics, subset, corr = evaluate(verdicts, test, injection_kind, n_normal, seed, tp.mean)
    log.info("%s seed %d %s: F1 %.4f (train %.0fs)", model_kind, seed, InjectionKind(injection_kind).value, metrics.f1, train_s)
    echo = {
        "seed": seed,
        "synthetic": synth.to_dict(),
        "injection": InjectionConfig(rate, injection_kind, seed).to_dict(),
        "model_kind": model_kind,
        "model_config": ckpt.model_config.to_dict(),
        "train_config": tc.to_dict(),
        "train_fraction": train_fraction,
        "n_normal": n_normal,
    }
    return ExperimentResult(model_kind, metrics, corr, tp, train_s, detect_s, verdicts, test, subset, ckpt, echo)


def write_report(result: ExperimentResult, path) -> None:
    Path(path).write_text(json.dumps(result.report(), indent=2, sort_keys=True) + "\n")
