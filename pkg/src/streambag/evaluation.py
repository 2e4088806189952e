"""Prequential evaluation: confusion matrices, macro metrics and batch-size sweeps."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

from .core import DomainError, Instance, Schema
from .ensembles import Ensemble, EnsembleConfig
from .executor import ExecConfig, run, run_minibatch


class ConfusionMatrix:
    """Tallies of (true class, predicted class)."""

    def __init__(self, n_classes: int):
        if n_classes < 1:
            raise DomainError("n_classes must be >= 1")
        self.n_classes = n_classes
        self.counts = [[0] * n_classes for _ in range(n_classes)]
        self.total = 0

    def add(self, true: int, predicted: int, weight: int = 1) -> None:
        if weight < 0:
            raise DomainError("weight must be non-negative")
        self.counts[true][predicted] += weight
        self.total += weight

    def update(self, truths: Iterable[int], predictions: Iterable[int]) -> None:
        for t, p in zip(truths, predictions):
            self.add(t, p)

    def accuracy(self) -> float:
        if not self.total:
            return 0.0
        return sum(self.counts[i][i] for i in range(self.n_classes)) / self.total

    def precision(self, c: int) -> float:
        col = sum(row[c] for row in self.counts)
        return self.counts[c][c] / col if col else 0.0

    def recall(self, c: int) -> float:
        row = sum(self.counts[c])
        return self.counts[c][c] / row if row else 0.0

    # undefined per-class values count as 0 and every declared class is averaged
    def macro_precision(self) -> float:
        return sum(self.precision(c) for c in range(self.n_classes)) / self.n_classes

    def macro_recall(self) -> float:
        return sum(self.recall(c) for c in range(self.n_classes)) / self.n_classes


@dataclass
class MetricsReport:
    precision: float
    recall: float
    accuracy: float
    changes_detected: int
    total: int
    batch_size: Optional[int] = None
    weight_logs: Optional[List[List[int]]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("precision", "recall", "accuracy"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"{name} {v} outside [0, 1]")

    def row(self) -> dict:
        d = asdict(self)
        d.pop("weight_logs")
        return d

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, changes: int, batch_size=None, weight_logs=None):
        return cls(cm.macro_precision(), cm.macro_recall(), cm.accuracy(), changes, cm.total,
                   batch_size, weight_logs)


ReportRow = dict
METRIC_FIELDS = ("algorithm", "dataset", "batch_size", "seed", "precision", "recall",
                 "accuracy", "changes_detected", "total")


def write_metrics_csv(path, rows: Sequence[ReportRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def write_metrics_json(path, rows: Sequence[ReportRow]) -> None:
    with open(path, "w") as fh:
        json.dump(list(rows), fh, indent=2)


class _LabelTap:
    """Pass instances through while keeping their labels."""

    def __init__(self, stream: Iterable[Instance]):
        self.stream = stream
        self.labels: List[int] = []

    def __iter__(self):
        for x in self.stream:
            self.labels.append(x.label)
            yield x


def prequential_run(ensemble: Ensemble, stream: Iterable[Instance], exec_config: ExecConfig,
                    check_purity: bool = False) -> MetricsReport:
    """Test-then-train over the whole stream.

    With ``check_purity`` (mini-batch mode only) every batch is classified
    against exactly the state left by the previous batch's training, which is
    verified by hashing the ensemble before and after each phase.
    """
    tap = _LabelTap(stream)
    if check_purity:
        if exec_config.mode != "minibatch":
            raise DomainError("purity check requires the minibatch executor")
        result = run_minibatch(ensemble, tap, exec_config.batch_size, exec_config.num_threads,
                               exec_config.pin_cores, record_fingerprints=True)
        fps = result.fingerprints
        for k in range(1, len(fps)):
            if fps[k][0] != fps[k - 1][1]:
                raise AssertionError(f"batch {k} was classified against a modified ensemble")
    else:
        result = run(ensemble, tap, exec_config)
    cm = ConfusionMatrix(ensemble.schema.n_classes)
    cm.update(tap.labels, result.predictions)
    b = exec_config.batch_size if exec_config.mode == "minibatch" else 1
    return MetricsReport.from_confusion(cm, result.change_log.changes_detected(), b,
                                        [list(m.weight_log) for m in ensemble.members])


StreamSource = Union[Sequence[Instance], Callable[[], Iterable[Instance]]]


def _open(source: StreamSource) -> Iterable[Instance]:
    return source() if callable(source) else iter(source)


def batch_size_sweep(config: EnsembleConfig, schema: Schema, stream: StreamSource,
                     sizes: Sequence[int], threads: int = 1) -> Dict[int, MetricsReport]:
    """One fresh ensemble per batch size, all with the same seed.

    ``stream`` is either a materialised sequence or a zero-argument factory
    returning a fresh iterator.  The logged Poisson weights of every member
    must agree across sizes.
    """
    if not sizes:
        raise DomainError("sizes must be non-empty")
    out: Dict[int, MetricsReport] = {}
    reference = None
    for b in sizes:
        ens = Ensemble(config, schema)
        rep = prequential_run(ens, _open(stream), ExecConfig("minibatch", threads, b))
        if reference is None:
            reference = rep.weight_logs
        else:
            n = min(len(reference[0]), len(rep.weight_logs[0])) if reference else 0
            if any(r[:n] != w[:n] for r, w in zip(reference, rep.weight_logs)):
                raise AssertionError(f"weight sequence diverged at batch size {b}")
        out[b] = rep
    return out


def change_count_sweep(config: EnsembleConfig, schema: Schema, stream: StreamSource,
                       sizes: Sequence[int], threads: int = 1) -> Dict[int, int]:
    if config.variant not in ("LBag", "OBAdwin"):
        raise DomainError(f"change counts are defined for LBag and OBAdwin, not {config.variant}")
    reports = batch_size_sweep(config, schema, stream, sizes, threads)
    return {b: r.changes_detected for b, r in reports.items()}


def metric_spread(reports: Dict[int, MetricsReport], metric: str = "accuracy") -> float:
    vals = [getattr(r, metric) for r in reports.values()]
    return max(vals) - min(vals)
