"""Online bagging ensembles: OB, OBASHT, OBAdwin, LBag, ARF and SRP.

Every member owns two deterministic substreams, one for its Poisson weights
and one for structural randomness (feature patches, per-leaf subspaces), so
its evolution depends only on the instances it sees and not on how members
are scheduled across workers.

Training is split into the per-member part (:func:`member_train_batch`, safe
to run concurrently for distinct members) and the serial global step used by
OBAdwin (:func:`obadwin_global_step`).
"""

from __future__ import annotations

import csv
import hashlib
import math
import pickle
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence

from .core import DomainError, Instance, Prediction, RngStream, Schema, argmax_class, poisson_sample
from .drift import AdwinDetector
from .hoeffding import AshtTree, HoeffdingTree

VARIANTS = ("OB", "OBASHT", "OBAdwin", "LBag", "ARF", "SRP")
POISSON_RATE = {"OB": 1.0, "OBASHT": 1.0, "OBAdwin": 1.0, "LBag": 6.0, "ARF": 6.0, "SRP": 6.0}
GLOBAL = -1
WEIGHT_LOG_LENGTH = 100


@dataclass(frozen=True)
class EnsembleConfig:
    variant: str
    m: int = 10
    seed: int = 1
    subspace_fraction: float = 0.6
    grace_period: int = 200
    split_confidence: float = 1e-7
    tie_threshold: float = 0.05
    adwin_delta: float = 0.002
    warning_delta: float = 0.01
    drift_delta: float = 0.001
    asht_rows: int = 10
    error_window: int = 1000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.m < 1:
            raise DomainError("ensemble size must be >= 1")
        if not (0.0 < self.subspace_fraction <= 1.0):
            raise DomainError("subspace_fraction must lie in (0, 1]")

    @property
    def lam(self) -> float:
        return POISSON_RATE[self.variant]


class ChangeEvent(NamedTuple):
    index: int
    member: int  # GLOBAL for ensemble-level events
    kind: str    # "warning" | "drift" | "replacement"


@dataclass
class ChangeLog:
    events: List[ChangeEvent] = field(default_factory=list)

    def extend(self, events: Iterable[ChangeEvent]) -> None:
        for e in events:
            if self.events and e.index < self.events[-1].index:
                raise ValueError("change events must be appended in instance order")
            self.events.append(e)

    def count(self, kind: Optional[str] = None) -> int:
        if kind is None:
            return len(self.events)
        return sum(1 for e in self.events if e.kind == kind)

    def changes_detected(self) -> int:
        """Drift resets of individual members plus global replacements."""
        return sum(1 for e in self.events
                   if e.kind == "drift" or (e.kind == "replacement" and e.member == GLOBAL))

    def __len__(self):
        return len(self.events)

    def __eq__(self, other):
        return isinstance(other, ChangeLog) and self.events == other.events

    def to_rows(self):
        for e in self.events:
            yield (e.index, "GLOBAL" if e.member == GLOBAL else e.member, e.kind)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("instance_index", "member", "kind"))
            w.writerows(self.to_rows())


def srp_make_patch(schema: Schema, rng: RngStream, subspace_fraction: float) -> List[int]:
    if not (0.0 < subspace_fraction <= 1.0):
        raise DomainError("subspace_fraction must lie in (0, 1]")
    n = schema.n_features
    size = min(n, max(2, round(subspace_fraction * n)))
    return sorted(rng.sample(range(n), size))


def arf_subspace_size(n_features: int) -> int:
    if n_features < 1:
        raise DomainError("n_features must be >= 1")
    return max(1, min(n_features, math.ceil(math.sqrt(n_features)) + 1))


def arf_node_subspace(rng: RngStream, n_features: int, candidates: Optional[Sequence[int]] = None) -> List[int]:
    pool = list(range(n_features)) if candidates is None else list(candidates)
    size = min(len(pool), arf_subspace_size(n_features))
    return sorted(rng.sample(pool, size))


class _LeafSubspace:
    __slots__ = ("rng", "n_features")

    def __init__(self, rng: RngStream, n_features: int):
        self.rng = rng
        self.n_features = n_features

    def __call__(self, pool):
        return arf_node_subspace(self.rng, self.n_features, pool)


def asht_size(i: int, m: int, rows: int = 10) -> int:
    return 2 ** ((i * rows) // m)


class Member:
    """One ensemble learner together with its adaptive state."""

    def __init__(self, index: int, config: EnsembleConfig, schema: Schema):
        self.index = index
        self.config = config
        self.schema = schema
        self.weight_rng = RngStream(config.seed, ("weights", index))
        self.aux_rng = RngStream(config.seed, ("structure", index))
        self.feature_subset = None
        if config.variant == "SRP":
            self.feature_subset = srp_make_patch(schema, self.aux_rng, config.subspace_fraction)
        self.learner = self._new_learner()
        self.drift_detector = None
        self.warning_detector = None
        if config.variant == "LBag":
            self.drift_detector = AdwinDetector(config.adwin_delta)
        elif config.variant == "ARF":
            self.drift_detector = AdwinDetector(config.drift_delta)
            self.warning_detector = AdwinDetector(config.warning_delta)
        self.background_learner = None
        self.errors = deque(maxlen=config.error_window)
        self.error_sum = 0
        self.weight_log: List[int] = []
        self._pending_drift = False
        self._pending_warning = False

    def _new_learner(self):
        c = self.config
        kwargs = dict(grace_period=c.grace_period, split_confidence=c.split_confidence,
                      tie_threshold=c.tie_threshold)
        if c.variant == "OBASHT":
            return AshtTree(self.schema, max_split_nodes=asht_size(self.index, c.m, c.asht_rows),
                            **kwargs)
        if c.variant == "ARF":
            sampler = _LeafSubspace(self.aux_rng, self.schema.n_features)
            return HoeffdingTree(self.schema, leaf_subspace=sampler, **kwargs)
        return HoeffdingTree(self.schema, allowed_attributes=self.feature_subset, **kwargs)

    # --- prediction -----------------------------------------------------

    def votes(self, values: Sequence) -> List[float]:
        """Member votes normalised to sum to one (all zero when untrained)."""
        v = self.learner.leaf_for(values).class_counts
        s = sum(v)
        if s > 0.0:
            return [x / s for x in v]
        return [0.0] * len(v)

    @property
    def windowed_error(self) -> float:
        return self.error_sum / len(self.errors) if self.errors else 0.0

    # --- training -------------------------------------------------------

    def draw_weight(self, lam: float) -> int:
        k = poisson_sample(self.weight_rng, lam)
        if len(self.weight_log) < WEIGHT_LOG_LENGTH:
            self.weight_log.append(k)
        return k

    def train_one(self, x: Instance, k: int, correct: bool) -> None:
        """Train on one instance with weight ``k`` and feed its detectors."""
        if k > 0:
            self.learner.learn(x, k)
            if self.background_learner is not None:
                self.background_learner.learn(x, k)
        err = 0 if correct else 1
        if len(self.errors) == self.errors.maxlen:
            self.error_sum -= self.errors[0]
        self.errors.append(err)
        self.error_sum += err
        if self.drift_detector is not None:
            if _increased(self.drift_detector, float(err)):
                self._pending_drift = True
        if self.warning_detector is not None:
            if _increased(self.warning_detector, float(err)):
                self._pending_warning = True

    def end_batch(self, index: int) -> List[ChangeEvent]:
        """Apply change handling deferred to the end of a batch."""
        events: List[ChangeEvent] = []
        variant = self.config.variant
        if self._pending_drift:
            events.append(ChangeEvent(index, self.index, "drift"))
            if variant == "ARF" and self.background_learner is not None:
                self.learner = self.background_learner
                events.append(ChangeEvent(index, self.index, "replacement"))
            else:
                self.learner = self._new_learner()
            self.background_learner = None
            self.drift_detector = AdwinDetector(self.drift_detector.delta)
            if self.warning_detector is not None:
                self.warning_detector = AdwinDetector(self.warning_detector.delta)
        elif self._pending_warning and self.background_learner is None:
            events.append(ChangeEvent(index, self.index, "warning"))
            self.background_learner = self._new_learner()
            self.warning_detector = AdwinDetector(self.warning_detector.delta)
        self._pending_drift = False
        self._pending_warning = False
        return events

    def reset(self) -> None:
        self.learner = self._new_learner()
        self.background_learner = None
        self.errors.clear()
        self.error_sum = 0

    def fingerprint(self) -> str:
        state = (self.learner, self.background_learner, self.drift_detector,
                 self.warning_detector, tuple(self.errors), self.weight_rng.getstate(),
                 self.aux_rng.getstate())
        return hashlib.sha256(pickle.dumps(state, protocol=4)).hexdigest()


def _increased(detector: AdwinDetector, value: float) -> bool:
    """Feed ``value``; True only for a change that raised the error estimate."""
    before = detector.estimate
    return detector.add(value) and detector.estimate > before


def member_train_batch(member: Member, batch: Sequence[Instance], member_labels: Sequence[int],
                       lam: float, start_index: int, trace: Optional[list] = None) -> List[ChangeEvent]:
    """Train one member over a batch, instance by instance, then handle changes.

    ``member_labels`` holds the member's own predictions from the classify
    phase; they drive the member's prequential error detectors.
    """
    for j, x in enumerate(batch):
        k = member.draw_weight(lam)
        if k > 0 and trace is not None:
            trace.append(start_index + j)
        member.train_one(x, k, member_labels[j] == x.label)
    return member.end_batch(start_index + len(batch) - 1)


class Ensemble:
    def __init__(self, config: EnsembleConfig, schema: Schema):
        self.config = config
        self.schema = schema
        self.members = [Member(i, config, schema) for i in range(config.m)]
        self.global_detector = AdwinDetector(config.adwin_delta) if config.variant == "OBAdwin" else None
        self.scaffold_rng = RngStream(config.seed, ("ensemble",))
        self.change_log = ChangeLog()

    @property
    def m(self) -> int:
        return len(self.members)

    @property
    def lam(self) -> float:
        return self.config.lam

    def classify_detailed(self, batch: Sequence[Instance]):
        """Aggregate predictions plus each member's own label per instance.

        Returns ``(predictions, member_labels)`` where ``member_labels[i][j]``
        is member ``i``'s label for ``batch[j]``.
        """
        c = self.schema.n_classes
        n_feat = self.schema.n_features
        members = self.members
        member_labels = [[0] * len(batch) for _ in members]
        predictions = []
        for j, x in enumerate(batch):
            values = x.values
            if len(values) != n_feat:
                raise DomainError(f"instance has {len(values)} values, schema has {n_feat}")
            agg = [0.0] * c
            for i, mem in enumerate(members):
                counts = mem.learner.leaf_for(values).class_counts
                s = 0.0
                best = 0
                best_v = counts[0]
                for ci in range(c):
                    v = counts[ci]
                    s += v
                    if v > best_v:
                        best_v = v
                        best = ci
                if s > 0.0:
                    for ci in range(c):
                        agg[ci] += counts[ci] / s
                member_labels[i][j] = best
            predictions.append(Prediction(tuple(agg)))
        return predictions, member_labels

    def classify(self, batch: Sequence[Instance]) -> List[Prediction]:
        return self.classify_detailed(batch)[0]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for mem in self.members:
            h.update(mem.fingerprint().encode())
        if self.global_detector is not None:
            h.update(pickle.dumps(self.global_detector, protocol=4))
        return h.hexdigest()


def ensemble_classify(ensemble: Ensemble, batch: Sequence[Instance]) -> List[Prediction]:
    if len(batch) == 0:
        raise DomainError("batch must be non-empty")
    return ensemble.classify(batch)


def obadwin_global_step(ensemble: Ensemble, batch_errors: Sequence[int], last_index: int) -> Optional[int]:
    """Feed the ensemble's 0/1 errors to the global detector; replace the worst member on change.

    Returns the index of the replaced member, if any.
    """
    det = ensemble.global_detector
    if det is None:
        return None
    changed = False
    for e in batch_errors:
        if _increased(det, float(e)):
            changed = True
    if not changed:
        return None
    worst = 0
    worst_err = ensemble.members[0].windowed_error
    for i, mem in enumerate(ensemble.members):
        if mem.windowed_error > worst_err:
            worst_err = mem.windowed_error
            worst = i
    ensemble.members[worst].reset()
    ensemble.change_log.extend([ChangeEvent(last_index, GLOBAL, "replacement")])
    return worst
