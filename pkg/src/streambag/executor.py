"""Sequential, per-instance parallel and mini-batch parallel execution.

All three strategies drive the same ensemble operations and differ only in
how instances are grouped and how member training is distributed:

* ``sequential``: classify one instance, then train members in index order.
* ``parallel_per_instance``: classify and draw weights serially, train the
  members of that single instance on the worker pool, handle changes serially.
* ``minibatch``: buffer ``b`` instances, classify the buffer against the frozen
  ensemble, then each worker trains its members over the whole buffer
  (member-outer, instance-inner).

Members are assigned statically to workers (member ``i`` to worker
``i % threads``).  A worker owns its members exclusively for the duration of a
training phase, so no locks guard member state.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence

from .core import DomainError, Instance, argmax_class
from .ensembles import ChangeLog, Ensemble, member_train_batch, obadwin_global_step
from .locality import AccessTrace

log = logging.getLogger(__name__)

MODES = ("sequential", "parallel_per_instance", "minibatch")


class ExecutionError(RuntimeError):
    """A worker task failed; the run was aborted."""


@dataclass(frozen=True)
class ExecConfig:
    mode: str = "sequential"
    num_threads: int = 1
    batch_size: int = 1
    pin_cores: bool = False
    record_trace: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.num_threads < 1:
            raise DomainError("num_threads must be >= 1")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")


@dataclass
class RunResult:
    predictions: List[int]
    change_log: ChangeLog
    timing: Dict[str, float]
    trace: Optional[AccessTrace] = None
    worker_traces: Optional[List[List[tuple]]] = None
    fingerprints: Optional[List[tuple]] = None

    def to_json(self) -> str:
        return json.dumps({
            "predictions": self.predictions,
            "timing": self.timing,
            "changes": [list(r) for r in self.change_log.to_rows()],
        })

    def write_trace_csv(self, path) -> None:
        """Rows of (worker_id, member_id, instance_index)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("worker_id", "member_id", "instance_index"))
            for wid, rows in enumerate(self.worker_traces or []):
                for member, idx in rows:
                    w.writerow((wid, member, idx))


# --- worker pool ------------------------------------------------------------

def _pin_current_thread(slot: int) -> None:
    try:
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpus[slot % len(cpus)]})
    except (AttributeError, OSError) as exc:  # not available everywhere
        log.debug("core pinning unavailable: %s", exc)


class WorkerPool:
    """Fixed-size fork/join pool; one task per worker per phase."""

    def __init__(self, num_threads: int, pin_cores: bool = False):
        if num_threads < 1:
            raise DomainError("num_threads must be >= 1")
        self.num_threads = num_threads
        self._executor = None
        if num_threads > 1:
            counter = iter(range(num_threads))
            lock = threading.Lock()

            def init():
                if pin_cores:
                    with lock:
                        slot = next(counter)
                    _pin_current_thread(slot)

            self._executor = ThreadPoolExecutor(num_threads, thread_name_prefix="trainer",
                                                initializer=init)

    def execute(self, tasks: Sequence[Callable[[], object]]) -> list:
        """Run every task and wait for all of them (join)."""
        if not tasks:
            return []
        if self._executor is None:
            return [_guarded(t) for t in tasks]
        futures = [self._executor.submit(_guarded, t) for t in tasks]
        return [f.result() for f in futures]

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _guarded(task):
    try:
        return task()
    except Exception as exc:  # surface the failing task
        raise ExecutionError(f"worker task {getattr(task, '__name__', task)!r} failed: {exc!r}") from exc


def pool_execute(tasks: Sequence[Callable[[], object]], threads: int, pin_cores: bool = False) -> list:
    with WorkerPool(threads, pin_cores) as pool:
        return pool.execute(tasks)


# --- runs -------------------------------------------------------------------

class _Recorder:
    def __init__(self, ensemble: Ensemble, threads: int, enabled: bool):
        self.enabled = enabled
        self.threads = threads
        self.merged: List[int] = []
        self.workers: List[List[tuple]] = [[] for _ in range(threads)]
        self.per_member: List[Optional[list]] = [[] if enabled else None for _ in ensemble.members]

    def flush(self) -> None:
        """Move this phase's member buffers into the merged and per-worker traces."""
        if not self.enabled:
            return
        for i, buf in enumerate(self.per_member):
            if buf:
                self.merged.extend([i] * len(buf))
                self.workers[i % self.threads].extend((i, idx) for idx in buf)
                buf.clear()

    def result(self, m: int):
        if not self.enabled:
            return None, None
        return AccessTrace(self.merged, m), self.workers


def _worker_tasks(ensemble: Ensemble, threads: int, body: Callable[[int], list]):
    tasks = []
    for w in range(min(threads, ensemble.m)):
        owned = range(w, ensemble.m, threads)

        def task(owned=owned):
            out = []
            for i in owned:
                out.append((i, body(i)))
            return out

        task.__name__ = f"trainer-{w}"
        tasks.append(task)
    return tasks


def _gather_events(results: list) -> list:
    per_member = {}
    for chunk in results:
        for i, events in chunk:
            per_member[i] = events
    return [e for i in sorted(per_member) for e in per_member[i]]


def run_minibatch(ensemble: Ensemble, stream: Iterable[Instance], batch_size: int,
                  threads: int = 1, pin_cores: bool = False, record_trace: bool = False,
                  record_fingerprints: bool = False) -> RunResult:
    if batch_size < 1:
        raise DomainError("batch_size must be >= 1")
    lam = ensemble.lam
    members = ensemble.members
    predictions: List[int] = []
    timing = {"classify": 0.0, "train": 0.0, "change": 0.0}
    rec = _Recorder(ensemble, threads, record_trace)
    fingerprints = [] if record_fingerprints else None
    position = 0
    t_start = time.perf_counter()
    with WorkerPool(threads, pin_cores) as pool:
        buffer: List[Instance] = []

        def process(batch):
            nonlocal position
            t0 = time.perf_counter()
            before = ensemble.fingerprint() if record_fingerprints else None
            preds, member_labels = ensemble.classify_detailed(batch)
            labels = [argmax_class(p) for p in preds]
            predictions.extend(labels)
            t1 = time.perf_counter()
            start = position

            def body(i):
                return member_train_batch(members[i], batch, member_labels[i], lam, start,
                                          rec.per_member[i])

            results = pool.execute(_worker_tasks(ensemble, threads, body))
            t2 = time.perf_counter()
            ensemble.change_log.extend(_gather_events(results))
            rec.flush()
            if ensemble.global_detector is not None:
                errors = [int(labels[j] != batch[j].label) for j in range(len(batch))]
                obadwin_global_step(ensemble, errors, start + len(batch) - 1)
            position += len(batch)
            t3 = time.perf_counter()
            timing["classify"] += t1 - t0
            timing["train"] += t2 - t1
            timing["change"] += t3 - t2
            if fingerprints is not None:
                fingerprints.append((before, ensemble.fingerprint()))

        for x in stream:
            buffer.append(x)
            if len(buffer) == batch_size:
                process(buffer)
                buffer = []
        if buffer:
            process(buffer)
    timing["total"] = time.perf_counter() - t_start
    trace, workers = rec.result(ensemble.m)
    return RunResult(predictions, ensemble.change_log, timing, trace, workers, fingerprints)


def run_sequential(ensemble: Ensemble, stream: Iterable[Instance],
                   record_trace: bool = False) -> RunResult:
    """One instance at a time: classify, train members in index order, handle changes."""
    lam = ensemble.lam
    members = ensemble.members
    predictions: List[int] = []
    timing = {"classify": 0.0, "train": 0.0, "change": 0.0}
    rec = _Recorder(ensemble, 1, record_trace)
    t_start = time.perf_counter()
    for idx, x in enumerate(stream):
        t0 = time.perf_counter()
        preds, member_labels = ensemble.classify_detailed((x,))
        label = argmax_class(preds[0])
        predictions.append(label)
        t1 = time.perf_counter()
        events = []
        for i, mem in enumerate(members):
            k = mem.draw_weight(lam)
            if k > 0 and record_trace:
                rec.per_member[i].append(idx)
            mem.train_one(x, k, member_labels[i][0] == x.label)
        t2 = time.perf_counter()
        for mem in members:
            events.extend(mem.end_batch(idx))
        ensemble.change_log.extend(events)
        rec.flush()
        if ensemble.global_detector is not None:
            obadwin_global_step(ensemble, [int(label != x.label)], idx)
        t3 = time.perf_counter()
        timing["classify"] += t1 - t0
        timing["train"] += t2 - t1
        timing["change"] += t3 - t2
    timing["total"] = time.perf_counter() - t_start
    trace, workers = rec.result(ensemble.m)
    return RunResult(predictions, ensemble.change_log, timing, trace, workers)


def run_parallel_per_instance(ensemble: Ensemble, stream: Iterable[Instance], threads: int = 1,
                              pin_cores: bool = False, record_trace: bool = False) -> RunResult:
    """Classify and draw weights serially, train members in parallel, detect changes serially."""
    lam = ensemble.lam
    members = ensemble.members
    predictions: List[int] = []
    timing = {"classify": 0.0, "weights": 0.0, "train": 0.0, "change": 0.0}
    rec = _Recorder(ensemble, threads, record_trace)
    t_start = time.perf_counter()
    with WorkerPool(threads, pin_cores) as pool:
        for idx, x in enumerate(stream):
            t0 = time.perf_counter()
            preds, member_labels = ensemble.classify_detailed((x,))
            label = argmax_class(preds[0])
            predictions.append(label)
            t1 = time.perf_counter()
            weights = [mem.draw_weight(lam) for mem in members]
            t2 = time.perf_counter()

            def body(i, x=x, weights=weights, member_labels=member_labels, idx=idx):
                k = weights[i]
                if k > 0 and record_trace:
                    rec.per_member[i].append(idx)
                members[i].train_one(x, k, member_labels[i][0] == x.label)
                return []

            pool.execute(_worker_tasks(ensemble, threads, body))
            t3 = time.perf_counter()
            events = []
            for mem in members:
                events.extend(mem.end_batch(idx))
            ensemble.change_log.extend(events)
            rec.flush()
            if ensemble.global_detector is not None:
                obadwin_global_step(ensemble, [int(label != x.label)], idx)
            t4 = time.perf_counter()
            timing["classify"] += t1 - t0
            timing["weights"] += t2 - t1
            timing["train"] += t3 - t2
            timing["change"] += t4 - t3
    timing["total"] = time.perf_counter() - t_start
    trace, workers = rec.result(ensemble.m)
    return RunResult(predictions, ensemble.change_log, timing, trace, workers)


def run(ensemble: Ensemble, stream: Iterable[Instance], config: ExecConfig) -> RunResult:
    if config.mode == "sequential":
        return run_sequential(ensemble, stream, record_trace=config.record_trace)
    if config.mode == "parallel_per_instance":
        return run_parallel_per_instance(ensemble, stream, config.num_threads,
                                         config.pin_cores, config.record_trace)
    return run_minibatch(ensemble, stream, config.batch_size, config.num_threads,
                         config.pin_cores, config.record_trace)
