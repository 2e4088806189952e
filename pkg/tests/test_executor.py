import json
import math
import threading
import time

import pytest

from streambag.core import DomainError
from streambag.datasets import SyntheticSpec, generate
from streambag.ensembles import Ensemble, EnsembleConfig
from streambag.executor import (ExecConfig, ExecutionError, WorkerPool, pool_execute, run,
                                run_minibatch, run_parallel_per_instance, run_sequential)


@pytest.fixture(scope="module")
def drift_stream():
    schema, it = generate(SyntheticSpec("abrupt_bernoulli_drift", 2000, noise=0.1,
                                        drift_points=(1000,), seed=9))
    return schema, list(it)


def fresh(schema, variant="LBag", m=6, seed=1):
    return Ensemble(EnsembleConfig(variant, m=m, seed=seed), schema)


class TestConfig:
    def test_validation(self):
        with pytest.raises(DomainError):
            ExecConfig("turbo")
        with pytest.raises(DomainError):
            ExecConfig("minibatch", num_threads=0)
        with pytest.raises(DomainError):
            ExecConfig("minibatch", batch_size=0)


class TestSequential:
    def test_empty_stream(self, drift_stream):
        schema, _ = drift_stream
        res = run_sequential(fresh(schema), [])
        assert res.predictions == [] and len(res.change_log) == 0

    def test_single_instance_trace(self, drift_stream):
        schema, data = drift_stream
        ens = fresh(schema, "OB", m=3)
        for mem in ens.members:
            mem.draw_weight = lambda lam: 1
        res = run_sequential(ens, data[:1], record_trace=True)
        assert res.trace.events == [0, 1, 2]

    def test_repeatable(self, drift_stream):
        schema, data = drift_stream
        a = run_sequential(fresh(schema, "ARF"), data)
        b = run_sequential(fresh(schema, "ARF"), data)
        assert a.predictions == b.predictions and a.change_log == b.change_log

    def test_json_export(self, drift_stream):
        schema, data = drift_stream
        res = run_sequential(fresh(schema, "LBag"), data[:200])
        d = json.loads(res.to_json())
        assert len(d["predictions"]) == 200 and "total" in d["timing"]


class TestEquivalence:
    @pytest.mark.parametrize("variant", ["OB", "OBASHT", "OBAdwin", "LBag", "ARF", "SRP"])
    def test_ladder(self, variant, drift_stream):
        schema, data = drift_stream
        seq = run_sequential(fresh(schema, variant), data)
        ppi = run_parallel_per_instance(fresh(schema, variant), data, threads=4)
        mb = run_minibatch(fresh(schema, variant), data, 1, threads=3)
        assert seq.predictions == ppi.predictions == mb.predictions
        assert seq.change_log == ppi.change_log == mb.change_log

    def test_single_thread_pool(self, drift_stream):
        schema, data = drift_stream
        a = run_sequential(fresh(schema), data)
        b = run_parallel_per_instance(fresh(schema), data, threads=1)
        assert a.predictions == b.predictions

    def test_minibatch_threads_do_not_matter(self, drift_stream):
        schema, data = drift_stream
        a = run_minibatch(fresh(schema, "SRP"), data, 50, threads=1)
        b = run_minibatch(fresh(schema, "SRP"), data, 50, threads=5)
        assert a.predictions == b.predictions and a.change_log == b.change_log

    def test_dispatch(self, drift_stream):
        schema, data = drift_stream
        a = run(fresh(schema), data[:300], ExecConfig("minibatch", 2, 30))
        b = run_minibatch(fresh(schema), data[:300], 30, 2)
        assert a.predictions == b.predictions


class TestMinibatch:
    def test_remainder_batches(self, drift_stream):
        schema, data = drift_stream
        res = run_minibatch(fresh(schema, "OB", m=2), data[:7], 3, record_fingerprints=True)
        assert len(res.predictions) == 7
        assert len(res.fingerprints) == 3

    def test_table_trace(self, drift_stream):
        schema, data = drift_stream
        ens = fresh(schema, "OB", m=4)
        for mem in ens.members:
            mem.draw_weight = lambda lam: 1
        res = run_minibatch(ens, data[:6], 3, threads=2, record_trace=True)
        assert res.trace.events == ([0] * 3 + [1] * 3 + [2] * 3 + [3] * 3) * 2
        assert res.worker_traces[0] == [(0, 0), (0, 1), (0, 2), (2, 0), (2, 1), (2, 2),
                                        (0, 3), (0, 4), (0, 5), (2, 3), (2, 4), (2, 5)]

    def test_deferred_training(self, drift_stream):
        schema, data = drift_stream
        res = run_minibatch(fresh(schema, "ARF"), data[:1000], 100, threads=2,
                            record_fingerprints=True)
        for k in range(1, len(res.fingerprints)):
            assert res.fingerprints[k][0] == res.fingerprints[k - 1][1]
            assert res.fingerprints[k][0] != res.fingerprints[k][1]

    def test_switch_count(self, drift_stream):
        schema, data = drift_stream
        n, m, b = 500, 5, 40
        ens = fresh(schema, "OB", m=m)
        for mem in ens.members:
            mem.draw_weight = lambda lam: 2
        res = run_minibatch(ens, data[:n], b, record_trace=True)
        assert res.trace.switches() == m * math.ceil(n / b)

    def test_trace_accounting(self, drift_stream):
        schema, data = drift_stream
        ens = fresh(schema, "LBag", m=100)
        # the first 100 weights of every member are logged
        res = run_parallel_per_instance(ens, data[:100], threads=8, record_trace=True)
        for mem in ens.members:
            trained = [j for j, k in enumerate(mem.weight_log) if k > 0]
            seen = [idx for wt in res.worker_traces for (i, idx) in wt if i == mem.index]
            assert seen == trained

    def test_trace_csv(self, drift_stream, tmp_path):
        schema, data = drift_stream
        res = run_minibatch(fresh(schema, "OB", m=3), data[:20], 5, threads=2, record_trace=True)
        path = tmp_path / "trace.csv"
        res.write_trace_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "worker_id,member_id,instance_index"
        assert len(lines) - 1 == len(res.trace)


class TestPool:
    def test_no_tasks(self):
        assert pool_execute([], 4) == []

    def test_each_task_once(self):
        counter = [0]
        lock = threading.Lock()

        def make(i):
            def t():
                with lock:
                    counter[0] += 1
                return i
            return t

        with WorkerPool(8) as pool:
            out = pool.execute([make(i) for i in range(100)])
        assert counter[0] == 100 and out == list(range(100))

    def test_sleep_parallelism(self):
        tasks = [lambda: time.sleep(0.01) for _ in range(100)]
        t = time.perf_counter()
        pool_execute(tasks, 8)
        assert time.perf_counter() - t < 100 * 0.01 / 4

    def test_failure_aborts(self):
        def boom():
            raise RuntimeError("bad member")
        with pytest.raises(ExecutionError, match="bad member"):
            pool_execute([boom, lambda: 1], 2)

    def test_pinning_is_best_effort(self):
        assert pool_execute([lambda: 3] * 4, 2, pin_cores=True) == [3, 3, 3, 3]
