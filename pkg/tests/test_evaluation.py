import pytest

from streambag.core import DomainError
from streambag.datasets import SyntheticSpec, generate
from streambag.ensembles import Ensemble, EnsembleConfig
from streambag.evaluation import (ConfusionMatrix, MetricsReport, batch_size_sweep,
                                  change_count_sweep, metric_spread, prequential_run,
                                  write_metrics_csv)
from streambag.executor import ExecConfig


@pytest.fixture(scope="module")
def data():
    schema, it = generate(SyntheticSpec("abrupt_bernoulli_drift", 3000, noise=0.05,
                                        drift_points=(1500,), seed=2))
    return schema, list(it)


class TestConfusion:
    def test_perfect(self):
        cm = ConfusionMatrix(3)
        cm.update([0, 1, 2, 1], [0, 1, 2, 1])
        assert cm.macro_precision() == cm.macro_recall() == cm.accuracy() == 1.0

    def test_constant_classifier(self):
        cm = ConfusionMatrix(2)
        cm.update([0, 1] * 50, [0] * 100)
        assert cm.accuracy() == 0.5
        assert cm.macro_recall() == 0.5
        assert cm.macro_precision() == 0.25

    def test_accuracy_is_trace_over_total(self):
        cm = ConfusionMatrix(3)
        cm.update([0, 1, 2, 2, 1, 0, 0], [0, 2, 2, 1, 1, 1, 0])
        assert cm.total == 7
        assert cm.accuracy() == pytest.approx(sum(cm.counts[i][i] for i in range(3)) / 7)

    def test_negative_weight(self):
        with pytest.raises(DomainError):
            ConfusionMatrix(2).add(0, 0, -1)


class TestReport:
    def test_bounds(self):
        with pytest.raises(DomainError):
            MetricsReport(1.2, 0.5, 0.5, 0, 10)

    def test_csv(self, tmp_path):
        row = MetricsReport(0.5, 0.5, 0.5, 2, 10, 25).row()
        row.update(algorithm="OB", dataset="syn", seed=1)
        write_metrics_csv(tmp_path / "m.csv", [row])
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0].startswith("algorithm,dataset,batch_size,seed")
        assert lines[1] == "OB,syn,25,1,0.5,0.5,0.5,2,10"


class TestPrequential:
    def test_b1_matches_sequential(self, data):
        schema, stream = data
        cfg = EnsembleConfig("LBag", m=5, seed=3)
        a = prequential_run(Ensemble(cfg, schema), stream, ExecConfig("sequential"))
        b = prequential_run(Ensemble(cfg, schema), stream, ExecConfig("minibatch", 2, 1))
        assert a == b

    def test_purity_check(self, data):
        schema, stream = data
        rep = prequential_run(Ensemble(EnsembleConfig("ARF", m=3), schema), stream[:600],
                              ExecConfig("minibatch", 1, 50), check_purity=True)
        assert rep.total == 600

    def test_purity_needs_minibatch(self, data):
        schema, stream = data
        with pytest.raises(DomainError):
            prequential_run(Ensemble(EnsembleConfig("OB", m=2), schema), stream[:10],
                            ExecConfig("sequential"), check_purity=True)


class TestSweeps:
    def test_single_size_equals_baseline(self, data):
        schema, stream = data
        cfg = EnsembleConfig("OB", m=4, seed=1)
        table = batch_size_sweep(cfg, schema, stream, [1])
        base = prequential_run(Ensemble(cfg, schema), stream, ExecConfig("sequential"))
        assert list(table) == [1] and table[1] == base

    def test_same_weights_across_sizes(self, data):
        schema, stream = data
        table = batch_size_sweep(EnsembleConfig("SRP", m=3, seed=4), schema, stream, [1, 10, 100])
        logs = [r.weight_logs for r in table.values()]
        assert logs[0] == logs[1] == logs[2]
        assert all(len(log) == 100 for log in logs[0])

    def test_factory_source(self, data):
        schema, _ = data
        spec = SyntheticSpec("threshold_concept", 400, seed=1)
        table = batch_size_sweep(EnsembleConfig("OB", m=2), schema, lambda: generate(spec)[1], [5, 50])
        assert all(r.total == 400 for r in table.values())

    def test_empty_sizes(self, data):
        schema, stream = data
        with pytest.raises(DomainError):
            batch_size_sweep(EnsembleConfig("OB", m=2), schema, stream, [])

    def test_change_counts_variant_guard(self, data):
        schema, stream = data
        with pytest.raises(DomainError):
            change_count_sweep(EnsembleConfig("ARF", m=2), schema, stream, [1])

    def test_stationary_counts_near_zero(self):
        schema, it = generate(SyntheticSpec("threshold_concept", 4000, noise=0.05, seed=6))
        stream = list(it)
        counts = change_count_sweep(EnsembleConfig("LBag", m=4, seed=2), schema, stream, [1, 100])
        assert all(c <= 4 for c in counts.values())

    def test_drift_counts(self, data):
        schema, stream = data
        counts = change_count_sweep(EnsembleConfig("LBag", m=4, seed=2), schema, stream, [1, 1000])
        assert counts[1] >= 4
        assert counts[1000] <= counts[1]

    def test_spread(self):
        reps = {1: MetricsReport(0.9, 0.9, 0.90, 0, 10), 2: MetricsReport(0.8, 0.8, 0.85, 0, 10)}
        assert metric_spread(reps) == pytest.approx(0.05)
        assert metric_spread(reps, "precision") == pytest.approx(0.1)
