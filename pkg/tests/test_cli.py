import csv
import json

import pytest

from streambag.cli import main, parse_synthetic, UsageError

SYN = "threshold_concept:n=600,noise=0.1,seed=2"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestParsing:
    def test_inline(self):
        spec = parse_synthetic("abrupt_bernoulli_drift:n=20000,drift_points=5000/10000,noise=0.1")
        assert spec.n == 20000 and spec.drift_points == (5000, 10000) and spec.noise == 0.1

    def test_json(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"generator": "agrawal_like", "n": 50}))
        assert parse_synthetic(str(p)).generator == "agrawal_like"

    def test_unknown_generator(self):
        with pytest.raises(UsageError):
            parse_synthetic("spiral:n=10")


class TestExitCodes:
    def test_unknown_algorithm(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--algo", "Boost", "--synthetic", SYN, "--out-dir", str(tmp_path)])
        assert exc.value.code == 2

    def test_unknown_dataset(self, tmp_path):
        assert main(["eval", "--dataset", str(tmp_path / "nope.arff"), "--out-dir", str(tmp_path)]) == 2

    def test_bad_env_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("STREAMBAG_THREADS", "many")
        assert main(["eval", "--synthetic", SYN, "--out-dir", str(tmp_path)]) == 2

    def test_data_error(self, tmp_path):
        bad = tmp_path / "bad.arff"
        bad.write_text("@relation r\n@attribute a numeric\n@attribute y {0,1}\n@data\n?,1\n")
        assert main(["eval", "--dataset", str(bad), "--algo", "OB", "--batch-size", "1",
                     "--ensemble-size", "2", "--out-dir", str(tmp_path)]) == 3


class TestBench:
    def test_sequential_self_baseline(self, tmp_path):
        code = main(["bench", "--algo", "OB", "--synthetic", SYN, "--ensemble-size", "3",
                     "--batch-size", "1", "--mode", "sequential", "--reps", "2",
                     "--out-dir", str(tmp_path)])
        assert code == 0
        assert [float(r["speedup"]) for r in rows(tmp_path / "bench_summary.csv")] == [1.0]

    def test_rep_accounting(self, tmp_path):
        main(["bench", "--algo", "LBag", "--synthetic", SYN, "--ensemble-size", "4",
              "--batch-size", "1", "--batch-size", "50", "--threads", "2", "--reps", "3",
              "--out-dir", str(tmp_path)])
        raw = [r for r in rows(tmp_path / "bench_timings.csv") if r["phase"] == "total"]
        for b in ("1", "50"):
            cell = [r for r in raw if r["b"] == b and r["threads"] == "2"]
            assert sorted(r["rep"] for r in cell) == ["0", "1", "2", "mean"]
        summary = json.loads((tmp_path / "bench_summary.json").read_text())
        assert len(summary["cells"]) == 2

    def test_env_threads_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("STREAMBAG_THREADS", "3")
        main(["bench", "--algo", "OB", "--synthetic", SYN, "--ensemble-size", "2",
              "--batch-size", "10", "--reps", "1", "--out-dir", str(tmp_path)])
        assert rows(tmp_path / "bench_summary.csv")[0]["threads"] == "3"


class TestRd:
    def test_default_files(self, tmp_path):
        assert main(["rd", "--n", "200", "--ensemble-size", "20", "--out-dir", str(tmp_path)]) == 0
        for b in (1, 10, 50, 100, 250):
            assert (tmp_path / f"rd_b{b}.csv").exists()

    def test_full_training_single_batch(self, tmp_path):
        main(["rd", "--n", "30", "--ensemble-size", "5", "--batch-size", "30", "--full-training",
              "--out-dir", str(tmp_path)])
        table = rows(tmp_path / "rd_b30.csv")
        assert table[0]["bin_lo"] == "1" and table[0]["count"] == str(30 * 5 - 5)
        assert table[-1]["bin_lo"] == "inf" and table[-1]["count"] == "5"
        assert table[0]["closed_form_total"] == str(5 * (5 + 30 - 1))

    def test_lambda_effect(self, tmp_path):
        main(["rd", "--algo", "OB", "--n", "500", "--ensemble-size", "30", "--batch-size", "50",
              "--out-dir", str(tmp_path / "l1")])
        main(["rd", "--algo", "LBag", "--n", "500", "--ensemble-size", "30", "--batch-size", "50",
              "--out-dir", str(tmp_path / "l6")])
        f1 = float(rows(tmp_path / "l1" / "rd_b50.csv")[0]["fraction"])
        f6 = float(rows(tmp_path / "l6" / "rd_b50.csv")[0]["fraction"])
        assert f1 < f6


class TestEval:
    def test_outputs_reproducible(self, tmp_path):
        args = ["eval", "--algo", "LBag", "--algo", "OB", "--synthetic",
                "abrupt_bernoulli_drift:n=800,drift_points=400,noise=0.05",
                "--ensemble-size", "3", "--batch-size", "1", "--batch-size", "100"]
        main(args + ["--out-dir", str(tmp_path / "a")])
        main(args + ["--out-dir", str(tmp_path / "b")])
        for name in ("metrics.csv", "metrics.json", "change_counts.csv", "changes_LBag_b1.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        counts = rows(tmp_path / "a" / "change_counts.csv")
        assert {r["algorithm"] for r in counts} == {"LBag"}

    def test_b1_row_matches_sequential(self, tmp_path):
        from streambag.datasets import generate
        from streambag.ensembles import Ensemble, EnsembleConfig
        from streambag.evaluation import prequential_run
        from streambag.executor import ExecConfig
        main(["eval", "--algo", "LBag", "--synthetic", SYN, "--ensemble-size", "3",
              "--batch-size", "1", "--out-dir", str(tmp_path)])
        row = rows(tmp_path / "metrics.csv")[0]
        spec = parse_synthetic(SYN)
        schema, it = generate(spec)
        base = prequential_run(Ensemble(EnsembleConfig("LBag", m=3, seed=1), schema), it,
                               ExecConfig("sequential"))
        assert float(row["accuracy"]) == base.accuracy
        assert float(row["precision"]) == base.precision
