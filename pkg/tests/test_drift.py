import random

import pytest
from hypothesis import given, settings, strategies as st

from streambag.core import DomainError
from streambag.drift import AdwinDetector, adwin_add, adwin_estimate, adwin_width


def check_structure(d: AdwinDetector):
    assert d.width == sum(len(row) << r for r, row in enumerate(d._totals))
    assert all(len(row) <= d.max_buckets for row in d._totals)
    assert d.variance >= 0.0


class TestBasics:
    def test_empty(self):
        d = AdwinDetector()
        assert adwin_width(d) == 0 and adwin_estimate(d) == 0.0

    def test_ones(self):
        d = AdwinDetector()
        for _ in range(4):
            adwin_add(d, 1)
        assert d.estimate == 1.0

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            AdwinDetector().add(1.5)
        with pytest.raises(DomainError):
            AdwinDetector().add(-0.1)

    def test_bad_delta(self):
        with pytest.raises(DomainError):
            AdwinDetector(delta=0.0)

    def test_constant_stream(self):
        d = AdwinDetector()
        assert sum(d.add(0.0) for _ in range(10**5)) == 0
        assert d.width == 10**5

    def test_bernoulli_estimate(self):
        rng = random.Random(6)
        d = AdwinDetector()
        for _ in range(10**4):
            d.add(float(rng.random() < 0.3))
        assert abs(d.estimate - 0.3) <= 0.02


class TestStructure:
    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), max_size=600))
    def test_bucket_invariants(self, values):
        d = AdwinDetector()
        last_width = 0
        for v in values:
            changed = d.add(v)
            check_structure(d)
            if not changed:
                assert d.width == last_width + 1
            last_width = d.width

    def test_matches_exact_window(self):
        rng = random.Random(12)
        d = AdwinDetector()
        shadow = []
        for i in range(10**4):
            v = float(rng.random() < (0.2 if i < 5000 else 0.7))
            d.add(v)
            shadow.append(v)
            # the detector only drops from the old end
            del shadow[:len(shadow) - d.width]
            exact = sum(shadow) / len(shadow)
            assert abs(d.estimate - exact) <= 1e-9 + exact / d.max_buckets
            assert d.total == pytest.approx(sum(shadow), abs=1e-6)

    def test_variance_tracks_window(self):
        rng = random.Random(2)
        d = AdwinDetector()
        vals = [rng.random() for _ in range(2000)]
        for v in vals:
            d.add(v)
        window = vals[-d.width:]
        mean = sum(window) / len(window)
        exact = sum((v - mean) ** 2 for v in window)
        assert d.variance == pytest.approx(exact, rel=1e-6)


class TestDetection:
    def test_abrupt_shift(self):
        hits = 0
        for seed in range(100):
            rng = random.Random(seed)
            d = AdwinDetector(0.002)
            for _ in range(5000):
                d.add(float(rng.random() < 0.2))
            for step in range(500):
                if d.add(float(rng.random() < 0.8)):
                    hits += 1
                    break
        assert hits >= 99

    def test_false_alarm_budget(self):
        rng = random.Random(31)
        d = AdwinDetector(0.002)
        alarms = sum(d.add(float(rng.random() < 0.5)) for _ in range(10**5))
        assert alarms <= 20

    def test_deterministic(self):
        def positions(seed):
            rng = random.Random(seed)
            d = AdwinDetector()
            return [i for i in range(4000) if d.add(float(rng.random() < (0.1 if i < 2000 else 0.6)))]
        assert positions(3) == positions(3)
        assert positions(3)
