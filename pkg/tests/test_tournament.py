from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from dicelab.dice import doubled_margins
from dicelab.errors import MethodUnavailable, TooLarge
from dicelab.patterns import canonical, get_pattern
from dicelab.rng import substream
from dicelab.sampling import BALANCED, MULTISET, sample_counts
from dicelab.tournament import (
    ExperimentConfig,
    coarse_fraction,
    enumerate_exact,
    margin_ks_distance,
    model_scale,
    pool_tie_rate,
    run_experiment,
    tie_rate_curve,
)


class TestCensus:
    def test_multiset_n4(self):
        c = enumerate_exact(MULTISET, 4)
        assert len(c.weights) == 5 and c.total_weight == 5
        assert c.table.shape == (5, 5)
        assert np.array_equal(c.table, -c.table.T)

    def test_balanced_n3_all_tie(self):
        c = enumerate_exact(BALANCED, 3)
        assert c.total_weight == 7
        assert np.all(c.table == 0)
        assert c.tie_probability() == 1

    def test_multiset_n2_trivial(self):
        c = enumerate_exact(MULTISET, 2)
        assert len(c.weights) == 1
        assert c.pattern_probabilities(3) == {canonical(int(13), 3)[0]: Fraction(1)}

    def test_too_large(self):
        with pytest.raises(TooLarge):
            enumerate_exact(MULTISET, 9)
        with pytest.raises(TooLarge):
            enumerate_exact(MULTISET, 8).pattern_probabilities(4)

    @pytest.mark.parametrize("model", [MULTISET, BALANCED])
    @pytest.mark.parametrize("n", [4, 5, 6])
    def test_probabilities_sum_to_one(self, model, n):
        p = enumerate_exact(model, n).pattern_probabilities(3)
        assert sum(p.values()) == 1
        assert all(isinstance(v, Fraction) for v in p.values())

    @pytest.mark.parametrize("model", [MULTISET, BALANCED])
    @pytest.mark.parametrize("n", range(1, 9))
    def test_complement_transposes_the_table(self, model, n):
        c = enumerate_exact(model, n)
        ci = c.complement_index()
        assert np.array_equal(c.table[np.ix_(ci, ci)], c.table.T)
        w = np.array(c.weights)
        assert np.array_equal(w[ci], w)

    def test_json(self):
        d = enumerate_exact(MULTISET, 4).to_json()
        assert d["n"] == 4 and len(d["support"]) == 5


class TestExperiment:
    def test_n3_all_ties(self):
        r = run_experiment(ExperimentConfig(model=MULTISET, n=3, m=4, N=500))
        assert r.tie_rate() == 1.0 and len(r.pattern_counts) == 1

    def test_counts_conserved_and_deterministic(self):
        cfg = ExperimentConfig(model=MULTISET, n=20, m=3, N=5003, seed=3, chunk=1000)
        a, b = run_experiment(cfg), run_experiment(cfg)
        assert sum(a.pattern_counts.values()) == 5003
        assert a.pattern_counts == b.pattern_counts and a.tie_pair_count == b.tie_pair_count
        assert np.array_equal(a.margin_samples, b.margin_samples)

    def test_workers_do_not_change_results(self):
        base = dict(model=BALANCED, n=30, m=3, N=3000, seed=4, chunk=500)
        a = run_experiment(ExperimentConfig(**base, workers=1))
        b = run_experiment(ExperimentConfig(**base, workers=2))
        assert a.pattern_counts == b.pattern_counts

    def test_invalid_method(self):
        with pytest.raises(MethodUnavailable):
            run_experiment(ExperimentConfig(model=MULTISET, n=300, N=10, method="exact_dp"))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ExperimentConfig(m=1)
        with pytest.raises(ValueError):
            ExperimentConfig(N=0)

    @pytest.mark.parametrize("model", [MULTISET, BALANCED])
    def test_monte_carlo_agrees_with_census(self, model):
        n, N = 5, 40_000
        exact = enumerate_exact(model, n).pattern_probabilities(3)
        r = run_experiment(ExperimentConfig(model=model, n=n, m=3, N=N, seed=11))
        for code in set(exact) | set(r.pattern_counts):
            p = float(exact.get(code, 0))
            se = math.sqrt(max(p * (1 - p), 1e-12) / N)
            assert abs(r.pattern_counts.get(code, 0) / N - p) <= 4 * se + 1e-12

    def test_labelled_probabilities(self):
        r = run_experiment(ExperimentConfig(model=MULTISET, n=40, m=3, N=20_000, seed=2))
        edge = r.pattern_probability(get_pattern("edge"))
        rev = r.pattern_probability(get_pattern("edge").reversed())
        assert edge == pytest.approx(rev, abs=0.02)
        assert 0 < r.intransitive_fraction() < 1
        js = r.to_json()
        assert sum(p["count"] for p in js["patterns"]) == 20_000


def test_ks_of_identical_samples_is_zero():
    x = np.random.default_rng(0).standard_normal(1000)
    cfg = ExperimentConfig(model=MULTISET, n=10, m=2, N=10)
    assert margin_ks_distance(cfg, 0.5, x, x) == 0.0


def test_model_scales():
    assert model_scale(MULTISET) == 0.5 and model_scale(BALANCED) == 1.0


def test_pool_tie_rate_matches_brute_force():
    n = 12
    c = sample_counts(MULTISET, n, 300, substream(0, "pool"))
    ties, pairs, se = pool_tie_rate(c, block=64)
    brute = 0
    for i in range(300):
        brute += int((doubled_margins(np.repeat(c[i : i + 1], 300 - i - 1, axis=0), c[i + 1 :]) == 0).sum())
    assert ties == brute and pairs == 300 * 299 // 2 and se > 0


def test_tie_rate_n3_is_one():
    rows = tie_rate_curve(MULTISET, [3], 50, seed=0)
    assert rows[0].p_tie == 1.0 and rows[0].n_times_p == 3.0


def test_tie_rate_uses_one_chain_per_die():
    rows = tie_rate_curve(MULTISET, [150], 300, seed=1)
    assert rows[0].pairs == 300 * 299 // 2


def test_coarse_fraction_runs_at_small_n():
    rows = coarse_fraction(MULTISET, [10, 50], 100, seed=0)
    assert [r.n for r in rows] == [10, 50]
    for r in rows:
        assert 0 <= r.fraction <= 1
        assert set(r.condition_rates) == {f"s{i}" for i in range(1, 7)}
        assert r.condition_rates["s2"] == 1.0
