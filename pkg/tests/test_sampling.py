from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dicelab.dice import counts_from_faces, target_sum
from dicelab.errors import MethodUnavailable
from dicelab.rng import substream
from dicelab.sampling import (
    BALANCED,
    BALANCED_METHODS,
    MULTISET,
    MULTISET_METHODS,
    SamplerConfig,
    _categorical,
    _randbelow,
    balanced_table,
    multiset_table,
    sample_balanced_sequence,
    sample_counts,
    sample_faces,
    sample_multiset,
)


def enumerate_multisets(n):
    return [c for c in itertools.combinations_with_replacement(range(1, n + 1), n) if sum(c) == target_sum(n)]


def enumerate_sequences(n):
    return [c for c in itertools.product(range(1, n + 1), repeat=n) if sum(c) == target_sum(n)]


def support_weights(model, n):
    """Count vectors with their exact probabilities under the model."""
    rows = enumerate_multisets(n)
    counts = [tuple(np.bincount(np.array(r) - 1, minlength=n)) for r in rows]
    if model == MULTISET:
        w = [1] * len(counts)
    else:
        w = [math.factorial(n) // math.prod(math.factorial(k) for k in c) for c in counts]
    total = sum(w)
    return {c: x / total for c, x in zip(counts, w)}


def chi_square_p(counts: np.ndarray, probs: dict) -> float:
    keys = list(probs)
    index = {k: i for i, k in enumerate(keys)}
    obs = np.zeros(len(keys))
    for row in map(tuple, counts.tolist()):
        obs[index[row]] += 1
    exp = np.array([probs[k] for k in keys]) * counts.shape[0]
    return float(stats.chisquare(obs, exp).pvalue)


class TestTables:
    @pytest.mark.parametrize("n", range(1, 9))
    def test_multiset_count_matches_enumeration(self, n):
        assert multiset_table(n).count() == len(enumerate_multisets(n))

    @pytest.mark.parametrize("n", range(1, 8))
    def test_balanced_count_matches_enumeration(self, n):
        assert balanced_table(n).count() == len(enumerate_sequences(n))

    def test_known_counts(self):
        assert [multiset_table(n).count() for n in range(1, 9)] == [1, 1, 2, 5, 12, 32, 94, 289]
        assert balanced_table(8).count() == 1012664

    def test_large_counts_are_exact_integers(self):
        c = multiset_table(100).count()
        assert isinstance(c, int) and c > 2**63


class TestDegenerate:
    @pytest.mark.parametrize("method", MULTISET_METHODS)
    def test_n1_n2_multiset(self, method):
        rng = substream(0, method)
        assert sample_multiset(1, rng, method).faces.tolist() == [1]
        assert sample_multiset(2, rng, method).faces.tolist() == [1, 2]

    @pytest.mark.parametrize("method", BALANCED_METHODS)
    def test_n2_balanced_is_fair(self, method):
        f = sample_faces(BALANCED, 2, 20000, substream(1, method), method)
        share = np.mean(f[:, 0] == 1)
        assert abs(share - 0.5) < 4 * math.sqrt(0.25 / 20000)

    def test_n100_mean_is_exact(self):
        f = sample_faces(BALANCED, 100, 50, substream(2, "x"))
        assert np.all(f.sum(axis=1) == 5050)


class TestDistributions:
    @pytest.mark.parametrize("method", MULTISET_METHODS)
    def test_multiset_n4_uniform(self, method):
        c = sample_counts(MULTISET, 4, 100_000, substream(3, method), method)
        support = support_weights(MULTISET, 4)
        assert len(support) == 5
        assert chi_square_p(c, support) > 1e-3

    @pytest.mark.parametrize("method", BALANCED_METHODS)
    def test_balanced_n3_uniform_over_seven_sequences(self, method):
        f = sample_faces(BALANCED, 3, 70_000, substream(4, method), method)
        seqs = enumerate_sequences(3)
        assert len(seqs) == 7
        counts = {s: 0 for s in seqs}
        for row in map(tuple, f.tolist()):
            counts[row] += 1
        assert stats.chisquare(list(counts.values())).pvalue > 1e-3

    @pytest.mark.parametrize("model, methods", [(MULTISET, MULTISET_METHODS), (BALANCED, BALANCED_METHODS)])
    def test_n6_every_method_matches_enumeration(self, model, methods):
        support = support_weights(model, 6)
        for method in methods:
            c = sample_counts(model, 6, 100_000, substream(5, f"{model}/{method}"), method)
            assert chi_square_p(c, support) > 1e-3, method

    def test_geometric_rejection_vs_exact_two_sample(self):
        n = 6
        a = sample_counts(MULTISET, n, 100_000, substream(6, "a"), "exact_dp")
        b = sample_counts(MULTISET, n, 100_000, substream(6, "b"), "geometric_rejection")
        keys = sorted(set(map(tuple, a.tolist())) | set(map(tuple, b.tolist())))
        idx = {k: i for i, k in enumerate(keys)}
        table = np.zeros((2, len(keys)))
        for r, arr in enumerate((a, b)):
            for row in map(tuple, arr.tolist()):
                table[r, idx[row]] += 1
        assert stats.chi2_contingency(table).pvalue > 1e-3

    def test_balanced_sequences_are_exchangeable(self):
        f = sample_faces(BALANCED, 8, 40_000, substream(7, "pos"), "exact_dp")
        means = f.mean(axis=0)
        assert np.all(np.abs(means - 4.5) < 0.06)


class TestMethods:
    def test_exact_dp_cap(self):
        with pytest.raises(MethodUnavailable):
            sample_counts(MULTISET, 129, 1, substream(0, "x"), "exact_dp")

    def test_rejection_cap(self):
        with pytest.raises(MethodUnavailable):
            sample_counts(MULTISET, 65, 1, substream(0, "x"), "geometric_rejection")

    def test_wrong_model_method(self):
        with pytest.raises(MethodUnavailable):
            sample_counts(MULTISET, 10, 1, substream(0, "x"), "uniform_rejection")

    def test_config_cap_is_respected(self):
        cfg = SamplerConfig(multiset_exact_dp_max=10)
        with pytest.raises(MethodUnavailable):
            sample_counts(MULTISET, 11, 1, substream(0, "x"), "exact_dp", cfg)

    def test_seeded_determinism(self):
        a = sample_counts(MULTISET, 50, 100, substream(9, "d"))
        b = sample_counts(MULTISET, 50, 100, substream(9, "d"))
        assert np.array_equal(a, b)

    def test_balanced_wrapper_returns_die(self):
        d = sample_balanced_sequence(10, substream(0, "w"))
        assert d.n == 10 and int(d.faces.sum()) == 55


@given(
    n=st.integers(1, 40),
    seed=st.integers(0, 2**31),
    model_method=st.sampled_from([(MULTISET, m) for m in MULTISET_METHODS] + [(BALANCED, m) for m in BALANCED_METHODS]),
)
@settings(max_examples=40, deadline=None)
def test_every_sample_satisfies_die_invariants(n, seed, model_method):
    model, method = model_method
    cfg = SamplerConfig(chains=8, burnin_factor=2)
    f = sample_faces(model, n, 16, substream(seed, "inv"), method, cfg)
    assert f.shape == (16, n)
    assert f.min() >= 1 and f.max() <= n
    assert np.all(f.sum(axis=1) == target_sum(n))
    c = counts_from_faces(f, n)
    assert np.all(c.sum(axis=1) == n)
    if model == MULTISET:
        assert np.all(np.diff(f, axis=1) >= 0)


def test_mcmc_matches_exact_at_moderate_n():
    n = 64
    a = sample_counts(MULTISET, n, 8000, substream(10, "a"), "exact_dp")
    b = sample_counts(MULTISET, n, 8000, substream(10, "b"), "mcmc")
    for stat in (lambda c: c.max(axis=1), lambda c: (c == 0).sum(axis=1), lambda c: c[:, :8].sum(axis=1)):
        assert stats.ks_2samp(stat(a), stat(b)).pvalue > 1e-3



def test_balanced_mcmc_matches_exact_at_moderate_n():
    n = 64
    a = sample_faces(BALANCED, n, 8000, substream(11, "a"), "uniform_rejection")
    b = sample_faces(BALANCED, n, 8000, substream(11, "b"), "mcmc")
    for stat in (lambda f: f[:, 0], lambda f: f.max(axis=1), lambda f: f[:, :8].sum(axis=1)):
        assert stats.ks_2samp(stat(a), stat(b)).pvalue > 1e-3

@given(bound=st.integers(1, 2**200), seed=st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_randbelow_in_range(bound, seed):
    x = _randbelow(np.random.default_rng(seed), bound)
    assert 0 <= x < bound


def test_categorical_big_weights_follow_proportions():
    w = [3 * 2**70, 2**70]
    draws = _categorical(np.random.default_rng(0), w, 20000)
    assert abs(np.mean(draws == 0) - 0.75) < 0.02
