from __future__ import annotations

import math

import numpy as np
import pytest

from dicelab.errors import TruncationTooSmall, WitnessSearchFailed
from dicelab.kernel import LimitSpectrum
from dicelab.limit import (
    LimitConfig,
    ProbabilityEstimate,
    alpha_estimate,
    digraph_probability,
    full_reversal_check,
    h_from_gaussians,
    limit_pair_samples,
    relabel_check,
    sample_h,
    simulate_tally,
    single_mode_alpha,
    truncation,
    vertex_flip_check,
    witness_digraph,
)
from dicelab.patterns import DigraphPattern, get_pattern
from dicelab.rng import substream

# a short harmonic spectrum, treated as exact, keeps these tests fast
HARMONIC = LimitSpectrum.exact(0.16 / np.arange(1, 41))


def test_h_is_skew():
    g = np.random.default_rng(0).standard_normal((50, 4, 80))
    h = h_from_gaussians(g, HARMONIC.sigmas)
    assert np.array_equal(h, -np.transpose(h, (0, 2, 1)))
    assert np.all(np.diagonal(h, axis1=1, axis2=2) == 0)


def test_sample_h_fields():
    s = sample_h(3, HARMONIC, 40, substream(0, "s"), None)
    assert s.h.shape == (3, 3) and s.L == 40 and s.tail_variance == 0.0


def test_pair_variance():
    h = limit_pair_samples(100_000, HARMONIC, 1, LimitConfig(L=40, tail_budget=None))
    target = 2 * float((HARMONIC.sigmas**2).sum())
    # Var(H^2) = E H^4 - target^2, estimated from the sample itself
    se = math.sqrt(np.var(h**2) / h.size)
    assert abs(np.mean(h**2) - target) < 3 * se
    assert abs(np.mean(h > 0) - 0.5) < 4 * math.sqrt(0.25 / h.size)


def test_truncation_budget():
    wide = LimitSpectrum(0.16 / np.arange(1, 21), np.zeros(20), (1, 2))
    with pytest.raises(TruncationTooSmall):
        truncation(wide, 20, 1e-3)
    sig, tail = truncation(HARMONIC, 10, None)
    assert sig.size == 10 and tail == pytest.approx(2 * float((HARMONIC.sigmas[10:] ** 2).sum()))


def test_probability_estimate():
    e = ProbabilityEstimate.from_count(250, 1000)
    assert e.p_hat == 0.25
    assert e.ci95_halfwidth == pytest.approx(1.96 * math.sqrt(0.25 * 0.75 / 1000))


def test_tally_matches_direct_count():
    # the direct route draws for pattern.m players, so compare against a tally on that many
    cfg = LimitConfig(L=40, tail_budget=None, chunk=700)
    for name in ("edge", "cycle3", "tournament3_transitive", "path3"):
        pat = get_pattern(name)
        tally = simulate_tally(pat.m, 5000, HARMONIC, 3, cfg)
        assert tally.counts.sum() == 5000
        direct = digraph_probability(pat, 5000, 40, HARMONIC, 3, cfg)
        assert direct.count == tally.event_count(pat)


def test_all_three_player_tournaments_equally_likely():
    tally = simulate_tally(3, 60_000, HARMONIC, 4, LimitConfig(L=40, tail_budget=None))
    probs = [tally.probability(DigraphPattern(3, ((a, b), (c, d), (e, f)))).p_hat
             for (a, b) in ((1, 2), (2, 1)) for (c, d) in ((2, 3), (3, 2)) for (e, f) in ((1, 3), (3, 1))]
    se = math.sqrt(0.125 * 0.875 / 60_000)
    assert all(abs(p - 0.125) < 4 * se for p in probs)


def test_workers_do_not_change_results():
    a = simulate_tally(3, 3000, HARMONIC, 5, LimitConfig(L=40, tail_budget=None, chunk=500, workers=1))
    b = simulate_tally(3, 3000, HARMONIC, 5, LimitConfig(L=40, tail_budget=None, chunk=500, workers=2))
    assert np.array_equal(a.counts, b.counts)


class TestSymmetries:
    @pytest.mark.parametrize("v", [1, 2, 3])
    def test_vertex_flip(self, v):
        r = vertex_flip_check(get_pattern("cycle3"), v, 4000, 40, HARMONIC, 7, tail_budget=None)
        assert r.counts_equal and r.mismatches == 0

    def test_full_reversal(self):
        r = full_reversal_check(get_pattern("cycle4"), 4000, 40, HARMONIC, 8, tail_budget=None)
        assert r.counts_equal and r.mismatches == 0

    def test_relabel(self):
        r = relabel_check(get_pattern("path3"), (3, 1, 4, 2), 4000, 40, HARMONIC, 9, tail_budget=None)
        assert r.counts_equal and r.mismatches == 0

    def test_forest_flip_near_two_to_minus_e(self):
        pat = get_pattern("path2")
        r = vertex_flip_check(pat, 2, 40_000, 40, HARMONIC, 10, tail_budget=None)
        for est in (r.original, r.transformed):
            assert abs(est.p_hat - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 40_000)


class TestAlpha:
    def test_single_mode_closed_form(self):
        lim = LimitSpectrum.exact([0.1])
        a = alpha_estimate(lim, 1, 400_000, 0, tail_budget=None)
        assert single_mode_alpha(0.1) == 1.25
        assert a.alpha == pytest.approx(1.25, rel=0.01)
        assert abs(a.alpha - 1.25) < 4 * a.stderr

    def test_homogeneity(self):
        a = alpha_estimate(HARMONIC, 40, 50_000, 1, tail_budget=None)
        b = alpha_estimate(HARMONIC.scaled(2.0), 40, 50_000, 1, tail_budget=None)
        assert b.alpha * 2 == pytest.approx(a.alpha, rel=1e-12)

    def test_more_modes_never_increase_the_estimate(self):
        small = alpha_estimate(HARMONIC, 10, 20_000, 2, tail_budget=None)
        large = alpha_estimate(HARMONIC, 40, 20_000, 2, tail_budget=None)
        assert large.alpha <= small.alpha
        assert large.alpha >= small.alpha - small.truncation_bias * 3

    def test_no_anomalies(self):
        assert alpha_estimate(HARMONIC, 40, 20_000, 3, tail_budget=None).anomalies == 0


class TestWitness:
    @pytest.mark.parametrize("pattern", ["edge", "cycle3", "cycle5", "tournament3_transitive"])
    def test_builtin(self, pattern):
        w = witness_digraph(get_pattern(pattern), HARMONIC)
        for j, k in w.pattern.zero_based():
            assert w.sample.h[j, k] > 0

    def test_six_cycle(self):
        six = DigraphPattern(6, tuple((i, i % 6 + 1) for i in range(1, 7)))
        w = witness_digraph(six, HARMONIC)
        assert all(w.sample.h[j, k] > 0 for j, k in six.zero_based())

    def test_needs_enough_modes(self):
        six = DigraphPattern(6, tuple((i, i % 6 + 1) for i in range(1, 7)))
        with pytest.raises(WitnessSearchFailed):
            witness_digraph(six, HARMONIC, L=3)
