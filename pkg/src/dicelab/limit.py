"""Monte Carlo for the Gaussian limit tournament and the tie constant.

Player j carries 2L independent standard Gaussians split into x_j (odd
slots) and y_j (even slots). The limit margin between j and k is

    H_jk = sum_l sigma_l (x_jl y_kl - y_jl x_kl).

H is formed as P - P^T with P_jk = (x_j * y_k) @ sigma. Forming the
elementwise product first keeps two symmetries bit-exact: negating one
player's Gaussians negates its row of P, and swapping x with y transposes
P.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import TruncationTooSmall, WitnessSearchFailed
from .kernel import LimitSpectrum
from .patterns import DigraphPattern, encode, outcome_digits, pair_list
from .rng import substream

DEFAULT_L = 400
DEFAULT_TAIL_BUDGET = 5e-3
ANOMALY_FLOOR = 1e-12


@dataclass(frozen=True)
class LimitConfig:
    L: int = DEFAULT_L
    # allowed tail variance relative to the variance kept, 2 sum_{l<=L} sigma^2
    tail_budget: float = DEFAULT_TAIL_BUDGET
    chunk: int = 1000
    workers: int = 1


@dataclass(frozen=True, eq=False)
class LimitTournamentSample:
    m: int
    h: np.ndarray
    L: int
    tail_variance: float
    gaussians: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class ProbabilityEstimate:
    p_hat: float
    n_samples: int
    count: int
    ci95_halfwidth: float
    zero_events: int = 0

    @classmethod
    def from_count(cls, count: int, n: int, zero_events: int = 0) -> "ProbabilityEstimate":
        p = count / n
        return cls(p, n, int(count), 1.96 * math.sqrt(p * (1 - p) / n), int(zero_events))

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        half = z * math.sqrt(self.p_hat * (1 - self.p_hat) / self.n_samples)
        return self.p_hat - half, self.p_hat + half


# -------------------------------------------------------------- truncation


def truncation(spectrum: LimitSpectrum, L: int, budget: float | None) -> tuple[np.ndarray, float]:
    """Leading L values and the tail variance; raise if the tail is too heavy."""
    if L > spectrum.L:
        raise TruncationTooSmall(f"L={L} exceeds the {spectrum.L} available limit values")
    spec = spectrum.truncated(L)
    if spectrum.finite:
        tail = float(2 * (spectrum.sigmas[L:] ** 2).sum())
    else:
        tail = spec.tail_variance()
    if budget is not None and tail > budget * spec.head_variance():
        raise TruncationTooSmall(
            f"tail variance {tail:.3g} exceeds {budget:g} x kept variance {spec.head_variance():.3g}"
        )
    return spec.sigmas, tail


# ---------------------------------------------------------------- sampling


def h_from_gaussians(g: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """(B, m, 2L) Gaussians -> (B, m, m) skew matrices."""
    x = g[..., 0::2]
    y = g[..., 1::2]
    p = (x[:, :, None, :] * y[:, None, :, :]) @ sigma
    return p - np.swapaxes(p, 1, 2)


def pair_values(h: np.ndarray) -> np.ndarray:
    """Upper-triangle entries in lexicographic pair order, shape (B, P)."""
    m = h.shape[-1]
    j, k = np.array(pair_list(m)).T
    return h[:, j, k]


def sample_h(m: int, spectrum: LimitSpectrum, L: int, rng: np.random.Generator,
             tail_budget: float | None = DEFAULT_TAIL_BUDGET) -> LimitTournamentSample:
    sigma, tail = truncation(spectrum, L, tail_budget)
    g = rng.standard_normal((1, m, 2 * L))
    h = h_from_gaussians(g, sigma)[0]
    return LimitTournamentSample(m, h, L, tail, g[0])


def _chunk_sizes(n: int, chunk: int) -> list[int]:
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _pattern_chunk(args) -> tuple[np.ndarray, int]:
    seed, name, size, m, sigma = args
    rng = substream(seed, name)
    g = rng.standard_normal((size, m, 2 * sigma.size))
    vals = pair_values(h_from_gaussians(g, sigma))
    codes = encode(outcome_digits(vals))
    return np.bincount(codes, minlength=3 ** len(pair_list(m))), int((vals == 0).sum())


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


@dataclass(frozen=True, eq=False)
class LimitTally:
    """Counts of every labelled complete outcome over N limit samples."""

    m: int
    N: int
    L: int
    tail_variance: float
    counts: np.ndarray
    zero_events: int
    seed: int

    def event_count(self, pattern: DigraphPattern) -> int:
        from .patterns import consistent_codes

        if pattern.m > self.m:
            raise ValueError("pattern needs more players than were simulated")
        padded = DigraphPattern(self.m, pattern.edges, pattern.name)
        return int(self.counts[consistent_codes(padded)].sum())

    def probability(self, pattern: DigraphPattern) -> ProbabilityEstimate:
        return ProbabilityEstimate.from_count(self.event_count(pattern), self.N, self.zero_events)


def simulate_tally(m: int, N: int, spectrum: LimitSpectrum, seed: int,
                   config: LimitConfig = LimitConfig(), stream: str = "limit") -> LimitTally:
    """Labelled outcome counts for N samples of the m-player limit tournament.

    Work is split into fixed chunks drawn from substreams "<stream>/i", so
    the result does not depend on the worker count.
    """
    sigma, tail = truncation(spectrum, config.L, config.tail_budget)
    jobs = [(seed, f"{stream}/{i}", size, m, sigma) for i, size in enumerate(_chunk_sizes(N, config.chunk))]
    total = np.zeros(3 ** len(pair_list(m)), dtype=np.int64)
    zeros = 0
    for counts, z in _map(_pattern_chunk, jobs, config.workers):
        total += counts
        zeros += z
    return LimitTally(m, N, config.L, tail, total, zeros, seed)


def _edge_chunk(args) -> tuple[int, int]:
    seed, name, size, pattern, sigma = args
    rng = substream(seed, name)
    g = rng.standard_normal((size, pattern.m, 2 * sigma.size))
    h = h_from_gaussians(g, sigma)
    zeros = sum(int((h[:, j, k] == 0).sum()) for j, k in pattern.zero_based())
    return int(_event(h, pattern).sum()), zeros


def digraph_probability(d: DigraphPattern, N: int, L: int, spectrum: LimitSpectrum, rng_or_seed,
                        config: LimitConfig | None = None) -> ProbabilityEstimate:
    """Monte Carlo estimate of P[H_jk > 0 for every edge (j, k)].

    Uses the same substreams as :func:`simulate_tally` with m = d.m, so
    both routes give identical counts. Exact zeros count as failures and
    are reported in ``zero_events``.
    """
    cfg = config or LimitConfig()
    sigma, _ = truncation(spectrum, L, cfg.tail_budget)
    seed = _as_seed(rng_or_seed)
    jobs = [(seed, f"limit/{i}", size, d, sigma) for i, size in enumerate(_chunk_sizes(N, cfg.chunk))]
    count = zeros = 0
    for c, z in _map(_edge_chunk, jobs, cfg.workers):
        count += c
        zeros += z
    return ProbabilityEstimate.from_count(count, N, zeros)


def _as_seed(rng_or_seed) -> int:
    if isinstance(rng_or_seed, np.random.Generator):
        return int(rng_or_seed.integers(0, 2**63 - 1))
    return int(rng_or_seed)


def limit_pair_samples(N: int, spectrum: LimitSpectrum, seed: int, config: LimitConfig = LimitConfig(),
                       stream: str = "limit-pair") -> np.ndarray:
    """N independent draws of H_12."""
    sigma, _ = truncation(spectrum, config.L, config.tail_budget)
    out = []
    for i, size in enumerate(_chunk_sizes(N, config.chunk)):
        rng = substream(seed, f"{stream}/{i}")
        g = rng.standard_normal((size, 2, 2 * sigma.size))
        out.append(h_from_gaussians(g, sigma)[:, 0, 1])
    return np.concatenate(out) if out else np.zeros(0)


# ----------------------------------------------------------- symmetry checks


def _event(h: np.ndarray, pattern: DigraphPattern) -> np.ndarray:
    ok = np.ones(h.shape[0], dtype=bool)
    for j, k in pattern.zero_based():
        ok &= h[:, j, k] > 0
    return ok


@dataclass(frozen=True)
class PairedEstimates:
    original: ProbabilityEstimate
    transformed: ProbabilityEstimate
    # samples where the two indicators disagree
    mismatches: int

    @property
    def counts_equal(self) -> bool:
        return self.original.count == self.transformed.count


def _paired(d: DigraphPattern, d_image: DigraphPattern, transform, N: int, L: int,
            spectrum: LimitSpectrum, seed: int, chunk: int, budget) -> PairedEstimates:
    """Count d on the draws and d_image on the transformed draws.

    When the transform maps the event for d onto the event for d_image
    sample by sample, the two counts agree exactly.
    """
    sigma, _ = truncation(spectrum, L, budget)
    c_orig = c_img = mism = 0
    for i, size in enumerate(_chunk_sizes(N, chunk)):
        rng = substream(seed, f"paired/{i}")
        g = rng.standard_normal((size, d.m, 2 * L))
        e_orig = _event(h_from_gaussians(g, sigma), d)
        e_img = _event(h_from_gaussians(transform(g), sigma), d_image)
        c_orig += int(e_orig.sum())
        c_img += int(e_img.sum())
        mism += int((e_orig != e_img).sum())
    return PairedEstimates(ProbabilityEstimate.from_count(c_orig, N), ProbabilityEstimate.from_count(c_img, N), mism)


def vertex_flip_check(d: DigraphPattern, v: int, N: int, L: int, spectrum: LimitSpectrum, rng_or_seed,
                      chunk: int = 1000, tail_budget: float | None = DEFAULT_TAIL_BUDGET) -> PairedEstimates:
    """Evaluate d on the draws and d flipped at v on the draws with player v negated.

    Negating player v reverses exactly the edges at v, so the two
    indicators agree sample by sample.
    """
    if not 1 <= v <= d.m:
        raise ValueError("vertex out of range")

    def negate(g):
        g = g.copy()
        g[:, v - 1, :] = -g[:, v - 1, :]
        return g

    return _paired(d, d.flipped_at(v), negate, N, L, spectrum, _as_seed(rng_or_seed), chunk, tail_budget)


def full_reversal_check(d: DigraphPattern, N: int, L: int, spectrum: LimitSpectrum, rng_or_seed,
                        chunk: int = 1000, tail_budget: float | None = DEFAULT_TAIL_BUDGET) -> PairedEstimates:
    """Evaluate d on the draws and the reversed d after swapping x <-> y everywhere."""

    def swap(g):
        out = np.empty_like(g)
        out[..., 0::2] = g[..., 1::2]
        out[..., 1::2] = g[..., 0::2]
        return out

    return _paired(d, d.reversed(), swap, N, L, spectrum, _as_seed(rng_or_seed), chunk, tail_budget)


def relabel_check(d: DigraphPattern, perm, N: int, L: int, spectrum: LimitSpectrum, rng_or_seed,
                  chunk: int = 1000, tail_budget: float | None = DEFAULT_TAIL_BUDGET) -> PairedEstimates:
    """Evaluate d and its relabelled copy on draws permuted accordingly."""
    perm = tuple(int(p) for p in perm)
    inv = np.argsort(np.array(perm) - 1)

    def permute(g):
        # new player perm[v]-1 receives old player v's Gaussians
        return g[:, inv, :]

    return _paired(d, d.relabeled(perm), permute, N, L, spectrum, _as_seed(rng_or_seed), chunk, tail_budget)


# --------------------------------------------------------------- tie constant


ALPHA_PREFACTOR = 2 ** (-2.5) / math.sqrt(math.pi)


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    stderr: float
    N: int
    L: int
    tail_variance: float
    # first-order upward bias from dropping modes beyond L
    truncation_bias: float
    anomalies: int

    @property
    def ci95(self) -> tuple[float, float]:
        return self.alpha - 1.96 * self.stderr, self.alpha + 1.96 * self.stderr


def alpha_estimate(spectrum: LimitSpectrum, L: int, N: int, rng_or_seed, chunk: int = 20000,
                   tail_budget: float | None = DEFAULT_TAIL_BUDGET) -> AlphaEstimate:
    """Monte Carlo of 2^{-5/2} pi^{-1/2} E[V^{-1/2}], V = sum sigma_l^2 (Z^2 + Z'^2).

    Z^2 + Z'^2 is twice a unit exponential, which is what is drawn. The
    exponentials for mode l come from the same stream position whatever
    L is, so estimates at different L share random numbers and are
    pathwise monotone in L.
    """
    sigma, tail = truncation(spectrum, L, tail_budget)
    seed = _as_seed(rng_or_seed)
    s2 = 2 * sigma**2
    total = 0.0
    total_sq = 0.0
    inv32 = 0.0
    anomalies = 0
    for i, size in enumerate(_chunk_sizes(N, chunk)):
        e = _exponentials(seed, i, size, L)
        v = e @ s2
        anomalies += int((v < ANOMALY_FLOOR).sum())
        r = 1.0 / np.sqrt(v)
        total += float(r.sum())
        total_sq += float((r * r).sum())
        inv32 += float((r**3).sum())
    mean = total / N
    var = max(total_sq / N - mean * mean, 0.0)
    bias = ALPHA_PREFACTOR * 0.5 * (inv32 / N) * tail
    return AlphaEstimate(
        alpha=ALPHA_PREFACTOR * mean,
        stderr=ALPHA_PREFACTOR * math.sqrt(var / N),
        N=N,
        L=L,
        tail_variance=tail,
        truncation_bias=bias,
        anomalies=anomalies,
    )


_EXP_BLOCK = 64


def _exponentials(seed: int, chunk_index: int, size: int, L: int) -> np.ndarray:
    """(size, L) unit exponentials whose column l does not depend on L.

    Columns come in blocks of 64, each from its own named substream, so a
    larger L only appends columns.
    """
    cols = []
    for b in range(-(-L // _EXP_BLOCK)):
        width = min(_EXP_BLOCK, L - b * _EXP_BLOCK)
        rng = substream(seed, f"alpha/{chunk_index}/{b}")
        cols.append(rng.standard_exponential((size, _EXP_BLOCK))[:, :width])
    return np.concatenate(cols, axis=1)


def single_mode_alpha(sigma1: float) -> float:
    """Closed form when only one mode is present: 1 / (8 sigma_1)."""
    return 1.0 / (8.0 * sigma1)


# ------------------------------------------------------------------ witness


@dataclass(frozen=True, eq=False)
class Witness:
    pattern: DigraphPattern
    C: float
    gaussians: np.ndarray  # (m, 2L)
    sample: LimitTournamentSample


WITNESS_C_SCHEDULE = tuple(2**k for k in range(2, 11))


def witness_digraph(d: DigraphPattern, spectrum: LimitSpectrum, L: int | None = None,
                    seed: int = 0) -> Witness:
    """Explicit Gaussian assignment realizing every edge of d.

    Edge number l (j -> k) owns slots (2l-1, 2l): x_jl = y_kl = C sqrt(u)
    with u the edge count, while every other slot of mode l lies in
    [-1, 1]. Modes beyond u carry ordinary Gaussian draws. C is doubled
    until all edge signs come out right.
    """
    u = d.e
    L = spectrum.L if L is None else L
    if u == 0:
        raise ValueError("pattern has no edges")
    if L < u:
        raise WitnessSearchFailed(f"need at least {u} modes, have {L}")
    sigma = spectrum.sigmas[:L]
    rng = substream(seed, f"witness/{d.m}/{u}")
    bounded = rng.uniform(-1.0, 1.0, size=(d.m, 2 * u))
    tail = rng.standard_normal((d.m, 2 * (L - u)))
    for c in WITNESS_C_SCHEDULE:
        g = np.concatenate([bounded, tail], axis=1)
        big = c * math.sqrt(u)
        for ell, (j, k) in enumerate(d.zero_based()):
            g[j, 2 * ell] = big
            g[k, 2 * ell + 1] = big
        h = h_from_gaussians(g[None], sigma)[0]
        if all(h[j, k] > 0 for j, k in d.zero_based()):
            tail_var = 0.0
            sample = LimitTournamentSample(d.m, h, L, tail_var, g)
            return Witness(d, float(c), g, sample)
    raise WitnessSearchFailed(f"no witness up to C={WITNESS_C_SCHEDULE[-1]}")
