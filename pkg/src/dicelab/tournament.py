"""Finite-n experiments: tournaments of random dice, ties, margins, coarseness.

Everything that touches dice works on frequency-count vectors and exact
integer margins. Randomness flows from a single seed through named
substreams ("sampler/i" for chunk i), so results do not depend on the
number of workers.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .dice import coarse_flags, doubled_coefficients, doubled_margins, target_sum
from .errors import TooLarge
from .patterns import (
    DigraphPattern,
    canonical,
    canonicalize,
    describe,
    encode,
    labelled_probability,
    outcome_digits,
    pair_list,
)
from .rng import substream
from .sampling import DEFAULT_CONFIG, MODELS, MULTISET, SamplerConfig, check_method, default_method, sample_counts

CYCLE3 = DigraphPattern(3, ((1, 2), (2, 3), (3, 1)), "cycle3")
CYCLE3_REV = CYCLE3.reversed()


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = MULTISET
    n: int = 100
    m: int = 3
    N: int = 10_000
    seed: int = 0
    method: str | None = None
    chunk: int = 20_000
    reservoir: int = 1_000_000
    workers: int = 1
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def resolved_method(self) -> str:
        return self.method or default_method(self.model, self.n, self.sampler)

    def validate(self) -> None:
        check_method(self.model, self.n, self.resolved_method, self.sampler)

    def to_json(self) -> dict:
        d = asdict(self)
        d["method"] = self.resolved_method
        return d


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    pattern_counts: dict[int, int]
    tie_pair_count: int
    margin_samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def pair_count(self) -> int:
        return self.config.N * len(pair_list(self.config.m))

    def canonical_probabilities(self) -> dict[int, float]:
        return {c: k / self.N for c, k in self.pattern_counts.items()}

    def pattern_probability(self, pattern: DigraphPattern) -> float:
        return float(labelled_probability(pattern, self.canonical_probabilities(), self.config.m))

    def event_count(self, pattern: DigraphPattern) -> float:
        return self.pattern_probability(pattern) * self.N

    def intransitive_fraction(self) -> float:
        """Share of tournaments whose first three players form a directed cycle."""
        return self.pattern_probability(CYCLE3) + self.pattern_probability(CYCLE3_REV)

    def tie_rate(self) -> float:
        return self.tie_pair_count / self.pair_count

    def to_json(self) -> dict:
        m = self.config.m
        rows = []
        for code in sorted(self.pattern_counts):
            cnt = self.pattern_counts[code]
            p = cnt / self.N
            rows.append({
                "code": int(code),
                "pattern": describe(code, m),
                "orbit": canonical(code, m)[1],
                "count": int(cnt),
                "p_hat": p,
                "ci95": 1.96 * math.sqrt(p * (1 - p) / self.N),
            })
        out = {
            "config": self.config.to_json(),
            "patterns": rows,
            "tie_pair_count": int(self.tie_pair_count),
            "pair_count": int(self.pair_count),
            "tie_rate": self.tie_rate(),
        }
        if m >= 3:
            p = self.intransitive_fraction()
            out["intransitive_fraction"] = p
            out["intransitive_ci95"] = 1.96 * math.sqrt(p * (1 - p) / self.N)
        return out


def _chunks(total: int, size: int) -> list[int]:
    full, rest = divmod(total, size)
    return [size] * full + ([rest] if rest else [])


def _experiment_chunk(args):
    cfg, index, size = args
    rng = substream(cfg.seed, f"sampler/{index}")
    m, n = cfg.m, cfg.n
    counts = sample_counts(cfg.model, n, size * m, rng, cfg.resolved_method, cfg.sampler)
    counts = counts.reshape(size, m, n)
    pairs = pair_list(m)
    margins = np.stack([doubled_margins(counts[:, j], counts[:, k]) for j, k in pairs], axis=1)
    codes = encode(outcome_digits(margins))
    canon = canonicalize(codes, m)
    uniq, cnt = np.unique(canon, return_counts=True)
    return dict(zip(uniq.tolist(), cnt.tolist())), int((margins == 0).sum()), margins[:, 0]


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Sample N independent m-tuples and tally every pair outcome."""
    cfg.validate()
    start = time.time()
    jobs = [(cfg, i, size) for i, size in enumerate(_chunks(cfg.N, cfg.chunk))]
    totals: dict[int, int] = {}
    ties = 0
    reservoir = []
    kept = 0
    for counts, t, margins in _map(_experiment_chunk, jobs, cfg.workers):
        for code, c in counts.items():
            totals[code] = totals.get(code, 0) + c
        ties += t
        if kept < cfg.reservoir:
            take = margins[: cfg.reservoir - kept]
            reservoir.append(take)
            kept += take.size
    res = ExperimentResult(
        cfg,
        dict(sorted(totals.items())),
        ties,
        np.concatenate(reservoir) if reservoir else np.zeros(0, dtype=np.int64),
        {"wall_clock_seconds": time.time() - start},
    )
    if sum(res.pattern_counts.values()) != cfg.N:
        raise AssertionError("pattern counts do not add up to N")
    return res


# -------------------------------------------------------------- exact census


@dataclass(eq=False)
class ExactCensus:
    model: str
    n: int
    support: np.ndarray  # (S, n) count vectors
    weights: list[int]  # number of model outcomes per support element
    table: np.ndarray  # (S, S) doubled margins of row over column

    @property
    def total_weight(self) -> int:
        return sum(self.weights)

    def complement_index(self) -> np.ndarray:
        """Index of each die's complement (counts reversed)."""
        lookup = {row.tobytes(): i for i, row in enumerate(self.support)}
        return np.array([lookup[row[::-1].copy().tobytes()] for row in self.support])

    def pattern_probabilities(self, m: int, max_tuples: int = 5 * 10**7) -> dict[int, Fraction]:
        """Exact probability of each canonical outcome class on m players."""
        s = len(self.weights)
        if s**m > max_tuples:
            raise TooLarge(f"{s}^{m} tuples exceed the census limit {max_tuples}")
        pairs = pair_list(m)
        digits_table = outcome_digits(self.table)
        w = np.array(self.weights, dtype=object)
        acc: dict[int, int] = {}
        # fix the first m-2 players, vectorize over the last two
        for head in itertools.product(range(s), repeat=m - 2):
            wh = 1
            for h in head:
                wh *= self.weights[h]
            idx = np.array(list(head), dtype=np.int64)
            grid_a, grid_b = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
            players = [np.full(grid_a.shape, h) for h in idx] + [grid_a, grid_b]
            code = np.zeros(grid_a.shape, dtype=np.int64)
            for p, (j, k) in enumerate(pairs):
                code += digits_table[players[j], players[k]] * 3**p
            wt = np.outer(w, w) * wh
            flat_codes = code.ravel()
            flat_w = wt.ravel()
            order = np.argsort(flat_codes, kind="stable")
            sc = flat_codes[order]
            sw = flat_w[order]
            bounds = np.flatnonzero(np.diff(sc)) + 1
            starts = np.concatenate(([0], bounds))
            for st, en in zip(starts, np.concatenate((bounds, [sc.size]))):
                key = int(sc[st])
                acc[key] = acc.get(key, 0) + int(sum(sw[st:en]))
        total = self.total_weight**m
        canon: dict[int, Fraction] = {}
        for code, wsum in acc.items():
            c = canonical(code, m)[0]
            canon[c] = canon.get(c, Fraction(0)) + Fraction(wsum, total)
        return dict(sorted(canon.items()))

    def tie_probability(self) -> Fraction:
        w = np.array(self.weights, dtype=object)
        tie = (self.table == 0).astype(object)
        return Fraction(int(w @ tie @ w), self.total_weight**2)

    def to_json(self) -> dict:
        return {
            "schema": "census-v1",
            "model": self.model,
            "n": self.n,
            "support": self.support.tolist(),
            "weights": [int(x) for x in self.weights],
            "table": self.table.tolist(),
        }


MAX_CENSUS_N = 8


def enumerate_exact(model: str, n: int) -> ExactCensus:
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    if n > MAX_CENSUS_N:
        raise TooLarge(f"exact census is limited to n <= {MAX_CENSUS_N}")
    if n < 1:
        raise ValueError("n must be positive")
    t = target_sum(n)
    rows = []
    for faces in itertools.combinations_with_replacement(range(1, n + 1), n):
        if sum(faces) == t:
            rows.append(np.bincount(np.array(faces) - 1, minlength=n))
    support = np.array(rows, dtype=np.int64)
    if model == MULTISET:
        weights = [1] * len(rows)
    else:
        weights = [math.factorial(n) // math.prod(math.factorial(int(c)) for c in row) for row in support]
    coeff = doubled_coefficients(support)
    table = support @ coeff.T  # table[i, j] = margin of die i over die j
    return ExactCensus(model, n, support, weights, table)


# ----------------------------------------------------------- margins and KS


def finite_margin_samples(cfg: ExperimentConfig, scale_c: float) -> np.ndarray:
    """c * margin / n for the first pair of each of cfg.N tournaments."""
    if cfg.m != 2:
        raise ValueError("margin comparison needs m = 2")
    res = run_experiment(ExperimentConfig(**{**cfg.__dict__, "reservoir": cfg.N}))
    return scale_c * (res.margin_samples / 2.0) / cfg.n


def margin_ks_distance(cfg: ExperimentConfig, scale_c: float, limit_samples: np.ndarray,
                       finite_samples: np.ndarray | None = None) -> float:
    """Two-sample KS statistic between scaled finite-n margins and limit draws."""
    if finite_samples is None:
        finite_samples = finite_margin_samples(cfg, scale_c)
    return float(stats.ks_2samp(finite_samples, limit_samples).statistic)


def model_scale(model: str) -> float:
    """Factor c with c * margin / n converging to the limit margin."""
    return 0.5 if model == MULTISET else 1.0


# ------------------------------------------------------------------ tie rates


@dataclass(frozen=True)
class TieRateRow:
    model: str
    n: int
    dice: int
    pairs: int
    ties: int
    p_tie: float
    stderr: float

    @property
    def n_times_p(self) -> float:
        return self.n * self.p_tie

    @property
    def ci95(self) -> tuple[float, float]:
        return self.n * (self.p_tie - 1.96 * self.stderr), self.n * (self.p_tie + 1.96 * self.stderr)


def pool_tie_rate(counts: np.ndarray, block: int = 1024) -> tuple[int, int, float]:
    """Ties among all pairs of a pool of dice, with a U-statistic std error.

    The pool margins are a float matmul of integer data; every partial sum
    is below 2^53, so the zero test is exact.
    """
    k, n = counts.shape
    f = counts.astype(np.float64)
    c2 = doubled_coefficients(counts).astype(np.float64)
    per_die = np.zeros(k)
    for s in range(0, k, block):
        blk = f[s : s + block] @ c2.T  # margin of die s+i over die j
        z = blk == 0
        for i in range(z.shape[0]):
            z[i, s + i] = False
        per_die[s : s + block] = z.sum(axis=1)
    ties = int(per_die.sum()) // 2
    pairs = k * (k - 1) // 2
    u = ties / pairs
    row_mean = per_die / (k - 1)
    var = 4 * row_mean.var(ddof=1) / k + 2 * u * (1 - u) / (k * (k - 1))
    return ties, pairs, math.sqrt(var)


def tie_rate_curve(model: str, n_grid, N: int, seed: int, method: str | None = None,
                   config: SamplerConfig = DEFAULT_CONFIG) -> list[TieRateRow]:
    """n * P[tie] per n from a pool of N dice, every pair compared.

    Each pool die comes from its own Markov chain when the sampler is
    MCMC, so no two compared dice share a chain.
    """
    rows = []
    for n in n_grid:
        rng = substream(seed, f"ties/{model}/{n}")
        meth = method or default_method(model, n, config)
        cfg = config
        if meth == "mcmc":
            cfg = SamplerConfig(**{**config.__dict__, "chains": N})
        counts = sample_counts(model, n, N, rng, meth, cfg)
        ties, pairs, se = pool_tie_rate(counts)
        rows.append(TieRateRow(model, n, N, pairs, ties, ties / pairs, se))
    return rows


# ----------------------------------------------------------------- coarseness


@dataclass(frozen=True)
class CoarseRow:
    model: str
    n: int
    N: int
    coarse: int
    condition_rates: dict

    @property
    def fraction(self) -> float:
        return self.coarse / self.N

    @property
    def ci95_halfwidth(self) -> float:
        p = self.fraction
        return 1.96 * math.sqrt(p * (1 - p) / self.N)


def coarse_fraction(model: str, n_grid, N: int, seed: int, method: str | None = None,
                    config: SamplerConfig = DEFAULT_CONFIG, batch: int = 250) -> list[CoarseRow]:
    rows = []
    for n in n_grid:
        rng = substream(seed, f"coarse/{model}/{n}")
        counts = sample_counts(model, n, N, rng, method, config)
        totals = {f"s{i}": 0 for i in range(1, 7)}
        coarse = 0
        for s in range(0, N, batch):
            flags = coarse_flags(doubled_coefficients(counts[s : s + batch]))
            for key, v in flags.items():
                totals[key] += int(v.sum())
            ok = flags["s1"] & flags["s2"] & flags["s3"] & flags["s4"] & flags["s5"] & flags["s6"]
            coarse += int(ok.sum())
        rows.append(CoarseRow(model, n, N, coarse, {k: v / N for k, v in totals.items()}))
    return rows
