"""Samplers for the two random dice models.

Multiset model: uniform over nondecreasing face sequences with the fixed
sum. Balanced model: uniform over ordered face sequences with the fixed sum.

Every sampler has a batch form returning a (size, n) array and a scalar
convenience wrapper returning a :class:`~dicelab.dice.Die`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dice import Die, counts_from_faces, target_sum
from .errors import MethodUnavailable, RejectionBudgetExceeded

MULTISET = "multiset"
BALANCED = "balanced_sequence"
MODELS = (MULTISET, BALANCED)

MULTISET_METHODS = ("exact_dp", "geometric_rejection", "mcmc")
BALANCED_METHODS = ("exact_dp", "uniform_rejection", "poisson_rejection", "mcmc")

_INT64_SAFE = 1 << 62


@dataclass(frozen=True)
class SamplerConfig:
    multiset_exact_dp_max: int = 128
    balanced_exact_dp_max: int = 128
    rejection_max_n: int = 64
    # maximum number of candidate draws a rejection sampler may spend per
    # requested die before giving up
    rejection_budget: int = 10**6
    # burn-in is burnin_factor * n * log(n) elementary moves
    burnin_factor: float = 50.0
    # sweeps between successive outputs of one chain
    thin_sweeps: int = 8
    chains: int = 512


DEFAULT_CONFIG = SamplerConfig()


def default_method(model: str, n: int, config: SamplerConfig = DEFAULT_CONFIG) -> str:
    if model == MULTISET:
        return "exact_dp" if n <= config.multiset_exact_dp_max else "mcmc"
    if model == BALANCED:
        return "uniform_rejection"
    raise ValueError(f"unknown model {model!r}")


def check_method(model: str, n: int, method: str, config: SamplerConfig = DEFAULT_CONFIG) -> None:
    """Raise MethodUnavailable if ``method`` cannot serve ``(model, n)``."""
    if n < 1:
        raise MethodUnavailable("n must be positive")
    methods = MULTISET_METHODS if model == MULTISET else BALANCED_METHODS
    if model not in MODELS:
        raise MethodUnavailable(f"unknown model {model!r}")
    if method not in methods:
        raise MethodUnavailable(f"{method!r} is not a {model} sampler; choose from {methods}")
    if method == "exact_dp":
        cap = config.multiset_exact_dp_max if model == MULTISET else config.balanced_exact_dp_max
        if n > cap:
            raise MethodUnavailable(f"exact_dp is limited to n <= {cap} (got n={n})")
    if method in ("geometric_rejection", "poisson_rejection") and n > config.rejection_max_n:
        raise MethodUnavailable(f"{method} is limited to n <= {config.rejection_max_n}")


# ------------------------------------------------------------ big-int draws


def _randbelow(rng: np.random.Generator, bound: int) -> int:
    """Uniform integer in [0, bound) for an arbitrary-size Python int."""
    if bound < _INT64_SAFE:
        return int(rng.integers(0, bound))
    nbits = bound.bit_length()
    nbytes = (nbits + 7) // 8
    while True:
        x = int.from_bytes(rng.bytes(nbytes), "little") >> (8 * nbytes - nbits)
        if x < bound:
            return x


def _categorical(rng: np.random.Generator, weights: list[int], size: int) -> np.ndarray:
    """Exact draws from integer weights (Python ints of any size)."""
    total = sum(weights)
    cum = np.cumsum(np.array(weights, dtype=object))
    if total < _INT64_SAFE:
        u = rng.integers(0, total, size=size)
        return np.searchsorted(cum.astype(np.int64), u, side="right")
    out = np.empty(size, dtype=np.int64)
    cum_list = cum.tolist()
    for i in range(size):
        u = _randbelow(rng, total)
        lo, hi = 0, len(cum_list) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cum_list[mid] > u:
                hi = mid
            else:
                lo = mid + 1
        out[i] = lo
    return out


# ---------------------------------------------------------- multiset table


class MultisetTable:
    """Exact counts of multisets of values in [1, v] with k parts and sum s.

    Only states reachable from (n parts, sum n(n+1)/2) when values are
    assigned from the top down are stored: for layer v the window is
    k <= s <= v k together with v (n-k) <= T - s <= n (n-k).
    """

    def __init__(self, n: int):
        self.n = n
        self.total = target_sum(n)
        self.layers: list[list[tuple[int, np.ndarray] | None]] = [None] * (n + 1)
        self._build()

    def window(self, v: int, k: int) -> tuple[int, int]:
        n, t = self.n, self.total
        lo = max(k, t - n * (n - k))
        hi = min(v * k, t - v * (n - k))
        return lo, hi

    def get(self, v: int, k: int, s: int) -> int:
        if k < 0 or s < 0:
            return 0
        if v == 0:
            return 1 if (k == 0 and s == 0) else 0
        if k > self.n:
            return 0
        entry = self.layers[v][k]
        if entry is None:
            return 0
        lo, arr = entry
        i = s - lo
        if 0 <= i < arr.size:
            return arr[i]
        return 0

    def _slice(self, v: int, k: int, a: int, b: int) -> np.ndarray:
        """Counts for s in [a, b] at layer v, zero outside the stored window."""
        out = np.zeros(b - a + 1, dtype=object)
        if k < 0:
            return out
        if v == 0:
            if k == 0 and a <= 0 <= b:
                out[-a] = 1
            return out
        entry = self.layers[v][k]
        if entry is None:
            return out
        lo, arr = entry
        x, y = max(a, lo), min(b, lo + arr.size - 1)
        if y >= x:
            out[x - a : y - a + 1] = arr[x - lo : y - lo + 1]
        return out

    def _build(self) -> None:
        n = self.n
        for v in range(1, n + 1):
            layer: list[tuple[int, np.ndarray] | None] = [None] * (n + 1)
            self.layers[v] = layer
            for k in range(0, n + 1):
                lo, hi = self.window(v, k)
                if hi < lo:
                    continue
                arr = self._slice(v - 1, k, lo, hi)
                if k >= 1:
                    arr = arr + self._slice(v, k - 1, lo - v, hi - v)
                layer[k] = (lo, arr)

    def count(self) -> int:
        return self.get(self.n, self.n, self.total)

    def sample_counts(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``size`` count vectors, grouping samples by shared state."""
        n = self.n
        out = np.zeros((size, n), dtype=np.int64)
        k = np.full(size, n, dtype=np.int64)
        s = np.full(size, self.total, dtype=np.int64)
        for v in range(n, 0, -1):
            keys = k * (self.total + 1) + s
            uniq, inverse = np.unique(keys, return_inverse=True)
            for gi, key in enumerate(uniq.tolist()):
                kk, ss = divmod(key, self.total + 1)
                members = np.flatnonzero(inverse == gi)
                if v == 1:
                    out[members, 0] = kk
                    continue
                tmax = min(kk, ss // v)
                weights = [self.get(v - 1, kk - t, ss - t * v) for t in range(tmax + 1)]
                t = _categorical(rng, weights, members.size)
                out[members, v - 1] = t
                k[members] -= t
                s[members] -= t * v
        return out


@lru_cache(maxsize=8)
def multiset_table(n: int) -> MultisetTable:
    return MultisetTable(n)


# ---------------------------------------------------------- balanced table


class BalancedTable:
    """C[k][s] = number of sequences of k faces in [1, n] with sum s."""

    def __init__(self, n: int):
        self.n = n
        self.total = target_sum(n)
        width = self.total + 1
        rows = [np.zeros(width, dtype=object)]
        rows[0][0] = 1
        for _ in range(n):
            prev = rows[-1]
            csum = np.concatenate(([0], np.cumsum(prev)))
            # row[s] = sum_{f=1..n} prev[s - f] = csum[s] - csum[s - n]
            row = np.zeros(width, dtype=object)
            idx = np.arange(width)
            upper = idx  # csum index for prev[.. s-1]
            lower = np.maximum(idx - n, 0)
            row[:] = csum[upper] - csum[lower]
            rows.append(row)
        self.rows = rows

    def count(self) -> int:
        return self.rows[self.n][self.total]

    def sample_faces(self, size: int, rng: np.random.Generator) -> np.ndarray:
        n = self.n
        out = np.zeros((size, n), dtype=np.int64)
        s = np.full(size, self.total, dtype=np.int64)
        for pos in range(n):
            left = n - pos - 1
            uniq, inverse = np.unique(s, return_inverse=True)
            row = self.rows[left]
            for gi, ss in enumerate(uniq.tolist()):
                members = np.flatnonzero(inverse == gi)
                faces = range(1, min(n, ss) + 1)
                weights = [row[ss - f] for f in faces]
                f = _categorical(rng, weights, members.size) + 1
                out[members, pos] = f
                s[members] -= f
        return out


@lru_cache(maxsize=8)
def balanced_table(n: int) -> BalancedTable:
    return BalancedTable(n)


# ------------------------------------------------------------- rejection


def _rejection(draw, accept, size: int, n: int, budget: int, rng, batch: int) -> np.ndarray:
    kept: list[np.ndarray] = []
    have = 0
    spent = 0
    limit = budget * size
    while have < size:
        if spent >= limit:
            raise RejectionBudgetExceeded(
                f"accepted {have} of {size} after {spent} candidates at n={n}"
            )
        cand = draw(batch)
        spent += batch
        ok = accept(cand)
        if ok.any():
            kept.append(cand[ok])
            have += int(ok.sum())
    return np.concatenate(kept)[:size]


def uniform_rejection_faces(n: int, size: int, rng: np.random.Generator,
                            config: SamplerConfig = DEFAULT_CONFIG) -> np.ndarray:
    """n-1 uniform faces; the last face is forced by the sum and must lie in [1, n]."""
    t = target_sum(n)
    dtype = np.int16 if n < 2**15 else np.int64
    batch = int(min(max(64, 2 * size * math.sqrt(n)), max(64, 2**24 // max(n, 1))))

    def draw(b):
        head = rng.integers(1, n + 1, size=(b, n - 1), dtype=dtype)
        last = t - head.sum(axis=1, dtype=np.int64)
        return np.concatenate([head.astype(np.int64), last[:, None]], axis=1)

    def accept(c):
        return (c[:, -1] >= 1) & (c[:, -1] <= n)

    return _rejection(draw, accept, size, n, config.rejection_budget, rng, batch)


def _constraint_ok(counts: np.ndarray, n: int) -> np.ndarray:
    j = np.arange(1, n + 1)
    return (counts.sum(axis=1) == n) & (counts @ j == target_sum(n))


def geometric_rejection_counts(n: int, size: int, rng: np.random.Generator,
                               config: SamplerConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Independent Geom(1/2) counts (support 0, 1, ...) accepted on both constraints."""
    batch = int(min(2**22 // n, max(1024, 8 * size * n * n)))
    return _rejection(lambda b: rng.geometric(0.5, size=(b, n)) - 1,
                      lambda c: _constraint_ok(c, n), size, n, config.rejection_budget, rng, batch)


def poisson_rejection_counts(n: int, size: int, rng: np.random.Generator,
                             config: SamplerConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Independent Pois(1) counts accepted on both constraints."""
    batch = int(min(2**22 // n, max(1024, 8 * size * n * n)))
    return _rejection(lambda b: rng.poisson(1.0, size=(b, n)),
                      lambda c: _constraint_ok(c, n), size, n, config.rejection_budget, rng, batch)


def counts_to_sequences(counts: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
    """Expand count vectors to face rows; shuffled when ``rng`` is given.

    A uniformly shuffled arrangement of a count vector drawn with
    multinomial weights is a uniform ordered sequence, which is how the
    Poisson sampler serves the balanced model.
    """
    b, n = counts.shape
    vals = np.arange(1, n + 1)
    faces = np.stack([np.repeat(vals, row) for row in counts])
    if rng is not None:
        faces = rng.permuted(faces, axis=1)
    return faces


# ------------------------------------------------------------------- MCMC


def _triple_move(g: np.ndarray, rng: np.random.Generator) -> None:
    """Resample (x, x+d, x+2d) along (+1, -2, +1) on disjoint blocks."""
    _, n = g.shape
    if n < 3:
        return
    d = int(rng.integers(1, (n - 1) // 2 + 1))
    off = int(rng.integers(0, 3))
    x = np.arange(n - 2 * d)
    q = x // d
    x = x[(q >= off) & ((q - off) % 3 == 0)]
    if x.size == 0:
        return
    ga, gb, gc = g[:, x], g[:, x + d], g[:, x + 2 * d]
    lo = -np.minimum(ga, gc)
    hi = gb // 2
    t = lo + np.floor(rng.random(ga.shape) * (hi - lo + 1)).astype(np.int64)
    g[:, x] = ga + t
    g[:, x + d] = gb - 2 * t
    g[:, x + 2 * d] = gc + t


def _pair_move(g: np.ndarray, rng: np.random.Generator) -> None:
    """Resample (a, a+d, b, b+d) along (+1, -1, -1, +1) on a random matching."""
    _, n = g.shape
    if n < 4:
        return
    d = int(rng.integers(1, n // 2 + 1))
    off = int(rng.integers(0, 2))
    x = np.arange(n - d)
    q = x // d
    x = x[(q >= off) & ((q - off) % 2 == 0)]
    x = rng.permutation(x)
    h = x.size // 2
    if h == 0:
        return
    a, b = x[:h], x[h : 2 * h]
    _pair_update(g, a, b, d, rng)


def _single_pair_move(g: np.ndarray, rng: np.random.Generator) -> None:
    """One arbitrary pair of length-d blocks per chain, including overlaps."""
    c, n = g.shape
    if n < 3:
        return
    d = int(rng.integers(1, n))
    a = rng.integers(0, n - d, size=c)
    b = rng.integers(0, n - d, size=c)
    ok = (a != b) & (a != b + d) & (b != a + d)
    if not ok.any():
        return
    rows = np.flatnonzero(ok)
    a, b = a[ok], b[ok]
    sub = g[rows]
    ga, gad = sub[np.arange(rows.size), a], sub[np.arange(rows.size), a + d]
    gb, gbd = sub[np.arange(rows.size), b], sub[np.arange(rows.size), b + d]
    lo = -np.minimum(ga, gbd)
    hi = np.minimum(gad, gb)
    t = lo + np.floor(rng.random(rows.size) * (hi - lo + 1)).astype(np.int64)
    g[rows, a] = ga + t
    g[rows, a + d] = gad - t
    g[rows, b] = gb - t
    g[rows, b + d] = gbd + t


def _pair_update(g, a, b, d, rng) -> None:
    ga, gad, gb, gbd = g[:, a], g[:, a + d], g[:, b], g[:, b + d]
    lo = -np.minimum(ga, gbd)
    hi = np.minimum(gad, gb)
    t = lo + np.floor(rng.random(ga.shape) * (hi - lo + 1)).astype(np.int64)
    g[:, a] = ga + t
    g[:, a + d] = gad - t
    g[:, b] = gb - t
    g[:, b + d] = gbd + t


def multiset_sweep(g: np.ndarray, rng: np.random.Generator) -> None:
    """One sweep of block heat-bath moves on multiset count vectors.

    Each move shifts one face down by d and another up by d, resampled
    uniformly over its feasible range, so the uniform law on valid count
    vectors is invariant.
    """
    _triple_move(g, rng)
    _pair_move(g, rng)
    _single_pair_move(g, rng)


def balanced_sweep(faces: np.ndarray, rng: np.random.Generator) -> None:
    """Resample disjoint random pairs of positions given their sum."""
    c, n = faces.shape
    if n < 2:
        return
    perm = rng.permutation(n)
    h = n // 2
    i, j = perm[:h], perm[h : 2 * h]
    tot = faces[:, i] + faces[:, j]
    lo = np.maximum(1, tot - n)
    hi = np.minimum(n, tot - 1)
    new = lo + np.floor(rng.random(tot.shape) * (hi - lo + 1)).astype(np.int64)
    faces[:, i] = new
    faces[:, j] = tot - new


def burnin_sweeps(n: int, config: SamplerConfig) -> int:
    moves = config.burnin_factor * n * math.log(max(n, 2))
    # a sweep touches on the order of n coordinates
    return max(1, math.ceil(moves / n))


def mcmc_samples(model: str, n: int, size: int, rng: np.random.Generator,
                 config: SamplerConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Parallel chains; returns counts (multiset) or faces (balanced).

    Chains start from exact balanced-model dice, which are typical states
    for both models, then burn in. Output k comes from chain k mod C, so
    consecutive rows are independent chains.
    """
    if n <= 2:
        base = np.arange(1, n + 1)[None, :].repeat(size, axis=0)
        return counts_from_faces(base, n) if model == MULTISET else _small_balanced(n, size, rng)
    chains = max(1, min(config.chains, size))
    start = uniform_rejection_faces(n, chains, rng, config)
    if model == MULTISET:
        state = counts_from_faces(start, n)
        sweep = multiset_sweep
    else:
        state = start.astype(np.int64)
        sweep = balanced_sweep
    for _ in range(burnin_sweeps(n, config)):
        sweep(state, rng)
    rounds = -(-size // chains)
    out = []
    for r in range(rounds):
        if r:
            for _ in range(config.thin_sweeps):
                sweep(state, rng)
        out.append(state.copy())
    return np.concatenate(out)[:size]


def _small_balanced(n: int, size: int, rng) -> np.ndarray:
    return uniform_rejection_faces(n, size, rng)


# ------------------------------------------------------------ public API


def sample_counts(model: str, n: int, size: int, rng: np.random.Generator,
                  method: str | None = None, config: SamplerConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Frequency-count vectors of ``size`` independent dice, shape (size, n)."""
    method = method or default_method(model, n, config)
    check_method(model, n, method, config)
    if size == 0:
        return np.zeros((0, n), dtype=np.int64)
    if model == MULTISET:
        if method == "exact_dp":
            c = multiset_table(n).sample_counts(size, rng)
        elif method == "geometric_rejection":
            c = geometric_rejection_counts(n, size, rng, config)
        else:
            c = mcmc_samples(MULTISET, n, size, rng, config)
    else:
        if method == "poisson_rejection":
            c = poisson_rejection_counts(n, size, rng, config)
        else:
            c = counts_from_faces(sample_faces(model, n, size, rng, method, config), n)
    _assert_valid_counts(c, n)
    return c


def sample_faces(model: str, n: int, size: int, rng: np.random.Generator,
                 method: str | None = None, config: SamplerConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Face rows of ``size`` dice: sorted for the multiset model."""
    method = method or default_method(model, n, config)
    check_method(model, n, method, config)
    if model == MULTISET:
        c = sample_counts(model, n, size, rng, method, config)
        faces = counts_to_sequences(c, None)
    elif method == "exact_dp":
        faces = balanced_table(n).sample_faces(size, rng)
    elif method == "uniform_rejection":
        faces = uniform_rejection_faces(n, size, rng, config)
    elif method == "poisson_rejection":
        faces = counts_to_sequences(poisson_rejection_counts(n, size, rng, config), rng)
    else:
        faces = mcmc_samples(BALANCED, n, size, rng, config)
    _assert_valid_faces(faces, n)
    return faces


def _assert_valid_counts(c: np.ndarray, n: int) -> None:
    if c.size and not (np.all(c >= 0) and np.all(_constraint_ok(c, n))):
        raise AssertionError("sampler produced an invalid count vector")


def _assert_valid_faces(f: np.ndarray, n: int) -> None:
    if f.size and not (f.min() >= 1 and f.max() <= n and np.all(f.sum(axis=1) == target_sum(n))):
        raise AssertionError("sampler produced an invalid die")


def sample_multiset(n: int, rng: np.random.Generator, method: str = "exact_dp",
                    config: SamplerConfig = DEFAULT_CONFIG) -> Die:
    faces = sample_faces(MULTISET, n, 1, rng, method, config)[0]
    return Die(n, faces)


def sample_balanced_sequence(n: int, rng: np.random.Generator, method: str = "uniform_rejection",
                             config: SamplerConfig = DEFAULT_CONFIG) -> Die:
    faces = sample_faces(BALANCED, n, 1, rng, method, config)[0]
    return Die(n, faces)
