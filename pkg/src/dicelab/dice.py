"""Dice, frequency counts, exact match margins and coefficient sequences.

All arithmetic here is integer arithmetic. Half-integer quantities (the
match margin and the coefficient sequence) are stored doubled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadSum, DimensionMismatch, FaceOutOfRange


def target_sum(n: int) -> int:
    return n * (n + 1) // 2


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Die:
    """An n-sided die. Construct with :func:`new_die` for validation."""

    n: int
    faces: np.ndarray
    checked: bool = True

    def __post_init__(self):
        object.__setattr__(self, "faces", _frozen(self.faces))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Die):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.faces, other.faces)

    def __hash__(self) -> int:
        return hash((self.n, self.faces.tobytes()))

    def __repr__(self) -> str:
        return f"Die(n={self.n}, faces={tuple(int(x) for x in self.faces)})"

    @classmethod
    def unchecked(cls, faces) -> "Die":
        """Build a die without the face-range and face-sum checks.

        Useful for classical examples such as Efron's dice, which the
        comparison routines accept but the random models never produce.
        """
        faces = np.asarray(faces, dtype=np.int64)
        return cls(int(faces.size), faces, checked=False)

    def sorted(self) -> "Die":
        return Die(self.n, np.sort(self.faces), self.checked)


def new_die(faces) -> Die:
    faces = np.asarray(faces)
    if faces.ndim != 1 or faces.size == 0:
        raise DimensionMismatch("faces must be a non-empty 1-d sequence")
    if not np.issubdtype(faces.dtype, np.integer):
        if not np.all(np.mod(faces, 1) == 0):
            raise FaceOutOfRange("faces must be integers")
    faces = faces.astype(np.int64)
    n = int(faces.size)
    bad = np.flatnonzero((faces < 1) | (faces > n))
    if bad.size:
        i = int(bad[0])
        raise FaceOutOfRange(f"face {int(faces[i])} at position {i} is outside [1, {n}]")
    s = int(faces.sum())
    if s != target_sum(n):
        raise BadSum(f"faces sum to {s}, expected {target_sum(n)}")
    return Die(n, faces)


@dataclass(frozen=True, eq=False)
class FrequencyVector:
    """counts[i-1] is the number of faces equal to i."""

    n: int
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts", _frozen(self.counts))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrequencyVector):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.counts, other.counts)

    def __hash__(self) -> int:
        return hash((self.n, self.counts.tobytes()))

    def to_die(self) -> Die:
        return Die(self.n, np.repeat(np.arange(1, self.n + 1), self.counts))

    def is_valid(self) -> bool:
        c = self.counts
        j = np.arange(1, self.n + 1)
        return bool(np.all(c >= 0) and c.sum() == self.n and (j * c).sum() == target_sum(self.n))


def frequency_counts(d: Die) -> FrequencyVector:
    if np.any((d.faces < 1) | (d.faces > d.n)):
        raise FaceOutOfRange("frequency counts need faces in [1, n]")
    return FrequencyVector(d.n, np.bincount(d.faces - 1, minlength=d.n))


def counts_from_faces(faces: np.ndarray, n: int) -> np.ndarray:
    """Row-wise frequency counts for a (B, n) array of faces in [1, n]."""
    faces = np.asarray(faces)
    b = faces.shape[0]
    flat = faces.astype(np.int64) - 1 + n * np.arange(b, dtype=np.int64)[:, None]
    return np.bincount(flat.ravel(), minlength=b * n).reshape(b, n)


class Outcome(enum.Enum):
    WIN = "win"
    LOSS = "loss"
    TIE = "tie"


@dataclass(frozen=True)
class MatchResult:
    """Result from the first die's perspective.

    ``doubled_margin`` is twice (score - n^2/2) where a face pair scores 1
    for a strict win and 1/2 for a tie.
    """

    outcome: Outcome
    doubled_margin: int

    @classmethod
    def from_margin(cls, doubled_margin: int) -> "MatchResult":
        if doubled_margin > 0:
            return cls(Outcome.WIN, doubled_margin)
        if doubled_margin < 0:
            return cls(Outcome.LOSS, doubled_margin)
        return cls(Outcome.TIE, 0)


def _margin_by_merge(a: np.ndarray, b: np.ndarray) -> int:
    sb = np.sort(b)
    below = np.searchsorted(sb, a, side="left")
    at_or_below = np.searchsorted(sb, a, side="right")
    return int(below.sum() + at_or_below.sum()) - a.size * b.size


def _margin_by_counts(a: np.ndarray, b: np.ndarray) -> int:
    lo = int(min(a.min(), b.min()))
    hi = int(max(a.max(), b.max()))
    fa = np.bincount(a - lo, minlength=hi - lo + 1)
    fb = np.bincount(b - lo, minlength=hi - lo + 1)
    strictly_below = np.cumsum(fb) - fb
    return int((fa * (2 * strictly_below + fb)).sum()) - a.size * b.size


def compare(a: Die, b: Die) -> MatchResult:
    """Exact comparison, evaluated by two independent integer routines."""
    if a.n != b.n:
        raise DimensionMismatch(f"cannot compare a {a.n}-sided die with a {b.n}-sided die")
    m1 = _margin_by_merge(a.faces, b.faces)
    m2 = _margin_by_counts(a.faces, b.faces)
    if m1 != m2:
        raise AssertionError(f"margin routines disagree: {m1} != {m2}")
    return MatchResult.from_margin(m1)


def doubled_coefficients(counts: np.ndarray) -> np.ndarray:
    """Doubled coefficient sequence for one count vector or a (B, n) batch."""
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.shape[-1]
    prefix = np.cumsum(counts, axis=-1) - counts
    return 2 * prefix + counts - (2 * np.arange(1, n + 1) - 1)


def doubled_margins(counts_a: np.ndarray, counts_b: np.ndarray) -> np.ndarray:
    """Doubled margins of a over b for aligned (B, n) count batches."""
    return (np.asarray(counts_a, dtype=np.int64) * doubled_coefficients(counts_b)).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class CoefficientSequence:
    """c_j stored as the integers 2*c_j."""

    n: int
    doubled: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "doubled", _frozen(self.doubled))

    @property
    def values(self) -> np.ndarray:
        return self.doubled / 2.0

    @classmethod
    def from_values(cls, c) -> "CoefficientSequence":
        two_c = 2 * np.asarray(c, dtype=float)
        if not np.all(two_c == np.round(two_c)):
            raise ValueError("coefficients must be half-integers")
        return cls(two_c.size, two_c.astype(np.int64))


def coefficient_sequence(fb: FrequencyVector) -> CoefficientSequence:
    return CoefficientSequence(fb.n, doubled_coefficients(fb.counts))


def complement(d: Die) -> Die:
    """Reflect every face: a -> n + 1 - a (order reversed as well)."""
    return Die(d.n, (d.n + 1 - d.faces)[::-1], d.checked)


# ---------------------------------------------------------------- coarseness


@dataclass(frozen=True)
class CoarsenessReport:
    n: int
    s1: bool
    s2: bool
    s3: bool
    s4: bool
    s5: bool
    s6: bool
    witnesses: dict = field(default_factory=dict)

    @property
    def well_bounded(self) -> bool:
        return self.s1 and self.s2 and self.s3

    @property
    def coarse(self) -> bool:
        return self.well_bounded and self.s4 and self.s5 and self.s6


@dataclass(frozen=True)
class CoarseThresholds:
    n: int

    @property
    def log(self) -> float:
        return math.log(self.n)

    @property
    def s1_bound(self) -> float:
        return math.sqrt(self.n) * self.log

    @property
    def s3_scale(self) -> float:
        return self.log**2

    @property
    def s4_bound(self) -> float:
        return self.n**2 / self.log**2

    @property
    def index_count(self) -> float:
        return self.n / self.log

    @property
    def s6_range(self) -> range:
        lo = math.ceil(self.n**0.25)
        hi = math.floor(self.n / self.log**2)
        return range(lo, hi + 1)


def least_squares_residual(c: np.ndarray) -> tuple[float, float, float]:
    """min over (a, b) of sum_j (c_j - a j - b)^2, with the minimizer."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n = c.shape[1]
    j = np.arange(1, n + 1, dtype=float)
    jc = j - j.mean()
    a = (c @ jc) / (jc @ jc)
    b = c.mean(axis=1) - a * j.mean()
    resid = c - a[:, None] * j - b[:, None]
    rss = (resid**2).sum(axis=1)
    if rss.size == 1:
        return float(rss[0]), float(a[0]), float(b[0])
    return rss, a, b


def coarse_flags(doubled: np.ndarray) -> dict[str, np.ndarray]:
    """Evaluate the six conditions on a (B, n) batch of doubled sequences.

    Returns boolean arrays keyed ``s1`` .. ``s6``. Comparisons on
    half-integers are made on the doubled integers where possible.
    """
    d = np.atleast_2d(np.asarray(doubled, dtype=np.int64))
    bsz, n = d.shape
    if n < 3:
        raise ValueError("coarseness needs n >= 3")
    th = CoarseThresholds(n)
    c = d / 2.0

    s1 = np.abs(c).max(axis=1) <= th.s1_bound
    s2 = d.sum(axis=1) == 0

    s3 = np.ones(bsz, dtype=bool)
    for gap in range(1, n):
        diff = np.abs(d[:, gap:] - d[:, :-gap]).max(axis=1) / 2.0
        s3 &= diff <= math.sqrt(gap) * th.s3_scale

    rss = least_squares_residual(c)[0]
    s4 = np.atleast_1d(rss) >= th.s4_bound

    # c_j = c_{j+1} and c_{j+2} - c_{j+1} = 1/2, i.e. doubled step +1
    hits = (d[:, 1:-1] == d[:, :-2]) & (d[:, 2:] - d[:, 1:-1] == 1)
    s5 = hits.sum(axis=1) >= th.index_count

    s6 = np.ones(bsz, dtype=bool)
    for y in th.s6_range:
        if 2 * y >= n:
            s6[:] = False
            break
        second = np.abs(d[:, : n - 2 * y] - 2 * d[:, y : n - y] + d[:, 2 * y :]) / 2.0
        s6 &= (second >= math.sqrt(y)).sum(axis=1) >= th.index_count
    return {"s1": s1, "s2": s2, "s3": s3, "s4": s4, "s5": s5, "s6": s6}


def check_coarse(c: CoefficientSequence) -> CoarsenessReport:
    n = c.n
    d = c.doubled
    flags = {k: bool(v[0]) for k, v in coarse_flags(d[None, :]).items()}
    th = CoarseThresholds(n)
    vals = d / 2.0
    w: dict = {}
    if not flags["s1"]:
        w["s1"] = {"index": int(np.argmax(np.abs(vals))) + 1}
    if not flags["s2"]:
        w["s2"] = {"sum": float(vals.sum())}
    if not flags["s3"]:
        best = None
        for gap in range(1, n):
            diff = np.abs(vals[gap:] - vals[:-gap])
            excess = diff - math.sqrt(gap) * th.s3_scale
            j = int(np.argmax(excess))
            if excess[j] > 0 and (best is None or excess[j] > best[0]):
                best = (float(excess[j]), j + 1, j + 1 + gap)
        w["s3"] = {"pair": [best[1], best[2]]}
    rss, a, b = least_squares_residual(vals)
    if not flags["s4"]:
        w["s4"] = {"residual": rss, "a": a, "b": b}
    if not flags["s5"]:
        hits = (d[1:-1] == d[:-2]) & (d[2:] - d[1:-1] == 1)
        w["s5"] = {"count": int(hits.sum())}
    if not flags["s6"]:
        for y in th.s6_range:
            if 2 * y >= n:
                w["s6"] = {"y": y, "count": 0}
                break
            second = np.abs(vals[: n - 2 * y] - 2 * vals[y : n - y] + vals[2 * y :])
            cnt = int((second >= math.sqrt(y)).sum())
            if cnt < th.index_count:
                w["s6"] = {"y": y, "count": cnt}
                break
    return CoarsenessReport(n=n, witnesses=w, **flags)
