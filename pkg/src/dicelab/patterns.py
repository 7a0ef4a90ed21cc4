"""Digraph patterns and canonical labelling of tie-aware tournaments.

A complete outcome on m players assigns each pair j < k one digit:
0 when j wins, 1 for a tie, 2 when k wins. Pairs are ordered
lexicographically and the outcome is packed as sum digit * 3**index.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

WIN, TIE, LOSS = 0, 1, 2


@dataclass(frozen=True)
class DigraphPattern:
    """Directed edges (j, k) on vertices 1..m meaning "j beats k"."""

    m: int
    edges: tuple[tuple[int, int], ...]
    name: str = ""

    def __post_init__(self):
        edges = tuple((int(j), int(k)) for j, k in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.m < 2:
            raise ValueError("a pattern needs at least two vertices")
        seen = set()
        for j, k in edges:
            if not (1 <= j <= self.m and 1 <= k <= self.m):
                raise ValueError(f"edge {(j, k)} references a vertex outside 1..{self.m}")
            if j == k:
                raise ValueError("self-loops are not allowed")
            key = frozenset((j, k))
            if key in seen:
                raise ValueError(f"pair {sorted(key)} appears twice")
            seen.add(key)

    @property
    def e(self) -> int:
        return len(self.edges)

    def zero_based(self) -> list[tuple[int, int]]:
        return [(j - 1, k - 1) for j, k in self.edges]

    def flipped_at(self, v: int) -> "DigraphPattern":
        """Reverse every edge incident to vertex v."""
        edges = tuple((k, j) if v in (j, k) else (j, k) for j, k in self.edges)
        return DigraphPattern(self.m, edges, f"{self.name}~{v}" if self.name else "")

    def reversed(self) -> "DigraphPattern":
        return DigraphPattern(self.m, tuple((k, j) for j, k in self.edges), self.name + "~rev" if self.name else "")

    def relabeled(self, perm) -> "DigraphPattern":
        """Apply vertex map v -> perm[v-1] (perm is a permutation of 1..m)."""
        return DigraphPattern(self.m, tuple((perm[j - 1], perm[k - 1]) for j, k in self.edges), self.name)

    def is_forest(self) -> bool:
        parent = list(range(self.m))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for j, k in self.zero_based():
            rj, rk = find(j), find(k)
            if rj == rk:
                return False
            parent[rj] = rk
        return True

    def to_json(self) -> dict:
        return {"name": self.name, "m": self.m, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, d: dict) -> "DigraphPattern":
        return cls(int(d["m"]), tuple(tuple(e) for e in d["edges"]), str(d.get("name", "")))


def _cycle(m: int, name: str) -> DigraphPattern:
    return DigraphPattern(m, tuple((i, i % m + 1) for i in range(1, m + 1)), name)


def _path(e: int, name: str) -> DigraphPattern:
    return DigraphPattern(e + 1, tuple((i, i + 1) for i in range(1, e + 1)), name)


BUILTIN_PATTERNS: dict[str, DigraphPattern] = {
    "edge": DigraphPattern(2, ((1, 2),), "edge"),
    "path2": _path(2, "path2"),
    "path3": _path(3, "path3"),
    "cycle3": _cycle(3, "cycle3"),
    "cycle4": _cycle(4, "cycle4"),
    "cycle5": _cycle(5, "cycle5"),
    "tournament3_transitive": DigraphPattern(3, ((1, 2), (2, 3), (1, 3)), "tournament3_transitive"),
}


def get_pattern(name: str) -> DigraphPattern:
    try:
        return BUILTIN_PATTERNS[name]
    except KeyError:
        raise KeyError(f"unknown pattern {name!r}; built-ins are {sorted(BUILTIN_PATTERNS)}") from None


def load_pattern_file(path: str | Path) -> DigraphPattern:
    data = json.loads(Path(path).read_text())
    if "name" not in data:
        data["name"] = Path(path).stem
    return DigraphPattern.from_json(data)


# ------------------------------------------------------------ pair coding


@lru_cache(maxsize=None)
def pair_list(m: int) -> tuple[tuple[int, int], ...]:
    return tuple(itertools.combinations(range(m), 2))


@lru_cache(maxsize=None)
def pair_index(m: int) -> dict[tuple[int, int], int]:
    return {p: i for i, p in enumerate(pair_list(m))}


def encode(digits: np.ndarray) -> np.ndarray:
    """Pack a (..., P) array of pair digits into integer codes."""
    digits = np.asarray(digits, dtype=np.int64)
    weights = 3 ** np.arange(digits.shape[-1], dtype=np.int64)
    return digits @ weights


def decode(code: int, m: int) -> list[int]:
    out = []
    for _ in pair_list(m):
        code, d = divmod(code, 3)
        out.append(d)
    return out


def outcome_digits(signs: np.ndarray) -> np.ndarray:
    """Map pair signs (+1 first wins, 0 tie, -1 second wins) to digits."""
    return (1 - np.sign(signs)).astype(np.int64)


def permute_code(code: int, m: int, perm: tuple[int, ...]) -> int:
    """Code of the outcome after relabelling vertex v as perm[v]."""
    digits = decode(code, m)
    idx = pair_index(m)
    new = [0] * len(digits)
    for (j, k), d in zip(pair_list(m), digits):
        a, b = perm[j], perm[k]
        if a < b:
            new[idx[(a, b)]] = d
        else:
            new[idx[(b, a)]] = 2 - d
    return int(encode(np.array(new)))


@lru_cache(maxsize=200_000)
def canonical(code: int, m: int) -> tuple[int, int]:
    """Smallest code over vertex relabellings, and the orbit size."""
    images = {permute_code(code, m, p) for p in itertools.permutations(range(m))}
    return min(images), len(images)


def canonicalize(codes: np.ndarray, m: int) -> np.ndarray:
    uniq, inverse = np.unique(codes, return_inverse=True)
    canon = np.array([canonical(int(c), m)[0] for c in uniq], dtype=np.int64)
    return canon[inverse]


def describe(code: int, m: int) -> str:
    """Human-readable form such as '1>2 1=3 3>2'."""
    parts = []
    for (j, k), d in zip(pair_list(m), decode(code, m)):
        if d == WIN:
            parts.append(f"{j + 1}>{k + 1}")
        elif d == TIE:
            parts.append(f"{j + 1}={k + 1}")
        else:
            parts.append(f"{k + 1}>{j + 1}")
    return " ".join(parts)


def consistent_codes(pattern: DigraphPattern) -> np.ndarray:
    """All complete labelled outcomes on pattern.m players containing its edges."""
    m = pattern.m
    idx = pair_index(m)
    fixed: dict[int, int] = {}
    for j, k in pattern.zero_based():
        if j < k:
            fixed[idx[(j, k)]] = WIN
        else:
            fixed[idx[(k, j)]] = LOSS
    npairs = len(pair_list(m))
    choices = [(fixed[i],) if i in fixed else (WIN, TIE, LOSS) for i in range(npairs)]
    digits = np.array(list(itertools.product(*choices)), dtype=np.int64)
    return encode(digits)


def labelled_probability(pattern: DigraphPattern, canonical_probs: dict[int, float], m: int):
    """Probability of the labelled digraph event from canonical-class masses.

    Exchangeable players spread a class's mass evenly over its orbit, so
    each labelled outcome carries mass / orbit_size. Works with floats or
    Fractions.
    """
    if pattern.m > m:
        raise ValueError("pattern has more vertices than the tally")
    if pattern.m < m:
        pattern = DigraphPattern(m, pattern.edges, pattern.name)
    total = 0
    for code in consistent_codes(pattern).tolist():
        canon, orbit = canonical(int(code), m)
        mass = canonical_probs.get(canon, 0)
        if mass:
            total = total + mass / orbit
    return total
