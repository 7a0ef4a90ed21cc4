from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dicelab.patterns import (
    BUILTIN_PATTERNS,
    DigraphPattern,
    canonical,
    canonicalize,
    consistent_codes,
    decode,
    describe,
    encode,
    get_pattern,
    labelled_probability,
    load_pattern_file,
    pair_list,
    permute_code,
)


@given(st.integers(2, 5), st.data())
def test_encode_decode_round_trip(m, data):
    code = data.draw(st.integers(0, 3 ** len(pair_list(m)) - 1))
    assert int(encode(np.array(decode(code, m)))) == code


@pytest.mark.parametrize("m", [2, 3, 4])
def test_orbits_partition_all_outcomes(m):
    total = 3 ** len(pair_list(m))
    classes = {}
    for code in range(total):
        c, orbit = canonical(code, m)
        classes.setdefault(c, set()).add(code)
        assert c <= code
    assert sum(len(v) for v in classes.values()) == total
    for c, members in classes.items():
        assert canonical(c, m)[1] == len(members)


def test_three_player_class_count():
    # win/loss/tie outcomes on 3 labelled players fall into 7 unlabelled classes
    assert len({canonical(c, 3)[0] for c in range(27)}) == 7


@given(st.permutations(range(4)), st.integers(0, 3**6 - 1))
def test_canonical_is_relabel_invariant(perm, code):
    assert canonical(permute_code(code, 4, tuple(perm)), 4) == canonical(code, 4)


def test_canonicalize_vectorized_matches_scalar():
    codes = np.arange(27)
    assert canonicalize(codes, 3).tolist() == [canonical(int(c), 3)[0] for c in codes]


@pytest.mark.parametrize("name", sorted(BUILTIN_PATTERNS))
def test_uniform_outcomes_give_a_third_per_edge(name):
    pat = get_pattern(name)
    m = max(pat.m, 3)
    total = 3 ** len(pair_list(m))
    probs = {}
    for code in range(total):
        c, _ = canonical(code, m)
        probs[c] = probs.get(c, 0) + 1 / total
    assert labelled_probability(pat, probs, m) == pytest.approx(3.0 ** -pat.e)


def test_consistent_codes_size():
    pat = get_pattern("cycle3")
    assert consistent_codes(pat).size == 1
    assert consistent_codes(get_pattern("edge")).size == 1
    padded = DigraphPattern(4, pat.edges)
    assert consistent_codes(padded).size == 27


def test_describe():
    assert describe(0, 3) == "1>2 1>3 2>3"
    assert describe(int(encode(np.array([2, 1, 0]))), 3) == "2>1 1=3 2>3"


class TestDigraphPattern:
    def test_validation(self):
        with pytest.raises(ValueError):
            DigraphPattern(3, ((1, 4),))
        with pytest.raises(ValueError):
            DigraphPattern(3, ((1, 1),))
        with pytest.raises(ValueError):
            DigraphPattern(3, ((1, 2), (2, 1)))

    def test_flip_and_reverse(self):
        c3 = get_pattern("cycle3")
        assert c3.flipped_at(1).edges == ((2, 1), (2, 3), (1, 3))
        assert c3.reversed().edges == ((2, 1), (3, 2), (1, 3))

    def test_forests(self):
        assert get_pattern("path3").is_forest()
        assert not get_pattern("cycle4").is_forest()

    def test_json_file(self, tmp_path):
        p = tmp_path / "star.json"
        p.write_text(json.dumps({"m": 4, "edges": [[1, 2], [1, 3], [1, 4]]}))
        pat = load_pattern_file(p)
        assert pat.name == "star" and pat.e == 3 and pat.is_forest()
        assert DigraphPattern.from_json(pat.to_json()) == pat

    def test_unknown_builtin(self):
        with pytest.raises(KeyError):
            get_pattern("nope")
