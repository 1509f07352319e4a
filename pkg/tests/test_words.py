import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carpet_quant import BudgetExceededError, format_word, parse_word
from carpet_quant.carpet_model import derived_constants
from carpet_quant.fixtures import get
from carpet_quant.words import (
    THETA,
    CylinderRelation,
    SplitWord,
    SquareRelation,
    comparable,
    count_completions,
    count_psi,
    cylinder_compare,
    descendants,
    enumerate_psi,
    flat_predecessor,
    is_in_psi,
    iter_psi,
    measure,
    omega_completions,
    phi_children,
    phi_predecessor,
    psi_children,
    random_psi_word,
    rectangle,
    square_compare,
)
from oracles import brute_phi_descendants, brute_psi

FIXTURE_NAMES = ["three_column", "bm_4_2", "mixed", "three_column_short_top"]


def rand_psi(name, seed, l):
    sp = get(name)
    return sp, random_psi_word(sp, l, np.random.default_rng(seed))


@given(
    st.lists(st.tuples(st.integers(1, 9), st.integers(1, 9)), max_size=6),
    st.lists(st.integers(1, 9), max_size=8),
)
def test_word_text_roundtrip(xs, ys):
    w = SplitWord(tuple(xs), tuple(ys))
    assert parse_word(format_word(w)) == w
    assert str(w) == format_word(w)


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_word("1.1-2.1")
    with pytest.raises(ValueError):
        parse_word("1-2|3")


@pytest.mark.parametrize("name", FIXTURE_NAMES)
@pytest.mark.parametrize("l", [1, 2, 3])
def test_enumeration_matches_brute_force(name, l):
    sp = get(name)
    got = [(w.xs, w.ys) for w in enumerate_psi(sp, l)]
    assert len(got) == len(set(got))
    assert set(got) == brute_psi(sp, l)
    assert count_psi(sp, l) == len(got)


def test_frozen_counts():
    assert [count_psi(get("three_column"), l) for l in (1, 2, 3, 4)] == [81, 2187, 59049, 1594323]
    assert [count_psi(get("bm_4_2"), l) for l in range(1, 7)] == [12 * 6 ** (l - 1) for l in range(1, 7)]
    assert [count_psi(get("mixed"), l) for l in range(1, 7)] == [10, 59, 351, 2133, 13151, 82141]
    assert count_psi(get("three_column_short_top"), 1) == 47


def test_budget_refusal():
    with pytest.raises(BudgetExceededError) as info:
        enumerate_psi(get("three_column"), 3, budget=1000)
    assert info.value.count == 59049 and info.value.exit_code == 3


def test_enumeration_order_is_deterministic():
    sp = get("mixed")
    assert list(iter_psi(sp, 3)) == list(iter_psi(sp, 3))
    xs_order = [w.xs for w in iter_psi(sp, 2)]
    assert xs_order == sorted(xs_order, key=lambda xs: [sp.letters.index(x) for x in xs])


@pytest.mark.parametrize("name", FIXTURE_NAMES)
@pytest.mark.parametrize("l", [1, 2, 3])
def test_psi_tiles_unit_mass_and_disjoint(name, l):
    sp = get(name)
    words = enumerate_psi(sp, l)
    assert sum(measure(sp, w) for w in words) == pytest.approx(1.0, abs=1e-9)
    if len(words) <= 800:
        rects = [rectangle(sp, w) for w in words]
        for (w1, r1), (w2, r2) in itertools.combinations(zip(words, rects), 2):
            overlap = min(r1.x_hi, r2.x_hi) > max(r1.x_lo, r2.x_lo) and min(r1.y_hi, r2.y_hi) > max(r1.y_lo, r2.y_lo)
            assert not overlap, (w1, w2)


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_square_compare_agrees_with_rectangles(name):
    sp = get(name)
    words = [w for l in (1, 2) for w in enumerate_psi(sp, l)]
    rng = np.random.default_rng(0)
    picks = rng.choice(len(words), size=(600, 2))
    for i, k in picks:
        s1, s2 = words[i], words[k]
        r1, r2 = rectangle(sp, s1), rectangle(sp, s2)
        rel = square_compare(sp, s1, s2)
        inner = min(r1.x_hi, r2.x_hi) > max(r1.x_lo, r2.x_lo) and min(r1.y_hi, r2.y_hi) > max(r1.y_lo, r2.y_lo)
        contains = r1.x_lo <= r2.x_lo and r2.x_hi <= r1.x_hi and r1.y_lo <= r2.y_lo and r2.y_hi <= r1.y_hi
        if rel is SquareRelation.DISJOINT_INTERIORS:
            assert not inner
        elif rel is SquareRelation.CONTAINS:
            assert contains
        elif rel is SquareRelation.EQUAL:
            assert r1 == r2


@pytest.mark.parametrize("name", FIXTURE_NAMES)
@given(seed=st.integers(0, 10**6), l=st.integers(1, 7))
def test_random_psi_words_satisfy_window_and_zzz1(name, seed, l):
    sp, w = rand_psi(name, seed, l)
    assert is_in_psi(sp, w)
    assert len(w.ys) >= derived_constants(sp, 2).A4 * l - 1e-9


@pytest.mark.parametrize("name", FIXTURE_NAMES)
@given(seed=st.integers(0, 10**6), l=st.integers(1, 5))
def test_children_and_predecessors_invert(name, seed, l):
    sp, w = rand_psi(name, seed, l)
    kids = psi_children(sp, w)
    assert kids and all(flat_predecessor(sp, k) == w for k in kids)
    assert sum(measure(sp, k) for k in kids) == pytest.approx(measure(sp, w), rel=1e-9)
    pk = phi_children(sp, w)
    assert pk and all(phi_predecessor(sp, k) == w for k in pk)
    assert all(cylinder_compare(sp, w, k) is CylinderRelation.CONTAINS for k in pk)


@pytest.mark.parametrize("name", FIXTURE_NAMES)
@given(seed=st.integers(0, 10**6), l=st.integers(1, 5), extra=st.integers(1, 3))
def test_tem1_comparable_pairs(name, seed, l, extra):
    """sigma_L prefix of omega_L and comparable y-words imply |sigma| <= |omega|."""
    sp, w = rand_psi(name, seed, l)
    rng = np.random.default_rng(seed + 1)
    deeper = w
    for _ in range(extra):
        kids = psi_children(sp, deeper)
        deeper = kids[int(rng.integers(len(kids)))]
    assert comparable(w.y, deeper.y)
    assert len(w) <= len(deeper)


@pytest.mark.parametrize("name", ["three_column", "bm_4_2", "mixed"])
def test_child_length_growth_bounded_by_a1_a2(name):
    sp = get(name)
    dc = derived_constants(sp, 2)
    top = enumerate_psi(sp, 2)
    for w in top:
        kids = psi_children(sp, w)
        for k in kids:
            assert 0 <= len(k) - len(w) <= dc.A1
        level = [w]
        for _ in range(dc.A2):
            level = [k for u in level for k in psi_children(sp, u)]
        assert all(len(k) >= len(w) + 1 for k in level)


def test_omega_completions_oracle():
    sp = get("mixed")
    for l in (1, 2, 3):
        for xs in itertools.product(sp.letters, repeat=l):
            tails = omega_completions(sp, xs)
            ratio = F(1)
            for i, j in xs:
                ratio *= sp.a(i, j) / sp.b(j)
            assert count_completions(sp, ratio) == len(tails)
            for tau in tails:
                assert is_in_psi(sp, SplitWord(xs, tau))


def test_descendants_match_brute_force():
    sp = get("three_column")
    rng = np.random.default_rng(3)
    for _ in range(3):
        w = random_psi_word(sp, 1, rng)
        for h in (1, 2):
            got = {(d.xs, d.ys) for d in descendants(sp, w, h)}
            assert got == brute_phi_descendants(sp, w.xs, w.ys, h)


@pytest.mark.parametrize("name", ["three_column", "bm_4_2", "mixed"])
def test_descendant_properties(name):
    sp = get(name)
    dc = derived_constants(sp, 2)
    rng = np.random.default_rng(5)
    for _ in range(4):
        w = random_psi_word(sp, int(rng.integers(1, 4)), rng)
        one = descendants(sp, w, 1)
        assert sp.N <= len(one) <= sp.N * sp.m ** dc.A1
        assert all(len(d.ys) - len(w.ys) <= dc.A1 for d in one)
        deep = descendants(sp, w, dc.A6 + 1, budget=10**6)
        assert all(len(d.ys) >= len(w.ys) + 1 for d in deep)


def test_theta_has_psi_roots_as_children():
    sp = get("bm_4_2")
    assert psi_children(sp, THETA) == enumerate_psi(sp, 1)


def test_crossed_comparability_raises():
    sp = get("three_column")
    with pytest.raises(ValueError):
        cylinder_compare(sp, SplitWord(((1, 1),), (1, 2)), SplitWord(((1, 1), (1, 1)), (1,)))
