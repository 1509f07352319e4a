"""Word combinatorics for approximate squares and product cylinders.

A :class:`SplitWord` is ``sigma = sigma_L * sigma_R``: an x-part of letters
``(i, j)`` and a y-tail of column indices.  Its y-word ``sigma_y`` is the
column sequence of the x-part followed by the tail.  The same words carry
two partial orders: geometric containment of approximate squares (Psi) and
the coordinatewise prefix order of product cylinders (Phi).

All window tests go through ``spec.scale`` so that exact mode compares
fractions and float mode compares log-products with a tie tolerance.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

from .carpet_model import BudgetExceededError, CarpetSpec

Letter = tuple[int, int]
DEFAULT_BUDGET = 5_000_000


@dataclass(frozen=True, order=True)
class SplitWord:
    xs: tuple[Letter, ...] = ()
    ys: tuple[int, ...] = ()

    @property
    def l(self) -> int:
        return len(self.xs)

    @property
    def y(self) -> tuple[int, ...]:
        """The full y-word: columns of the x-part, then the tail."""
        return tuple(j for _, j in self.xs) + self.ys

    def __len__(self) -> int:
        return len(self.xs) + len(self.ys)

    @property
    def is_empty(self) -> bool:
        return not self.xs and not self.ys

    def __str__(self) -> str:
        return format_word(self)


THETA = SplitWord()


@dataclass(frozen=True)
class Rect:
    x_lo: Fraction | float
    x_hi: Fraction | float
    y_lo: Fraction | float
    y_hi: Fraction | float

    @property
    def width(self):
        return self.x_hi - self.x_lo

    @property
    def height(self):
        return self.y_hi - self.y_lo

    @property
    def diam(self) -> float:
        return math.hypot(float(self.width), float(self.height))

    @property
    def diam2(self):
        return self.width * self.width + self.height * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (float(self.x_lo + self.x_hi) / 2, float(self.y_lo + self.y_hi) / 2)


class SquareRelation(enum.Enum):
    DISJOINT_INTERIORS = "DisjointInteriors"
    CONTAINS = "Contains"
    CONTAINED_IN = "ContainedIn"
    EQUAL = "Equal"


class CylinderRelation(enum.Enum):
    DISJOINT = "Disjoint"
    CONTAINS = "Contains"
    CONTAINED_IN = "ContainedIn"
    EQUAL = "Equal"


# --------------------------------------------------------------------------
# serialization


def format_word(w: SplitWord) -> str:
    left = "-".join(f"{i}.{j}" for i, j in w.xs)
    right = "-".join(str(j) for j in w.ys)
    return f"{left}|{right}"


def parse_word(text: str) -> SplitWord:
    text = text.strip()
    if "|" not in text:
        raise ValueError(f"missing '|' in word {text!r}")
    left, right = text.split("|", 1)
    xs = tuple(tuple(int(v) for v in tok.split(".")) for tok in left.split("-") if tok)
    ys = tuple(int(tok) for tok in right.split("-") if tok)
    if any(len(x) != 2 for x in xs):
        raise ValueError(f"bad x-letter in {text!r}")
    return SplitWord(xs, ys)  # type: ignore[arg-type]


def check_letters(spec: CarpetSpec, w: SplitWord) -> None:
    for i, j in w.xs:
        if not (1 <= j <= spec.m and 1 <= i <= spec.columns[j - 1].n):
            raise ValueError(f"letter ({i},{j}) is not in the alphabet")
    for j in w.ys:
        if not 1 <= j <= spec.m:
            raise ValueError(f"column {j} is not in the alphabet")


# --------------------------------------------------------------------------
# products


def prod_a(spec: CarpetSpec, xs: Sequence[Letter]):
    sc = spec.scale
    v = sc.one
    for i, j in xs:
        v = sc.mul(v, spec.sa(i, j))
    return v


def prod_b(spec: CarpetSpec, cols: Sequence[int]):
    sc = spec.scale
    v = sc.one
    for j in cols:
        v = sc.mul(v, spec.sb(j))
    return v


def log_measure(spec: CarpetSpec, w: SplitWord) -> float:
    """``log mu(F_sigma) = log p_{sigma_L} + log q_{sigma_R}``."""
    lp, lq = spec.log_p, spec.log_q
    return sum(lp[x] for x in w.xs) + sum(lq[j] for j in w.ys)


def measure(spec: CarpetSpec, w: SplitWord) -> float:
    return math.exp(log_measure(spec, w))


def log_e_r(spec: CarpetSpec, w: SplitWord, r: float) -> float:
    """``log E_r(sigma)``; zero for the empty word."""
    la = spec.log_a
    return log_measure(spec, w) + r * sum(la[x] for x in w.xs)


def e_r(spec: CarpetSpec, w: SplitWord, r: float) -> float:
    return math.exp(log_e_r(spec, w, r))


def e_r_value(spec: CarpetSpec, w: SplitWord, r: float):
    """E_r on the E-scale (a Fraction in exact mode with integer r)."""
    sc = spec.e_scale(r)
    if not sc.exact:
        return log_e_r(spec, w, r)
    v = Fraction(1)
    for i, j in w.xs:
        v *= spec.p(i, j) * spec.a(i, j) ** int(r)
    for j in w.ys:
        v *= spec.q(j)
    return v


# --------------------------------------------------------------------------
# windows


def stop_index(spec: CarpetSpec, target, cols: Sequence[int], start=None) -> int | None:
    """Shortest ``k`` with ``start * b_{cols[:k]} < target``, or None.

    ``start`` defaults to 1.  Ties are broken by the exact comparison policy of the model.
    """
    sc = spec.scale
    v = sc.one if start is None else start
    if sc.gt(target, v):
        return 0
    for k, j in enumerate(cols, start=1):
        v = sc.mul(v, spec.sb(j))
        if sc.gt(target, v):
            return k
    return None


def is_in_psi(spec: CarpetSpec, w: SplitWord) -> bool:
    """``b_{sigma_y^-} >= a_{sigma_L} > b_{sigma_y}`` with a non-empty x-part."""
    if not w.xs:
        return False
    ycols = w.y
    if not ycols:
        return False
    sc = spec.scale
    a = prod_a(spec, w.xs)
    b_prev = prod_b(spec, ycols[:-1])
    b_full = sc.mul(b_prev, spec.sb(ycols[-1]))
    return sc.ge(b_prev, a) and sc.gt(a, b_full)


def psi_tail_length(spec: CarpetSpec, xs: Sequence[Letter], tail: Sequence[int]) -> int | None:
    """Length of the unique prefix of ``tail`` completing ``xs`` in Psi."""
    a = prod_a(spec, xs)
    start = prod_b(spec, [j for _, j in xs])
    return stop_index(spec, a, tail, start)


def _completions(spec: CarpetSpec, ratio) -> list[tuple[int, ...]]:
    """All y-words tau with ``b_{tau^-} >= ratio > b_tau`` (``[()]`` if ratio > 1)."""
    sc = spec.scale
    if sc.gt(ratio, sc.one):
        return [()]
    out: list[tuple[int, ...]] = []
    sb = [spec.sb(j) for j in range(1, spec.m + 1)]
    # lexicographic DFS; a None value marks a finished word
    stack: list[tuple[tuple[int, ...], object]] = [((), sc.one)]
    while stack:
        prefix, val = stack.pop()
        if val is None:
            out.append(prefix)
            continue
        for j in range(spec.m, 0, -1):
            v = sc.mul(val, sb[j - 1])
            stack.append((prefix + (j,), None if sc.gt(ratio, v) else v))
    return out


def omega_completions(spec: CarpetSpec, omega: Sequence[Letter]) -> list[tuple[int, ...]]:
    """Omega(omega): y-tails completing the x-word ``omega`` to a Psi word."""
    if not omega:
        raise ValueError("omega must be non-empty")
    ratio = spec.scale.div(prod_a(spec, omega), prod_b(spec, [j for _, j in omega]))
    return _completions(spec, ratio)


def count_completions(spec: CarpetSpec, ratio) -> int:
    """``len(_completions(spec, ratio))`` without building the words."""
    sc = spec.scale
    sb = [spec.sb(j) for j in range(1, spec.m + 1)]

    @lru_cache(maxsize=None)
    def count(key):
        rho = keys[key]
        total = 0
        for s in sb:
            if sc.gt(rho, s):
                total += 1
            else:
                nxt = sc.div(rho, s)
                k = sc.key(nxt)
                keys.setdefault(k, nxt)
                total += count(k)
        return total

    keys: dict = {}
    if sc.gt(ratio, sc.one):
        return 1
    k0 = sc.key(ratio)
    keys[k0] = ratio
    return count(k0)


def count_psi(spec: CarpetSpec, l: int) -> int:
    """card(Psi_l), counted over letter multisets with multinomial weights."""
    sc = spec.scale
    L = spec.letters
    ratio_letter = [sc.div(spec.sa(i, j), spec.sb(j)) for i, j in L]
    total = 0
    cache: dict = {}
    for combo in itertools.combinations_with_replacement(range(len(L)), l):
        counts = [0] * len(L)
        for k in combo:
            counts[k] += 1
        ratio = sc.one
        for k, c in enumerate(counts):
            if c:
                ratio = sc.mul(ratio, sc.power(ratio_letter[k], c))
        key = sc.key(ratio)
        if key not in cache:
            cache[key] = count_completions(spec, ratio)
        mult = math.factorial(l)
        for c in counts:
            mult //= math.factorial(c)
        total += mult * cache[key]
    return total


def iter_psi(spec: CarpetSpec, l: int) -> Iterator[SplitWord]:
    """Psi_l in deterministic order: x-words lexicographic in (j, i), then tails."""
    if l < 1:
        raise ValueError("l must be >= 1")
    sc = spec.scale
    L = spec.letters
    letter_ratio = [sc.div(spec.sa(i, j), spec.sb(j)) for i, j in L]
    tails: dict = {}

    def completions(ratio):
        k = sc.key(ratio)
        if k not in tails:
            tails[k] = _completions(spec, ratio)
        return tails[k]

    def walk(prefix: tuple, ratio, depth: int):
        for letter, lr in zip(L, letter_ratio):
            word, rho = prefix + (letter,), sc.mul(ratio, lr)
            if depth == 1:
                for tau in completions(rho):
                    yield SplitWord(word, tau)
            else:
                yield from walk(word, rho, depth - 1)

    yield from walk((), sc.one, l)


def enumerate_psi(spec: CarpetSpec, l: int, budget: int = DEFAULT_BUDGET) -> list[SplitWord]:
    """All of Psi_l, refusing up front when the count exceeds ``budget``."""
    total = count_psi(spec, l)
    if total > budget:
        raise BudgetExceededError(
            f"Psi_{l} has {total} words, budget is {budget}", count=total, budget=budget
        )
    return list(iter_psi(spec, l))


# --------------------------------------------------------------------------
# geometry


def rectangle(spec: CarpetSpec, w: SplitWord) -> Rect:
    """Approximate square F_sigma (exact coordinates in exact mode)."""
    one = Fraction(1) if spec.exact else 1.0
    x_lo, scale = spec.zero, one
    for i, j in w.xs:
        x_lo += scale * spec.c(i, j)
        scale *= spec.a(i, j)
    x_hi = x_lo + scale
    y_lo, scale = spec.zero, one
    for j in w.y:
        y_lo += scale * spec.d(j)
        scale *= spec.b(j)
    return Rect(x_lo, x_hi, y_lo, y_lo + scale)


def _is_prefix(u: Sequence, v: Sequence) -> bool:
    return len(u) <= len(v) and tuple(v[: len(u)]) == tuple(u)


def comparable(u: Sequence, v: Sequence) -> bool:
    return _is_prefix(u, v) or _is_prefix(v, u)


def square_compare(spec: CarpetSpec, s1: SplitWord, s2: SplitWord) -> SquareRelation:
    """Relation of F_{s1} to F_{s2}, decided from the words alone."""
    if s1 == s2:
        return SquareRelation.EQUAL
    if not comparable(s1.xs, s2.xs) or not comparable(s1.y, s2.y):
        return SquareRelation.DISJOINT_INTERIORS
    if _is_prefix(s1.xs, s2.xs):
        return SquareRelation.CONTAINS
    return SquareRelation.CONTAINED_IN


def cylinder_compare(spec: CarpetSpec, s1: SplitWord, s2: SplitWord) -> CylinderRelation:
    """Relation of the product cylinders [s1] and [s2]."""
    if s1 == s2:
        return CylinderRelation.EQUAL
    if not comparable(s1.xs, s2.xs) or not comparable(s1.ys, s2.ys):
        return CylinderRelation.DISJOINT
    if _is_prefix(s1.xs, s2.xs) and _is_prefix(s1.ys, s2.ys):
        return CylinderRelation.CONTAINS
    if _is_prefix(s2.xs, s1.xs) and _is_prefix(s2.ys, s1.ys):
        return CylinderRelation.CONTAINED_IN
    raise ValueError(f"crossed comparability between {s1} and {s2}: not both Phi words")


# --------------------------------------------------------------------------
# predecessors and children


def flat_predecessor(spec: CarpetSpec, w: SplitWord) -> SplitWord:
    """sigma^flat: drop the last x-letter and cut sigma_y back to its window."""
    if w.l <= 1:
        return THETA
    xs = w.xs[:-1]
    ycols = w.y
    a = prod_a(spec, xs)
    k = stop_index(spec, a, ycols)
    if k is None or k < len(xs):
        raise ValueError(f"{w} is not a Psi word")
    return SplitWord(xs, ycols[len(xs) : k])


def phi_predecessor(spec: CarpetSpec, w: SplitWord) -> SplitWord:
    """sigma^-: drop the last x-letter (with its column), keep a prefix of sigma_R."""
    if w.l <= 1:
        return THETA
    xs = w.xs[:-1]
    a = prod_a(spec, xs)
    start = prod_b(spec, [j for _, j in xs])
    k = stop_index(spec, a, w.ys, start)
    if k is None or k == 0:
        raise ValueError(f"{w} is not a Phi word")
    return SplitWord(xs, w.ys[:k])


def psi_roots(spec: CarpetSpec) -> list[SplitWord]:
    return list(iter_psi(spec, 1))


def psi_children(spec: CarpetSpec, w: SplitWord) -> list[SplitWord]:
    """Words rho of Psi_{l+1} with rho^flat = w (the squares tiling F_w)."""
    if w.is_empty:
        return psi_roots(spec)
    sc = spec.scale
    j0 = w.ys[0]
    b_y = prod_b(spec, w.y)
    a = prod_a(spec, w.xs)
    rest = w.ys[1:]
    out = []
    for i in range(1, spec.columns[j0 - 1].n + 1):
        a_new = sc.mul(a, spec.sa(i, j0))
        for tau in _completions(spec, sc.div(a_new, b_y)):
            out.append(SplitWord(w.xs + ((i, j0),), rest + tau))
    return out


def phi_children(spec: CarpetSpec, w: SplitWord) -> list[SplitWord]:
    """Words rho of Phi_{l+1} with rho^- = w."""
    if w.is_empty:
        return psi_roots(spec)
    sc = spec.scale
    b_y = prod_b(spec, w.y)
    a = prod_a(spec, w.xs)
    out = []
    for i, j in spec.letters:
        a_new = sc.mul(a, spec.sa(i, j))
        ratio = sc.div(a_new, sc.mul(b_y, spec.sb(j)))
        for tau in _completions(spec, ratio):
            out.append(SplitWord(w.xs + ((i, j),), w.ys + tau))
    return out


def descendants(spec: CarpetSpec, w: SplitWord, h: int, budget: int = DEFAULT_BUDGET) -> list[SplitWord]:
    """Lambda_h(w): words of Phi_{l+h} above ``w`` in the product order."""
    if h < 1:
        raise ValueError("h must be >= 1")
    level = [w]
    for _ in range(h):
        nxt: list[SplitWord] = []
        for u in level:
            nxt.extend(phi_children(spec, u))
            if len(nxt) > budget:
                raise BudgetExceededError(
                    f"descendants exceed budget {budget}", count=len(nxt), budget=budget
                )
        level = nxt
    return level


def random_x_word(spec: CarpetSpec, length: int, rng) -> tuple[Letter, ...]:
    L = spec.letters
    idx = rng.integers(0, len(L), size=length)
    return tuple(L[k] for k in idx)


def random_psi_word(spec: CarpetSpec, l: int, rng) -> SplitWord:
    """A Psi_l word with uniformly random x-letters and a random completion path."""
    xs = random_x_word(spec, l, rng)
    sc = spec.scale
    ratio = sc.div(prod_a(spec, xs), prod_b(spec, [j for _, j in xs]))
    tail: list[int] = []
    v = sc.one
    if sc.gt(ratio, v):
        return SplitWord(xs, ())
    while True:
        j = int(rng.integers(1, spec.m + 1))
        tail.append(j)
        v = sc.mul(v, spec.sb(j))
        if sc.gt(ratio, v):
            return SplitWord(xs, tuple(tail))
