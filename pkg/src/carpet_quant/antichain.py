"""Stopping-set anti-chains and the separated families built from them.

``build_lambda`` stops a depth-first descent of the square tree (children of
sigma tile F_sigma) at the first word whose ``E_r`` drops below
``eta_low_r ** n``; ``build_gamma`` does the same on the product-cylinder
tree.  ``build_bar`` and ``build_star`` turn Lambda_{n,r} into a family of
approximate squares that are pairwise well separated relative to their
diameters, and ``check_separation`` measures that separation exactly.

All certification is symbolic (prefix tests) or exact (rational geometry in
exact mode); nothing is decided from rendered floating coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .carpet_model import (
    BudgetExceededError,
    CarpetSpec,
    PreconditionError,
    derived_constants,
    eta_low_power,
)
from .words import (
    DEFAULT_BUDGET,
    SplitWord,
    _completions,
    e_r_value,
    log_e_r,
    log_measure,
    prod_a,
    prod_b,
    rectangle,
    stop_index,
)

KINDS = ("LambdaPsi", "GammaPhi", "Bar", "Star")


@dataclass(frozen=True)
class AntiChain:
    kind: str
    words: tuple[SplitWord, ...]
    n: int
    r: float
    certified: dict = field(default_factory=dict, compare=False)
    # for Bar/Star: index-aligned Lambda_{n,r} word each member was built from
    parents: tuple[SplitWord, ...] | None = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def phi(self) -> int:
        return len(self.words)

    @property
    def l_min(self) -> int:
        return min(w.l for w in self.words)

    def with_flags(self, **flags) -> "AntiChain":
        merged = dict(self.certified)
        merged.update(flags)
        return AntiChain(self.kind, self.words, self.n, self.r, merged, self.parents)

    def to_text(self) -> str:
        return "".join(f"{w}\n" for w in self.words)

    def sidecar(self, spec: CarpetSpec) -> dict:
        dc = derived_constants(spec, self.r)
        return {
            "kind": self.kind,
            "n": self.n,
            "r": self.r,
            "count": len(self.words),
            "l_min": self.l_min if self.words else None,
            "certified": {k: _plain(v) for k, v in self.certified.items()},
            "constants": {k: _plain(getattr(dc, k)) for k in dc.__dataclass_fields__},
        }

    def write(self, spec: CarpetSpec, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())
        with open(f"{path}.json", "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(spec), fh, indent=2, sort_keys=True)


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


# --------------------------------------------------------------------------
# stopping-set descent


class _Descent:
    """Shared machinery: incremental products and cached completions."""

    def __init__(self, spec: CarpetSpec, r: float) -> None:
        self.spec = spec
        self.r = r
        self.sc = spec.scale
        self.esc = spec.e_scale(r)
        self._tails: dict = {}
        exact_e = self.esc.exact
        ri = int(r) if exact_e else r
        self.letter_e = {}
        for i, j in spec.letters:
            if exact_e:
                self.letter_e[(i, j)] = spec.p(i, j) * spec.a(i, j) ** ri
            else:
                self.letter_e[(i, j)] = spec.log_p[(i, j)] + r * spec.log_a[(i, j)]
        self.col_q = {
            j: (spec.q(j) if exact_e else spec.log_q[j]) for j in range(1, spec.m + 1)
        }

    def tails(self, ratio):
        """Completions of ``ratio`` with their q-products (E-scale) and b-products."""
        key = self.sc.key(ratio)
        if key not in self._tails:
            out = []
            for tau in _completions(self.spec, ratio):
                qv = self.esc.one
                for j in tau:
                    qv = self.esc.mul(qv, self.col_q[j])
                out.append((tau, qv, prod_b(self.spec, tau)))
            self._tails[key] = out
        return self._tails[key]

    def psi_children(self, node):
        """Children in the square tree.  A node is ``(word, a_L, b_y, E)``."""
        spec, sc, esc = self.spec, self.sc, self.esc
        w, a, by, e = node
        if w.is_empty:
            for i, j in spec.letters:
                a_new = spec.sa(i, j)
                b_new = spec.sb(j)
                e_new = self.letter_e[(i, j)]
                for tau, qv, bt in self.tails(sc.div(a_new, b_new)):
                    yield (SplitWord(((i, j),), tau), a_new, sc.mul(b_new, bt), esc.mul(e_new, qv))
            return
        j0 = w.ys[0]
        rest = w.ys[1:]
        e_base = esc.div(e, self.col_q[j0])
        for i in range(1, spec.columns[j0 - 1].n + 1):
            a_new = sc.mul(a, spec.sa(i, j0))
            e_new = esc.mul(e_base, self.letter_e[(i, j0)])
            for tau, qv, bt in self.tails(sc.div(a_new, by)):
                yield (SplitWord(w.xs + ((i, j0),), rest + tau), a_new, sc.mul(by, bt), esc.mul(e_new, qv))

    def phi_children(self, node):
        spec, sc, esc = self.spec, self.sc, self.esc
        w, a, by, e = node
        for i, j in spec.letters:
            a_new = sc.mul(a, spec.sa(i, j))
            b_new = sc.mul(by, spec.sb(j))
            e_new = esc.mul(e, self.letter_e[(i, j)])
            for tau, qv, bt in self.tails(sc.div(a_new, b_new)):
                yield (SplitWord(w.xs + ((i, j),), w.ys + tau), a_new, sc.mul(b_new, bt), esc.mul(e_new, qv))

    def stop(self, children, threshold, budget: int) -> list:
        """Leaves of the descent below ``threshold``, in depth-first order."""
        esc = self.esc
        root = (SplitWord(), self.sc.one, self.sc.one, esc.one)
        out: list = []
        stack = [iter(children(root))]
        while stack:
            node = next(stack[-1], None)
            if node is None:
                stack.pop()
                continue
            if esc.gt(threshold, node[3]):
                out.append(node)
                if len(out) > budget:
                    raise BudgetExceededError(
                        f"anti-chain exceeds budget {budget}", count=len(out), budget=budget
                    )
            else:
                stack.append(iter(children(node)))
        return out


def build_lambda(spec: CarpetSpec, n: int, r: float, budget: int = DEFAULT_BUDGET) -> AntiChain:
    """Lambda_{n,r}: words with ``E_r(sigma_flat) >= eta^n > E_r(sigma)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = _Descent(spec, r)
    leaves = d.stop(d.psi_children, eta_low_power(spec, r, n), budget)
    words = tuple(node[0] for node in leaves)
    return AntiChain("LambdaPsi", words, n, float(r), {"phi": len(words), "l_min": min(w.l for w in words)})


def build_gamma(spec: CarpetSpec, n: int, r: float, budget: int = DEFAULT_BUDGET) -> AntiChain:
    """Gamma_{n,r}: cylinder words with ``E_r(sigma^-) >= eta^n > E_r(sigma)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = _Descent(spec, r)
    leaves = d.stop(d.phi_children, eta_low_power(spec, r, n), budget)
    words = tuple(node[0] for node in leaves)
    return AntiChain("GammaPhi", words, n, float(r), {"count": len(words)})


def count_lambda(spec: CarpetSpec, n: int, r: float, budget: int = DEFAULT_BUDGET) -> int:
    return len(build_lambda(spec, n, r, budget))


# --------------------------------------------------------------------------
# separated families


def _complete(spec: CarpetSpec, xs: Sequence, tail: Sequence[int], filler: int) -> SplitWord:
    """The Psi word with x-part ``xs`` whose tail is a prefix of ``tail + filler*``."""
    a = prod_a(spec, xs)
    start = prod_b(spec, [j for _, j in xs])
    k = stop_index(spec, a, tail, start)
    if k is not None:
        return SplitWord(tuple(xs), tuple(tail[:k]))
    sc = spec.scale
    v = sc.mul(start, prod_b(spec, tail))
    ext = list(tail)
    while not sc.gt(a, v):
        ext.append(filler)
        v = sc.mul(v, spec.sb(filler))
    return SplitWord(tuple(xs), tuple(ext))


def bar_column(spec: CarpetSpec) -> int | None:
    """Smallest column with at least two cells (None when every column has one)."""
    for j, col in enumerate(spec.columns, start=1):
        if col.n >= 2:
            return j
    return None


def bar_word(spec: CarpetSpec, sigma: SplitWord, j0: int) -> SplitWord:
    """sigma_L * (1, j0) * (n_j0, j0), tail = sigma_R re-extended (by column m) to the window."""
    xs = sigma.xs + ((1, j0), (spec.columns[j0 - 1].n, j0))
    return _complete(spec, xs, sigma.ys, spec.m)


def build_bar(spec: CarpetSpec, lam: AntiChain, r: float | None = None) -> AntiChain:
    """B_{n,r} from Lambda_{n,r}."""
    r = lam.r if r is None else r
    if lam.kind != "LambdaPsi":
        raise ValueError("build_bar expects a Lambda family")
    j0 = bar_column(spec)
    if j0 is None:
        raise PreconditionError(
            "every column has a single cell; use build_star on the Lambda family directly",
            code="SINGLE_CELL_COLUMNS",
        )
    dc = derived_constants(spec, r)
    if not lam.n > dc.T1_r:
        raise PreconditionError(f"need n > T1_r = {dc.T1_r}, got n = {lam.n}", code="T1", threshold=dc.T1_r)
    words = []
    truncated = 0
    for sigma in lam.words:
        w = bar_word(spec, sigma, j0)
        truncated += len(w.ys) < len(sigma.ys)
        words.append(w)
    return AntiChain("Bar", tuple(words), lam.n, float(r), {"j0": j0, "tail_truncations": truncated}, lam.words)


def star_word(spec: CarpetSpec, base: SplitWord, promote: int) -> SplitWord:
    """Promote the first ``promote`` tail letters to x-letters (i = 1), then append (1, m, m, ...)."""
    if len(base.ys) <= promote:
        raise PreconditionError(
            f"tail of {base} is too short to promote {promote} letters", code="SHORT_TAIL"
        )
    xs = base.xs + tuple((1, j) for j in base.ys[:promote])
    tail = base.ys[promote:] + (1, spec.m)
    w = _complete(spec, xs, tail, spec.m)
    if len(w.ys) < len(tail):
        raise PreconditionError(f"window closes before the separating letters for {base}", code="STAR_WINDOW")
    return w


def star_threshold(spec: CarpetSpec, r: float) -> tuple[float, str]:
    dc = derived_constants(spec, r)
    if bar_column(spec) is None:
        return 2 * dc.A2 / dc.A4, "2*A2/A4"
    return float(dc.T2_r), "T2_r"


def smallest_star_n(spec: CarpetSpec, r: float) -> int:
    thr, _ = star_threshold(spec, r)
    return math.floor(thr) + 1


def build_star(spec: CarpetSpec, fam: AntiChain, r: float | None = None) -> AntiChain:
    """F_{n,r}: from a Bar family, or from Lambda_{n,r} when every column has one cell."""
    r = fam.r if r is None else r
    dc = derived_constants(spec, r)
    thr, name = star_threshold(spec, r)
    if not fam.n > thr:
        raise PreconditionError(f"need n > {name} = {thr:g}, got n = {fam.n}", code=name, threshold=thr)
    if bar_column(spec) is None:
        if fam.kind != "LambdaPsi":
            raise ValueError("single-cell columns: build_star expects the Lambda family")
        parents = fam.words
    else:
        if fam.kind != "Bar":
            raise ValueError("build_star expects a Bar family")
        parents = fam.parents
    words = tuple(star_word(spec, w, 2 * dc.A2) for w in fam.words)
    return AntiChain("Star", words, fam.n, float(r), {"degenerate": bar_column(spec) is None}, parents)


# --------------------------------------------------------------------------
# certification


def _prefix_index(words: Iterable[SplitWord], right) -> dict:
    index: dict = {}
    for w in words:
        index.setdefault(w.xs, set()).add(right(w))
    return index


def _count_containers(index: dict, xs: tuple, ys: tuple) -> int:
    """Number of indexed (L, Y) pairs with L a prefix of xs and Y a prefix of ys."""
    total = 0
    for k in range(len(xs) + 1):
        ys_set = index.get(xs[:k])
        if not ys_set:
            continue
        for m in range(len(ys) + 1):
            if ys[:m] in ys_set:
                total += 1
    return total


def square_overlaps(words: Sequence[SplitWord]) -> list[tuple[SplitWord, SplitWord]]:
    """Pairs whose squares share interior points (L-words and y-words both comparable)."""
    index = _prefix_index(words, lambda w: w.y)
    bad = []
    for w in words:
        y = w.y
        for k in range(len(w.xs) + 1):
            ys_set = index.get(w.xs[:k])
            if not ys_set:
                continue
            for m in range(len(y) + 1):
                cand = y[:m]
                if cand in ys_set and not (k == len(w.xs) and m == len(y)):
                    bad.append((w, _find(words, w.xs[:k], cand, lambda u: u.y)))
    return bad


def cylinder_overlaps(words: Sequence[SplitWord]) -> list[tuple[SplitWord, SplitWord]]:
    """Pairs with one cylinder inside the other (both coordinates prefix-related)."""
    index = _prefix_index(words, lambda w: w.ys)
    bad = []
    for w in words:
        for k in range(len(w.xs) + 1):
            ys_set = index.get(w.xs[:k])
            if not ys_set:
                continue
            for m in range(len(w.ys) + 1):
                cand = w.ys[:m]
                if cand in ys_set and not (k == len(w.xs) and m == len(w.ys)):
                    bad.append((w, SplitWord(w.xs[:k], cand)))
    return bad


def _find(words, xs, right, key):
    for u in words:
        if u.xs == xs and key(u) == right:
            return u
    return None


def mass_total(spec: CarpetSpec, words: Iterable[SplitWord]):
    """Sum of p_{sigma_L} q_{sigma_R}; exact in exact mode."""
    if spec.exact:
        total = Fraction(0)
        for w in words:
            v = Fraction(1)
            for i, j in w.xs:
                v *= spec.p(i, j)
            for j in w.ys:
                v *= spec.q(j)
            total += v
        return total
    return math.fsum(math.exp(log_measure(spec, w)) for w in words)


def random_deep_word(spec: CarpetSpec, depth: int, y_extra: int, rng) -> SplitWord:
    """Random x-word of length ``depth`` (letters drawn with weights p) and a long random tail."""
    L = spec.letters
    probs = np.array([float(spec.p(i, j)) for i, j in L])
    idx = rng.choice(len(L), size=depth, p=probs / probs.sum())
    xs = tuple(L[k] for k in idx)
    qs = np.array([float(spec.q(j)) for j in range(1, spec.m + 1)])
    ys = tuple(int(v) + 1 for v in rng.choice(spec.m, size=y_extra, p=qs / qs.sum()))
    return SplitWord(xs, ys)


def certify_lambda(spec: CarpetSpec, lam: AntiChain, samples: int = 10_000, seed: int = 0) -> AntiChain:
    """Window, disjointness, mass and sampled maximality flags for Lambda_{n,r}."""
    r, n = lam.r, lam.n
    esc = spec.e_scale(r)
    lo, hi = eta_low_power(spec, r, n + 1), eta_low_power(spec, r, n)
    window = all(esc.ge(e, lo) and esc.gt(hi, e) for e in (e_r_value(spec, w, r) for w in lam.words))
    disjoint = not square_overlaps(lam.words)
    mass = mass_total(spec, lam.words)
    mass_ok = mass == 1 if spec.exact else abs(mass - 1.0) <= 1e-9
    depth = max(w.l for w in lam.words) + 1
    ylen = max(len(w.y) for w in lam.words) + 1
    index = _prefix_index(lam.words, lambda w: w.y)
    rng = np.random.default_rng(seed)
    maximal = True
    for _ in range(samples):
        probe = random_deep_word(spec, depth, ylen, rng)
        if _count_containers(index, probe.xs, probe.y) != 1:
            maximal = False
            break
    return lam.with_flags(
        window=window,
        disjoint=disjoint,
        mass_one=bool(mass_ok),
        maximal=maximal,
        l_min_ge_n=lam.l_min >= n,
        phi=len(lam.words),
        l_min=lam.l_min,
    )


def certify_gamma(spec: CarpetSpec, gam: AntiChain, samples: int = 10_000, seed: int = 0) -> AntiChain:
    r, n = gam.r, gam.n
    esc = spec.e_scale(r)
    hi = eta_low_power(spec, r, n)
    window = all(esc.gt(hi, e_r_value(spec, w, r)) for w in gam.words)
    disjoint = not cylinder_overlaps(gam.words)
    mass = mass_total(spec, gam.words)
    mass_ok = mass == 1 if spec.exact else abs(mass - 1.0) <= 1e-9
    depth = max(w.l for w in gam.words) + 1
    ylen = max(len(w.ys) for w in gam.words) + 1
    index = _prefix_index(gam.words, lambda w: w.ys)
    rng = np.random.default_rng(seed)
    tiling = True
    for _ in range(samples):
        probe = random_deep_word(spec, depth, ylen, rng)
        if _count_containers(index, probe.xs, probe.ys) != 1:
            tiling = False
            break
    return gam.with_flags(window=window, disjoint=disjoint, mass_one=bool(mass_ok), tiling=tiling)


def _comparable(u: tuple, v: tuple) -> bool:
    k = min(len(u), len(v))
    return u[:k] == v[:k]


def check_bar(spec: CarpetSpec, bar: AntiChain) -> dict:
    """Pairwise properties of B_{n,r}.

    Returns counts of violations of: (a) comparable parent L-words with
    comparable bar y-words; (b) incomparable parent L-words, comparable bar
    y-words, and horizontal gap below ``2^{-1/2} a_min^2 max diam``.
    """
    parents = bar.parents
    dc = derived_constants(spec, bar.r)
    by_y: dict = {}
    for k, w in enumerate(bar.words):
        by_y.setdefault(w.y, []).append(k)
    y_comparable_pairs = []
    for k, w in enumerate(bar.words):
        y = w.y
        for m in range(len(y) + 1):
            for other in by_y.get(y[:m], ()):
                if other != k:
                    y_comparable_pairs.append((other, k))
    bad_comparable, bad_gap, checked_gap = 0, 0, 0
    a2 = dc.a_min * dc.a_min
    for u, v in y_comparable_pairs:
        if _comparable(parents[u].xs, parents[v].xs):
            bad_comparable += 1
            continue
        ru, rv = rectangle(spec, bar.words[u]), rectangle(spec, bar.words[v])
        gap = max(ru.x_lo - rv.x_hi, rv.x_lo - ru.x_hi, 0)
        checked_gap += 1
        # gap^2 >= a_min^4 max(diam^2) / 2
        if gap * gap * 2 < a2 * a2 * max(ru.diam2, rv.diam2):
            bad_gap += 1
    return {
        "y_comparable_pairs": len(y_comparable_pairs),
        "comparable_parent_violations": bad_comparable,
        "gap_checked": checked_gap,
        "gap_violations": bad_gap,
    }


def separation_constant(spec: CarpetSpec):
    """``(1 + b_min^-2)^-1 b_min^2`` (exact in exact mode)."""
    b = min(spec.b(j) for j in range(1, spec.m + 1))
    one = Fraction(1) if spec.exact else 1.0
    return b * b / (one + one / (b * b))


def _rect_dist2(r1, r2):
    dx = max(r1.x_lo - r2.x_hi, r2.x_lo - r1.x_hi, 0)
    dy = max(r1.y_lo - r2.y_hi, r2.y_lo - r1.y_hi, 0)
    return dx * dx + dy * dy


@dataclass(frozen=True)
class Separation:
    min_ratio: float
    witness: tuple[SplitWord, SplitWord] | None
    pairs_checked: int
    exhaustive: bool
    constant: float
    passed: bool


def check_separation(spec: CarpetSpec, fam: AntiChain, exhaustive_limit: int = 3000) -> Separation:
    """Minimum over pairs of ``d(F, F') / max(diam F, diam F')``.

    Families up to ``exhaustive_limit`` members are checked over all pairs.
    Larger families use a k-d tree on rectangle centers: a pair whose
    centers are farther apart than ``(1 + c) * D`` (D the largest diameter)
    has ratio at least ``c``, so only closer pairs are examined.  The
    comparison against the constant is done with squared distances, exactly
    in exact mode and with a ``1e-12`` relative slack in float mode.
    """
    c = separation_constant(spec)
    words = fam.words
    rects = [rectangle(spec, w) for w in words]
    if len(words) < 2:
        return Separation(math.inf, None, 0, True, float(c), True)
    if len(words) <= exhaustive_limit:
        pairs = ((u, v) for u in range(len(words)) for v in range(u + 1, len(words)))
        exhaustive = True
    else:
        centers = np.array([r.center for r in rects])
        dmax = max(r.diam for r in rects)
        tree = cKDTree(centers)
        pairs = tree.query_pairs((1.0 + float(c)) * dmax * (1 + 1e-9), output_type="ndarray")
        pairs = ((int(u), int(v)) for u, v in pairs)
        exhaustive = False
    best, witness, count = None, None, 0
    c2 = c * c
    passed = True
    for u, v in pairs:
        count += 1
        d2 = _rect_dist2(rects[u], rects[v])
        m2 = max(rects[u].diam2, rects[v].diam2)
        ratio2 = d2 / m2
        if best is None or ratio2 < best:
            best, witness = ratio2, (words[u], words[v])
        if spec.exact:
            passed &= d2 >= c2 * m2
        else:
            passed &= d2 >= c2 * m2 * (1 - 1e-12)
    if best is None:
        return Separation(float(c) + 1.0, None, 0, False, float(c), True)
    return Separation(math.sqrt(float(best)), witness, count, exhaustive, float(c), bool(passed))


def sum_e_t(spec: CarpetSpec, fam: AntiChain | Iterable[SplitWord], t: float, r: float | None = None) -> float:
    """``sum E_r(sigma)^t`` over the family (log-sum-exp)."""
    if isinstance(fam, AntiChain):
        words, r = fam.words, fam.r if r is None else r
    else:
        words = list(fam)
    if r is None:
        raise ValueError("r is required for a plain word list")
    if t == 0:
        return float(len(words))
    logs = np.array([t * log_e_r(spec, w, r) for w in words])
    peak = logs.max()
    return float(math.exp(peak) * np.exp(logs - peak).sum())


def star_mass(spec: CarpetSpec, star: AntiChain):
    return mass_total(spec, star.words)
