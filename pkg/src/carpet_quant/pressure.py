"""Partition sums, pressure roots and closed-form dimension/spectrum solvers.

Notation: for a word sigma, ``E_r(sigma) = p_{sigma_L} q_{sigma_R} a_{sigma_L}^r``.
The level-l sums are

    Upsilon_l(t, s) = sum_{sigma in Phi_l} (p_{sigma_L} q_{sigma_R})^t a_{sigma_L}^s,
    I_{l,r}(t)      = Upsilon_l(t, r t).

The fast path groups x-words by their letter counts (p, a and the completion
ratio only depend on the counts) and sums the y-tails with the memoized
recursion

    zeta_t(rho) = sum_{b_j < rho} q_j^t + sum_{b_j >= rho} q_j^t zeta_t(rho / b_j),

where rho is the ratio ``a_omega / b_{omega_y}`` still to be covered.
Everything is evaluated in log space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .carpet_model import BudgetExceededError, CarpetSpec, NumericError
from .words import DEFAULT_BUDGET, SplitWord, enumerate_psi, log_e_r, prod_a, prod_b

ROOT_TOL = 1e-13


# --------------------------------------------------------------------------
# naive sums over enumerated words


def _word_logs(spec: CarpetSpec, words: list[SplitWord]) -> tuple[np.ndarray, np.ndarray]:
    lp, lq, la = spec.log_p, spec.log_q, spec.log_a
    log_mu = np.array([sum(lp[x] for x in w.xs) + sum(lq[j] for j in w.ys) for w in words])
    log_a = np.array([sum(la[x] for x in w.xs) for w in words])
    return log_mu, log_a


def log_upsilon_naive(spec: CarpetSpec, l: int, t: float, s: float, budget: int = DEFAULT_BUDGET) -> float:
    log_mu, log_a = _word_logs(spec, enumerate_psi(spec, l, budget))
    return float(logsumexp(t * log_mu + s * log_a))


def upsilon_naive(spec: CarpetSpec, l: int, t: float, s: float, budget: int = DEFAULT_BUDGET) -> float:
    """Upsilon_l(t, s) by summing over every word of Phi_l."""
    return math.exp(log_upsilon_naive(spec, l, t, s, budget))


def partition_sum_naive(spec: CarpetSpec, l: int, t: float, r: float, budget: int = DEFAULT_BUDGET) -> float:
    """I_{l,r}(t) by summing E_r(sigma)^t over every word of Phi_l."""
    return upsilon_naive(spec, l, t, r * t, budget)


# --------------------------------------------------------------------------
# fast sums


class ZetaGraph:
    """Memo graph of the completion recursion over ratio states."""

    def __init__(self, spec: CarpetSpec, budget: int = DEFAULT_BUDGET) -> None:
        self.spec = spec
        self.budget = budget
        self._index: dict = {}
        self._values: list = []
        # per state: list of (column, child index or -1 when the tail stops)
        self._edges: list[list[tuple[int, int]]] = []
        self._order: list | None = None
        self._cache: dict[float, np.ndarray] = {}

    def state(self, ratio) -> int:
        """Index of the state for ``ratio``, expanding the graph as needed."""
        sc = self.spec.scale
        key = sc.key(ratio)
        if key in self._index:
            return self._index[key]
        sb = [self.spec.sb(j) for j in range(1, self.spec.m + 1)]
        root = self._add(key, ratio)
        stack = [root]
        while stack:
            k = stack.pop()
            rho = self._values[k]
            edges: list[tuple[int, int]] = []
            if not sc.gt(rho, sc.one):
                for j, b in enumerate(sb, start=1):
                    if sc.gt(rho, b):
                        edges.append((j, -1))
                    else:
                        child = sc.div(rho, b)
                        ck = sc.key(child)
                        if ck not in self._index:
                            stack.append(self._add(ck, child))
                        edges.append((j, self._index[ck]))
            self._edges[k] = edges
        self._order = None
        self._cache.clear()
        return root

    def _add(self, key, value) -> int:
        if len(self._values) >= self.budget:
            raise BudgetExceededError(
                "completion-state graph exceeds budget", count=len(self._values), budget=self.budget
            )
        idx = len(self._values)
        self._index[key] = idx
        self._values.append(value)
        self._edges.append([])
        return idx

    def __len__(self) -> int:
        return len(self._values)

    def _layers(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """Edges grouped by height (longest path to a stopping tail), lowest first."""
        if self._order is not None:
            return self._order
        n = len(self._values)
        height = np.zeros(n, dtype=np.int64)
        logs = np.array([self.spec.scale.log(v) for v in self._values])
        # children carry strictly larger ratios, so a descending sweep sees them first
        for k in np.argsort(-logs, kind="stable"):
            kids = [c for _, c in self._edges[k] if c >= 0]
            height[k] = 1 + max((height[c] for c in kids), default=0) if self._edges[k] else 0
        layers = []
        for hgt in range(1, int(height.max(initial=0)) + 1):
            members = np.flatnonzero(height == hgt)
            src, col, child = [], [], []
            for k in members:
                for j, c in self._edges[k]:
                    src.append(k)
                    col.append(j - 1)
                    child.append(c)
            src_a = np.array(src, dtype=np.int64)
            starts = np.flatnonzero(np.r_[True, src_a[1:] != src_a[:-1]])
            layers.append((src_a[starts], starts, np.array(col, dtype=np.int64), np.array(child, dtype=np.int64)))
        self._order = layers
        return layers

    def log_zeta(self, t: float) -> np.ndarray:
        """``log zeta_t`` for every state (a state above 1 has the empty tail only)."""
        t = float(t)
        if t in self._cache:
            return self._cache[t]
        lq = np.array([self.spec.log_q[j] for j in range(1, self.spec.m + 1)])
        out = np.zeros(len(self._values))
        for owners, starts, col, child in self._layers():
            terms = t * lq[col] + np.where(child >= 0, out[np.maximum(child, 0)], 0.0)
            peak = np.maximum.reduceat(terms, starts)
            owner_of_edge = np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, len(terms)]))
            sums = np.add.reduceat(np.exp(terms - peak[owner_of_edge]), starts)
            out[owners] = peak + np.log(sums)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[t] = out
        return out

    def counts(self) -> list[int]:
        """Exact number of completions of every state."""
        out = [0] * len(self._values)
        for owners, starts, col, child in self._layers():
            bounds = list(starts) + [len(child)]
            for owner, lo, hi in zip(owners, bounds[:-1], bounds[1:]):
                out[owner] = sum(1 if c < 0 else out[c] for c in child[lo:hi])
        for k, edges in enumerate(self._edges):
            if not edges:
                out[k] = 1
        return out


def _count_vectors(N: int, l: int):
    for combo in itertools.combinations_with_replacement(range(N), l):
        counts = [0] * N
        for k in combo:
            counts[k] += 1
        yield counts


@dataclass
class LevelTable:
    """All x-words of a fixed length, grouped by letter counts.

    ``log_sum(t, s)`` returns
    ``log sum_{omega in G^h} sum_{tau in Omega} (p_omega q_tau)^t a_omega^s``
    where the tails complete ``start * a_omega / b_{omega_y}``.  With the
    default ``start = 1`` this is ``log Upsilon_h(t, s)``; with
    ``start = a_{sigma_L} / b_{sigma_y}`` it is the sum over the level-h
    descendants of sigma divided by ``mu(sigma)^t a_{sigma_L}^s``.
    """

    spec: CarpetSpec
    h: int
    log_mult: np.ndarray
    log_p: np.ndarray
    log_a: np.ndarray
    state: np.ndarray
    zeta: ZetaGraph = field(repr=False)

    @classmethod
    def build(
        cls,
        spec: CarpetSpec,
        h: int,
        start=None,
        zeta: ZetaGraph | None = None,
        budget: int = DEFAULT_BUDGET,
    ) -> "LevelTable":
        if h < 1:
            raise ValueError("level must be >= 1")
        N = spec.N
        n_vectors = math.comb(h + N - 1, N - 1)
        if n_vectors > budget:
            raise BudgetExceededError(
                f"{n_vectors} letter-count vectors at level {h}", count=n_vectors, budget=budget
            )
        sc = spec.scale
        zeta = zeta if zeta is not None else ZetaGraph(spec, budget)
        L = spec.letters
        lr = [sc.div(spec.sa(i, j), spec.sb(j)) for i, j in L]
        lp = np.array([spec.log_p[x] for x in L])
        la = np.array([spec.log_a[x] for x in L])
        start = sc.one if start is None else start
        log_fact = [math.lgamma(c + 1) for c in range(h + 1)]

        counts_all = np.array(list(_count_vectors(N, h)), dtype=np.int64).reshape(n_vectors, N)
        # letters sharing a ratio value are merged so each distinct exponent row is priced once
        distinct: dict = {}
        member = np.zeros((N, 0), dtype=np.int64)
        for k, v in enumerate(lr):
            key = sc.key(v)
            if key not in distinct:
                distinct[key] = (len(distinct), v)
                member = np.hstack([member, np.zeros((N, 1), dtype=np.int64)])
            member[k, distinct[key][0]] = 1
        bases = [v for _, v in sorted(distinct.values(), key=lambda item: item[0])]
        powers = [[sc.power(v, c) for c in range(h + 1)] for v in bases]
        exps = counts_all @ member
        uniq, inverse = np.unique(exps, axis=0, return_inverse=True)
        uniq_states = np.empty(len(uniq), dtype=np.int64)
        for row, ex in enumerate(uniq):
            ratio = start
            for k, c in enumerate(ex):
                if c:
                    ratio = sc.mul(ratio, powers[k][c])
            uniq_states[row] = zeta.state(ratio)
        states = uniq_states[np.asarray(inverse).reshape(-1)]
        log_mult = log_fact[h] - np.array([log_fact[c] for c in range(h + 1)])[counts_all].sum(axis=1)
        return cls(spec, h, log_mult, counts_all @ lp, counts_all @ la, states, zeta)

    def log_sum(self, t: float, s: float) -> float:
        lz = self.zeta.log_zeta(t)
        return float(logsumexp(self.log_mult + t * self.log_p + s * self.log_a + lz[self.state]))

    def log_partition(self, t: float, r: float) -> float:
        return self.log_sum(t, r * t)


def level_table(spec: CarpetSpec, l: int, budget: int = DEFAULT_BUDGET) -> LevelTable:
    """Cached :class:`LevelTable` for Phi_l (all levels of a spec share one zeta graph)."""
    key = ("level_table", l)
    if key not in spec._cache:
        zeta = spec._cache.setdefault("zeta_graph", ZetaGraph(spec, budget))
        spec._cache[key] = LevelTable.build(spec, l, zeta=zeta, budget=budget)
    return spec._cache[key]


def log_upsilon_fast(spec: CarpetSpec, l: int, t: float, s: float) -> float:
    return level_table(spec, l).log_sum(t, s)


def upsilon_fast(spec: CarpetSpec, l: int, t: float, s: float) -> float:
    return math.exp(log_upsilon_fast(spec, l, t, s))


def log_partition_sum(spec: CarpetSpec, l: int, t: float, r: float) -> float:
    return level_table(spec, l).log_partition(t, r)


def partition_sum_fast(spec: CarpetSpec, l: int, t: float, r: float) -> float:
    """I_{l,r}(t) via the letter-count / completion-memo dynamic program."""
    return math.exp(log_partition_sum(spec, l, t, r))


def count_phi(spec: CarpetSpec, l: int) -> int:
    """card(Phi_l) as an exact integer (the t = 0 value of the partition sum)."""
    table = level_table(spec, l)
    tails = table.zeta.counts()
    fact = math.factorial
    total = 0
    for row, st in zip(_count_vectors(spec.N, l), table.state):
        mult = fact(l)
        for c in row:
            mult //= fact(c)
        total += mult * tails[st]
    return total


# --------------------------------------------------------------------------
# descendant sums


def _phi_ratio(spec: CarpetSpec, sigma: SplitWord):
    sc = spec.scale
    return sc.div(prod_a(spec, sigma.xs), prod_b(spec, sigma.y))


def log_descendant_sum(spec: CarpetSpec, sigma: SplitWord, h: int, t: float, r: float) -> float:
    """``log sum_{rho in Lambda_h(sigma)} E_r(rho)^t`` without enumerating rho."""
    table = LevelTable.build(spec, h, start=_phi_ratio(spec, sigma), zeta=_shared_zeta(spec))
    return t * log_e_r(spec, sigma, r) + table.log_partition(t, r)


def descendant_ratio(spec: CarpetSpec, sigma: SplitWord, h: int, t: float, r: float) -> float:
    """``sum_{Lambda_h(sigma)} E_r^t / (E_r(sigma)^t I_{h,r}(t))``."""
    table = LevelTable.build(spec, h, start=_phi_ratio(spec, sigma), zeta=_shared_zeta(spec))
    return math.exp(table.log_partition(t, r) - log_partition_sum(spec, h, t, r))


def _shared_zeta(spec: CarpetSpec) -> ZetaGraph:
    return spec._cache.setdefault("zeta_graph", ZetaGraph(spec))


def descendant_sum_exact(spec: CarpetSpec, sigma: SplitWord, h: int, r: int):
    """Exact ``sum_{Lambda_h(sigma)} E_r(rho)`` (t = 1) for rational specs and integer r."""
    from fractions import Fraction

    if not spec.exact:
        raise ValueError("exact descendant sums need a rational spec")
    r = int(r)
    sc = spec.scale
    memo: dict = {}

    def zeta1(rho) -> Fraction:
        if rho in memo:
            return memo[rho]
        if sc.gt(rho, sc.one):
            val = Fraction(1)
        else:
            val = Fraction(0)
            for j in range(1, spec.m + 1):
                b = spec.b(j)
                val += spec.q(j) * (1 if rho > b else zeta1(rho / b))
        memo[rho] = val
        return val

    base = _phi_ratio(spec, sigma)
    e_sigma = Fraction(1)
    for i, j in sigma.xs:
        e_sigma *= spec.p(i, j) * spec.a(i, j) ** r
    for j in sigma.ys:
        e_sigma *= spec.q(j)
    # letter-by-letter expansion: the sum is multiplicative over x-letters
    level = {base: Fraction(1)}
    for _ in range(h):
        nxt: dict = {}
        for rho, w in level.items():
            for i, j in spec.letters:
                key = rho * spec.a(i, j) / spec.b(j)
                nxt[key] = nxt.get(key, Fraction(0)) + w * spec.p(i, j) * spec.a(i, j) ** r
        level = nxt
    return e_sigma * sum(w * zeta1(rho) for rho, w in level.items())


def partition_sum_exact(spec: CarpetSpec, h: int, r: int):
    """Exact I_{h,r}(1) for rational specs and integer r."""
    from .words import THETA

    return descendant_sum_exact(spec, THETA, h, r)


# --------------------------------------------------------------------------
# roots


def bisect(fn: Callable[[float], float], lo: float, hi: float, tol: float = ROOT_TOL) -> tuple[float, tuple[float, float]]:
    """Root of a decreasing function on [lo, hi]; raises if there is no sign change."""
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0:
        return lo, (lo, lo)
    if f_hi == 0:
        return hi, (hi, hi)
    if not (f_lo > 0 > f_hi):
        raise NumericError(
            f"no sign change on [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}", code="NO_SIGN_CHANGE"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = fn(mid)
        if f_mid > 0:
            lo = mid
        elif f_mid < 0:
            hi = mid
        else:
            return mid, (mid, mid)
    return 0.5 * (lo + hi), (lo, hi)


def bisect_unbounded(fn: Callable[[float], float], guess: float = 0.0, step: float = 1.0) -> float:
    """Root of a decreasing function on the real line (brackets by doubling)."""
    lo, hi = guess - step, guess + step
    for _ in range(200):
        if fn(lo) > 0:
            break
        lo -= step
        step *= 2
    step = 1.0
    for _ in range(200):
        if fn(hi) < 0:
            break
        hi += step
        step *= 2
    return bisect(fn, lo, hi)[0]


def s_from_t(t: float, r: float) -> float:
    """``s = r t / (1 - t)``, the inverse of ``t = s / (s + r)``."""
    return r * t / (1.0 - t)


@dataclass(frozen=True)
class PressureCurve:
    """Root data of the pressure equation for one exponent r.

    ``samples`` holds ``(level, t_hat, s_hat)`` with ``t_hat`` the root of
    ``I_{l,r}(t) = 1``; these carry an O(1/l) bias.  ``increments`` holds
    ``(level, t_inc, s_inc)`` with ``t_inc`` the root of
    ``I_{l,r}(t) = I_{l-1,r}(t)``, i.e. of the per-level growth rate, which
    cancels the bounded factor of the partition sums.  ``root`` and ``s``
    come from the averaged growth equation ``I_{l_max,r}(t) = I_{l_0,r}(t)``
    with ``l_0 = l_max // 2``, which also averages out periodic jumps of the
    tail length along a level; ``band`` is the ``(min, max)`` of ``s_inc``
    over the upper half of the levels.
    """

    kind: str
    param: float
    samples: tuple[tuple[int, float, float], ...]
    increments: tuple[tuple[int, float, float], ...]
    bracket: tuple[float, float]
    root: float
    s: float
    band: tuple[float, float]

    @property
    def t_hats(self) -> list[float]:
        return [row[1] for row in self.samples]

    @property
    def half_width(self) -> float:
        return max(self.band[1] - self.s, self.s - self.band[0])


def solve_t_r(spec: CarpetSpec, r: float, l_max: int = 12) -> PressureCurve:
    """Estimate t_r and s_r from the partition sums up to level ``l_max``."""
    if not r > 0:
        raise ValueError("r must be positive")
    if l_max < 2:
        raise ValueError("l_max must be >= 2")
    samples, increments = [], []
    bracket = (0.0, 1.0)
    prev = None
    l0 = l_max // 2
    base = None
    for l in range(1, l_max + 1):
        table = level_table(spec, l)
        t_hat, _ = bisect(lambda t: table.log_partition(t, r), 0.0, 1.0)
        samples.append((l, t_hat, s_from_t(t_hat, r)))
        if prev is not None:
            before = prev
            t_inc, bracket = bisect(lambda t: table.log_partition(t, r) - before.log_partition(t, r), 0.0, 1.0)
            increments.append((l, t_inc, s_from_t(t_inc, r)))
        if l == l0:
            base = table
        prev = table
    top = prev
    root, bracket = bisect(lambda t: top.log_partition(t, r) - base.log_partition(t, r), 0.0, 1.0)
    upper = [row[2] for row in increments if row[0] >= (l_max + 2) // 2]
    return PressureCurve(
        kind="t_r",
        param=float(r),
        samples=tuple(samples),
        increments=tuple(increments),
        bracket=bracket,
        root=root,
        s=s_from_t(root, r),
        band=(min(upper), max(upper)),
    )


# --------------------------------------------------------------------------
# closed forms


def tau_y(spec: CarpetSpec, q: float) -> float:
    """Root T of ``sum_j q_j^q b_j^T = 1``."""
    lq = np.array([spec.log_q[j] for j in range(1, spec.m + 1)])
    lb = np.array([spec.log_b[j] for j in range(1, spec.m + 1)])
    return bisect_unbounded(lambda T: float(logsumexp(q * lq + T * lb)))


def closed_form_beta(spec: CarpetSpec, q: float) -> float:
    """beta(q) from ``sum p_ij^q a_ij^(beta - tau_y) b_j^tau_y = 1``; equals tau(q)."""
    ty = tau_y(spec, q)
    L = spec.letters
    lp = np.array([spec.log_p[x] for x in L])
    la = np.array([spec.log_a[x] for x in L])
    lb = np.array([spec.log_b[j] for _, j in L])
    base = q * lp + ty * (lb - la)
    return bisect_unbounded(lambda beta: float(logsumexp(base + beta * la)))


def closed_form_t_r(spec: CarpetSpec, r: float) -> float:
    if not r > 0:
        raise ValueError("r must be positive")
    return bisect(lambda t: closed_form_beta(spec, t) - r * t, 0.0, 1.0)[0]


def closed_form_s_r(spec: CarpetSpec, r: float) -> float:
    """s_r from ``beta(t) = r t``."""
    return s_from_t(closed_form_t_r(spec, r), r)


def bm_closed_form_d_r(spec: CarpetSpec, r: float) -> float:
    """d_r for a Bedford-McMullen spec, with xi = log m0 / log n0 taken as a real number."""
    if spec.bm is None:
        raise ValueError("bm_closed_form_d_r needs a Bedford-McMullen spec")
    if not r > 0:
        raise ValueError("r must be positive")
    n0, m0 = spec.bm
    xi = math.log(m0) / math.log(n0)
    lp = np.array([spec.log_p[x] for x in spec.letters])
    lq = np.array([spec.log_q[j] for j in range(1, spec.m + 1)])
    shift = -r * math.log(m0)

    def fn(theta: float) -> float:
        return xi * float(logsumexp(theta * (lp + shift))) + (1 - xi) * float(logsumexp(theta * (lq + shift)))

    theta = bisect(fn, 0.0, 1.0)[0]
    return s_from_t(theta, r)


def spectrum(spec: CarpetSpec, qs) -> list[tuple[float, float, float]]:
    """Rows ``(q, tau_y(q), tau(q))``."""
    return [(float(q), tau_y(spec, q), closed_form_beta(spec, q)) for q in qs]


# --------------------------------------------------------------------------
# finite-stage auxiliary measures


@dataclass(frozen=True)
class AuxMeasure:
    """lambda_k: mass ``E_r(sigma)^t / I_{k,r}(t)`` on each sigma in Phi_k."""

    spec: CarpetSpec = field(repr=False)
    r: float
    t: float
    k: int
    log_norm: float

    def masses(self, budget: int = DEFAULT_BUDGET) -> dict[SplitWord, float]:
        words = enumerate_psi(self.spec, self.k, budget)
        return {w: math.exp(self.t * log_e_r(self.spec, w, self.r) - self.log_norm) for w in words}


def aux_measure(spec: CarpetSpec, r: float, k: int, t: float | None = None) -> AuxMeasure:
    if t is None:
        t = closed_form_t_r(spec, r)
    return AuxMeasure(spec, float(r), float(t), int(k), log_partition_sum(spec, k, t, r))


def aux_mass(lam: AuxMeasure, sigma: SplitWord) -> float:
    """lambda_k of the cylinder [sigma] (|sigma_L| < k), summed over its descendants."""
    n = sigma.l
    if not 0 < n < lam.k:
        raise ValueError("need 0 < |sigma_L| < k")
    return math.exp(log_descendant_sum(lam.spec, sigma, lam.k - n, lam.t, lam.r) - lam.log_norm)
