"""Sampling from the self-affine measure and empirical r-th power quantization.

The sampler runs the chaos game to a fixed depth: a point is
``f_{w_1} o ... o f_{w_D}(0, 0)`` with i.i.d. letters ``w_k ~ p``.  Depth
``D`` is the least integer with ``max(b)^D < tol``, so every sample lies
within ``sqrt(2) tol`` of the point of the attractor with the same coding.

Random numbers come from fixed-size chunks, each with its own child of one
``SeedSequence``; the output therefore depends only on the seed, never on
how the chunks are scheduled.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .carpet_model import CarpetSpec
from .words import DEFAULT_BUDGET, rectangle

CHUNK = 1 << 16


def worker_threads() -> int:
    """Thread cap for k-d tree queries (``CARPET_QUANT_THREADS``, default 1)."""
    raw = os.environ.get("CARPET_QUANT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray = field(repr=False)
    seed: int
    truncation_tol: float
    depth: int

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray
    r: float
    error_r: float
    method: str
    iterations: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return len(self.centers)

    @property
    def error(self) -> float:
        """The quantization error itself, ``error_r ** (1/r)``."""
        return self.error_r ** (1.0 / self.r)


def truncation_depth(spec: CarpetSpec, tol: float) -> int:
    if not tol > 0:
        raise ValueError("tol must be positive")
    b_max = max(float(spec.b(j)) for j in range(1, spec.m + 1))
    return max(1, math.floor(math.log(tol) / math.log(b_max)) + 1)


def sample(spec: CarpetSpec, count: int, tol: float = 1e-9, seed: int = 0) -> SampleSet:
    """``count`` chaos-game points from the self-affine measure."""
    if count < 1:
        raise ValueError("count must be positive")
    depth = truncation_depth(spec, tol)
    arr = spec.arrays()
    a, b, c, d, p = arr["a"], arr["b"], arr["c"], arr["d"], arr["p"]
    p = p / p.sum()
    n_chunks = -(-count // CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    out = np.empty((count, 2))
    for k, child in enumerate(children):
        lo, hi = k * CHUNK, min(count, (k + 1) * CHUNK)
        rng = np.random.Generator(np.random.PCG64(child))
        letters = rng.choice(len(p), size=(hi - lo, depth), p=p)
        x = np.zeros(hi - lo)
        y = np.zeros(hi - lo)
        for col in range(depth - 1, -1, -1):
            w = letters[:, col]
            x = a[w] * x + c[w]
            y = b[w] * y + d[w]
        out[lo:hi, 0] = x
        out[lo:hi, 1] = y
    return SampleSet(out, seed, tol, depth)


# --------------------------------------------------------------------------
# Lloyd iteration


def _assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tree = cKDTree(centers)
    dist, idx = tree.query(points, k=1, workers=worker_threads())
    return dist, idx


def _seed_centers(points: np.ndarray, n: int, r: float, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding with selection weights ``D(x)^r``."""
    N = len(points)
    centers = np.empty((n, 2))
    centers[0] = points[rng.integers(N)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for k in range(1, n):
        w = d2 ** (r / 2.0)
        total = w.sum()
        if total <= 0:
            centers[k] = points[rng.integers(N)]
        else:
            centers[k] = points[rng.choice(N, p=w / total)]
        d2 = np.minimum(d2, np.sum((points - centers[k]) ** 2, axis=1))
    return centers


def _cell_cost(points, labels, centers, r, n):
    dist = np.sqrt(np.sum((points - centers[labels]) ** 2, axis=1))
    return np.bincount(labels, weights=dist**r, minlength=n)


def _update_centers(points, labels, centers, r, n):
    counts = np.bincount(labels, minlength=n)
    new = centers.copy()
    occupied = counts > 0
    if r == 2:
        for dim in range(2):
            sums = np.bincount(labels, weights=points[:, dim], minlength=n)
            new[occupied, dim] = sums[occupied] / counts[occupied]
        return new
    # damped iteratively reweighted least squares on each cell, with a
    # cell-wise accept-if-better safeguard
    cur = centers.copy()
    cost = _cell_cost(points, labels, cur, r, n)
    for _ in range(200):
        diff = points - cur[labels]
        dist = np.sqrt(np.sum(diff**2, axis=1))
        w = np.maximum(dist, 1e-12) ** (r - 2.0)
        wsum = np.bincount(labels, weights=w, minlength=n)
        target = cur.copy()
        ok = occupied & (wsum > 0)
        for dim in range(2):
            s = np.bincount(labels, weights=w * points[:, dim], minlength=n)
            target[ok, dim] = s[ok] / wsum[ok]
        cand = cur + 0.5 * (target - cur)
        cand_cost = _cell_cost(points, labels, cand, r, n)
        better = cand_cost < cost
        step = np.max(np.abs(cand[better] - cur[better])) if better.any() else 0.0
        cur[better] = cand[better]
        cost[better] = cand_cost[better]
        if step < 1e-10:
            break
    return cur


def _repair_empty(points, labels, dist, centers, r, n):
    counts = np.bincount(labels, minlength=n)
    empty = np.flatnonzero(counts == 0)
    if not len(empty):
        return centers, False
    centers = centers.copy()
    cost = np.bincount(labels, weights=dist**r, minlength=n)
    for e in empty:
        worst = int(np.argmax(cost))
        members = np.flatnonzero(labels == worst)
        far = members[np.argmax(dist[members])]
        centers[e] = points[far]
        cost[worst] = 0.0
    return centers, True


def lloyd(
    samples: SampleSet | np.ndarray,
    n: int,
    r: float = 2.0,
    restarts: int = 1,
    seed: int = 0,
    max_iter: int = 200,
    rel_tol: float = 1e-9,
    init: np.ndarray | None = None,
) -> Codebook:
    """Generalized Lloyd iteration for the empirical measure of ``samples``."""
    points = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not r > 0:
        raise ValueError("r must be positive")
    if n > len(points):
        raise ValueError(f"n = {n} exceeds the sample size {len(points)}")
    rng = np.random.default_rng(seed)
    best: Codebook | None = None
    for _ in range(max(1, restarts)):
        centers = np.array(init, dtype=float) if init is not None else _seed_centers(points, n, r, rng)
        history = []
        dist, labels = _assign(points, centers)
        err = float(np.mean(dist**r))
        history.append(err)
        it = 0
        for it in range(1, max_iter + 1):
            centers, repaired = _repair_empty(points, labels, dist, centers, r, n)
            if repaired:
                dist, labels = _assign(points, centers)
            centers = _update_centers(points, labels, centers, r, n)
            dist, labels = _assign(points, centers)
            new_err = float(np.mean(dist**r))
            history.append(new_err)
            if err - new_err <= rel_tol * err and not repaired:
                err = min(err, new_err)
                break
            err = new_err
        cb = Codebook(centers, float(r), err, "lloyd", it, tuple(history))
        if best is None or cb.error_r < best.error_r:
            best = cb
        init = None
    assert best is not None
    return best


def quantization_error(points: np.ndarray, centers: np.ndarray, r: float) -> float:
    dist, _ = _assign(np.asarray(points, dtype=float), np.asarray(centers, dtype=float))
    return float(np.mean(dist**r))


# --------------------------------------------------------------------------
# anti-chain codebook and coefficient scan


@dataclass(frozen=True)
class AntichainCodebook:
    codebook: Codebook
    analytic_bound: float
    e_r_sum: float


def antichain_codebook(
    spec: CarpetSpec,
    n: int,
    r: float,
    samples: SampleSet | None = None,
    budget: int = DEFAULT_BUDGET,
) -> AntichainCodebook:
    """Centers of the squares of Lambda_{n,r}; error against ``samples`` when given.

    ``analytic_bound`` is ``sum mu(F_sigma) diam(F_sigma)^r``, an upper bound
    for the r-th power error of this codebook under mu.
    """
    from .antichain import build_lambda
    from .words import log_e_r, log_measure

    lam = build_lambda(spec, n, r, budget)
    rects = [rectangle(spec, w) for w in lam.words]
    centers = np.array([rc.center for rc in rects])
    log_mu = np.array([log_measure(spec, w) for w in lam.words])
    diam = np.array([rc.diam for rc in rects])
    bound = float(np.sum(np.exp(log_mu) * diam**r))
    e_sum = float(np.sum(np.exp([log_e_r(spec, w, r) for w in lam.words])))
    err = quantization_error(samples.points, centers, r) if samples is not None else float("nan")
    return AntichainCodebook(Codebook(centers, float(r), err, "antichain"), bound, e_sum)


@dataclass(frozen=True)
class ScanResult:
    r: float
    s_r: float
    rows: tuple[tuple[int, float, float], ...]
    slope: float
    slope_e: float
    band: tuple[float, float]
    sample_size: int
    seed: int
    truncation_tol: float

    @property
    def target_slope(self) -> float:
        return -self.r / self.s_r

    @property
    def band_ratio(self) -> float:
        return self.band[1] / self.band[0]

    @property
    def slope_rel_error(self) -> float:
        return abs(self.slope - self.target_slope) / abs(self.target_slope)


def fit_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)[0])


def coefficient_scan(
    spec: CarpetSpec,
    r: float,
    n_grid: Sequence[int] = tuple(2**k for k in range(4, 11)),
    sample_size: int = 200_000,
    seed: int = 0,
    s_r: float | None = None,
    restarts: int = 1,
    tol: float = 1e-9,
) -> ScanResult:
    """Lloyd errors over ``n_grid`` and the scaled coefficients ``n^{r/s_r} e^r``.

    ``slope`` is the fit of log(e^r) against log n, to be compared with
    ``-r/s_r``; ``slope_e`` is the fit of log e (target ``-1/s_r``).
    """
    if s_r is None:
        from .pressure import closed_form_s_r

        s_r = closed_form_s_r(spec, r)
    pts = sample(spec, sample_size, tol=tol, seed=seed)
    rows = []
    for k, n in enumerate(n_grid):
        cb = lloyd(pts, int(n), r, restarts=restarts, seed=seed + k)
        rows.append((int(n), cb.error_r, n ** (r / s_r) * cb.error_r))
    ns = [row[0] for row in rows]
    errs = [row[1] for row in rows]
    scaled = [row[2] for row in rows]
    return ScanResult(
        r=float(r),
        s_r=float(s_r),
        rows=tuple(rows),
        slope=fit_slope(ns, errs),
        slope_e=fit_slope(ns, [e ** (1.0 / r) for e in errs]),
        band=(min(scaled), max(scaled)),
        sample_size=sample_size,
        seed=seed,
        truncation_tol=tol,
    )
