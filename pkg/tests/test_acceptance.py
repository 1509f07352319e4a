"""Acceptance criteria, each run at its stated tolerance and time limit.

Each test records one PASS/FAIL line (shown in the terminal summary) and
then asserts the same condition.
"""

import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

from carpet_quant import BudgetExceededError, moments
from carpet_quant.antichain import (
    build_gamma,
    build_lambda,
    build_star,
    certify_lambda,
    check_separation,
    smallest_star_n,
    sum_e_t,
)
from carpet_quant.carpet_model import derived_constants
from carpet_quant.fixtures import FIXTURES, get
from carpet_quant.pressure import (
    bm_closed_form_d_r,
    closed_form_beta,
    closed_form_s_r,
    closed_form_t_r,
    descendant_ratio,
    descendant_sum_exact,
    partition_sum_exact,
    s_from_t,
    solve_t_r,
    tau_y,
)
from carpet_quant.quantizer import coefficient_scan, lloyd, sample
from carpet_quant.words import (
    SplitWord,
    SquareRelation,
    comparable,
    e_r_value,
    enumerate_psi,
    is_in_psi,
    random_psi_word,
    rectangle,
    square_compare,
)
from oracles import brute_psi


def test_c01_example_incomparable_x_words(acceptance_log):
    t0 = time.perf_counter()
    sp = get("three_column")
    sigma = SplitWord(((2, 2),) + ((1, 1),) * 11, (3,) * 13)
    omega = SplitWord(((1, 2),) + ((2, 1),) * 8, (1,) * 3 + (3,) * 16)
    checks = {
        "sigma in Psi_12": is_in_psi(sp, sigma) and sigma.l == 12,
        "omega in Psi_9": is_in_psi(sp, omega) and omega.l == 9,
        "|sigma|=25": len(sigma) == 25,
        "|omega|=28": len(omega) == 28,
        "sigma_y prefix of omega_y": omega.y[: len(sigma.y)] == sigma.y and sigma.y != omega.y,
        "L-words incomparable": not comparable(sigma.xs, omega.xs),
        "|sigma_L| > |omega_L|": sigma.l == 12 > 9 == omega.l,
    }
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 1.0
    failed = [k for k, v in checks.items() if not v]
    acceptance_log("1 worked example (incomparable L-words)", ok, f"failed={failed} time={elapsed:.3f}s")
    assert ok


def test_c02_example_equal_lengths(acceptance_log):
    t0 = time.perf_counter()
    sp = get("three_column_short_top")
    sigma = SplitWord(((1, 1),) * 9, (1,) * 9 + (3,))
    omega = SplitWord(((1, 1),) * 10, (1,) * 8 + (3,))
    rs, ro = rectangle(sp, sigma), rectangle(sp, omega)
    inside = rs.x_lo <= ro.x_lo and ro.x_hi <= rs.x_hi and rs.y_lo <= ro.y_lo and ro.y_hi <= rs.y_hi
    checks = {
        "sigma in Psi_9": is_in_psi(sp, sigma) and sigma.l == 9,
        "omega in Psi_10": is_in_psi(sp, omega) and omega.l == 10,
        "F_omega strictly inside F_sigma": inside and rs != ro,
        "square_compare": square_compare(sp, sigma, omega) is SquareRelation.CONTAINS,
        "|sigma|=|omega|=19": len(sigma) == len(omega) == 19,
        "exact": sp.exact and isinstance(rs.x_hi, F),
    }
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 1.0
    failed = [k for k, v in checks.items() if not v]
    acceptance_log("2 worked example (equal lengths)", ok, f"failed={failed} time={elapsed:.3f}s")
    assert ok


def test_c03_enumeration_equals_brute_force(acceptance_log):
    t0 = time.perf_counter()
    results = []
    for name in ("three_column", "bm_4_2", "mixed"):
        sp = get(name)
        for l in range(1, 7):
            try:
                got = enumerate_psi(sp, l)
            except BudgetExceededError as exc:
                results.append((name, l, False, f"budget: {exc.count} words > {exc.budget}"))
                continue
            keys = [(w.xs, w.ys) for w in got]
            equal = len(keys) == len(set(keys)) and set(keys) == brute_psi(sp, l)
            results.append((name, l, equal, f"{len(keys)} words"))
    elapsed = time.perf_counter() - t0
    bad = [f"{n} l={l} ({why})" for n, l, ok_, why in results if not ok_]
    ok = not bad and elapsed < 60.0
    acceptance_log(
        "3 enumeration oracle l<=6",
        ok,
        f"{len(results) - len(bad)}/{len(results)} levels equal; failing: {bad}; time={elapsed:.1f}s",
    )
    assert ok


def test_c04_dimension_route_agreement(acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    bm_gap = 0.0
    rows = []
    for name in sorted(FIXTURES):
        sp = get(name)
        for r in (1.0, 2.0, 3.0):
            s_closed = closed_form_s_r(sp, r)
            s_part = s_from_t(solve_t_r(sp, r, l_max=12).root, r)
            rel = abs(s_closed - s_part) / s_closed
            worst = max(worst, rel)
            rows.append((name, r, rel))
            if sp.bm is not None:
                bm_gap = max(bm_gap, abs(s_closed - bm_closed_form_d_r(sp, r)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and bm_gap <= 1e-10 and elapsed < 120.0
    acceptance_log(
        "4 dimension route agreement",
        ok,
        f"max rel gap={worst:.2e} (tol 2e-2) over {len(rows)} cases; BM gap={bm_gap:.1e}; time={elapsed:.1f}s",
    )
    assert ok


def test_c05_spectrum(acceptance_log):
    t0 = time.perf_counter()
    tau1 = max(abs(closed_form_beta(get(name), 1.0)) for name in FIXTURES)
    tauy1 = max(abs(tau_y(get(name), 1.0)) for name in FIXTURES)
    box = closed_form_beta(get("bm_4_2"), 0.0)
    expected = 1 + math.log(3 / 2) / math.log(4)
    ok = tau1 <= 1e-12 and tauy1 <= 1e-12 and abs(box - expected) <= 1e-10
    acceptance_log(
        "5 spectrum",
        ok,
        f"max|tau(1)|={tau1:.1e}; tau(0)={box!r} vs {expected!r}; time={time.perf_counter() - t0:.2f}s",
    )
    assert ok


def test_c06_antichain_certification(acceptance_log):
    t0 = time.perf_counter()
    sp = get("two_strip_lean")
    r = 2.0
    t = closed_form_t_r(sp, r)
    flags_ok = True
    lam_sums, gam_sums, sizes = [], [], []
    for n in range(2, 9):
        lam = certify_lambda(sp, build_lambda(sp, n, r))
        flags_ok &= all(lam.certified[k] is True for k in ("maximal", "disjoint", "window"))
        gam = build_gamma(sp, n, r)
        lam_sums.append(sum_e_t(sp, lam, t))
        gam_sums.append(sum_e_t(sp, gam, t))
        sizes.append(len(lam))
    lam_band = max(lam_sums) / min(lam_sums)
    gam_band = max(gam_sums) / min(gam_sums)
    elapsed = time.perf_counter() - t0
    ok = flags_ok and lam_band <= 100 and gam_band <= 100 and elapsed < 300
    acceptance_log(
        "6 anti-chain certification n=2..8",
        ok,
        f"flags={flags_ok}; sizes={sizes}; band Lambda={lam_band:.3f} Gamma={gam_band:.3f}; time={elapsed:.1f}s",
    )
    assert ok


def test_c07_separation(acceptance_log):
    t0 = time.perf_counter()
    sp = get("two_strip_separated")
    r = 2.0
    n = smallest_star_n(sp, r)
    star = build_star(sp, build_lambda(sp, n, r), r)
    sep = check_separation(sp, star)
    elapsed = time.perf_counter() - t0
    ok = sep.passed and sep.exhaustive and elapsed < 120
    acceptance_log(
        "7 separation of the star family",
        ok,
        f"n={n}, |F|={len(star)}, min ratio={sep.min_ratio:.4f} >= c={sep.constant:.4f}, "
        f"pairs={sep.pairs_checked}, exhaustive={sep.exhaustive}; time={elapsed:.1f}s",
    )
    assert ok


# relative rounding slack for the floating-point evaluation at irrational t_r
T_R_SLACK = 1e-12


def test_c08_descendant_bound_constants(acceptance_log):
    t0 = time.perf_counter()
    r = 2
    report = []
    all_ok = True
    for name in ("three_column", "bm_4_2", "mixed"):
        sp = get(name)
        h = derived_constants(sp, r).A7 + 1
        qs = [sp.q(j) for j in range(1, sp.m + 1)]
        rng = np.random.default_rng(2024)
        t_r = closed_form_t_r(sp, r)
        # t = 1: exact rational arithmetic
        lo1, hi1 = min(F(1), 1 / sum(qs)), 1 / min(qs)
        i_h = partition_sum_exact(sp, h, r)
        # t = t_r: floating point
        lot = min(1.0, 1.0 / sum(float(q) ** t_r for q in qs))
        hit = float(min(qs)) ** -t_r
        bad1 = badt = 0
        min_t = math.inf
        for _ in range(100):
            sigma = random_psi_word(sp, int(rng.integers(1, 7)), rng)
            ratio = descendant_sum_exact(sp, sigma, h, r) / (e_r_value(sp, sigma, r) * i_h)
            bad1 += not (lo1 <= ratio <= hi1)
            x = descendant_ratio(sp, sigma, h, t_r, r)
            min_t = min(min_t, x)
            badt += not (lot * (1 - T_R_SLACK) <= x <= hit * (1 + T_R_SLACK))
        all_ok &= bad1 == 0 and badt == 0
        report.append(f"{name}(h={h}): t=1 out={bad1}, t_r out={badt}, min ratio={min_t:.4f} vs lower {lot:.4f}")
    elapsed = time.perf_counter() - t0
    ok = all_ok and elapsed < 120
    acceptance_log("8 descendant-bound constants", ok, "; ".join(report) + f"; time={elapsed:.1f}s")
    assert ok


def test_c09_convergence_order(acceptance_log):
    t0 = time.perf_counter()
    sp = get("three_column")
    res = coefficient_scan(sp, 2.0, n_grid=[16, 32, 64, 128, 256, 512, 1024], sample_size=200_000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = res.slope_rel_error <= 0.15 and res.band_ratio <= 10 and elapsed < 600
    acceptance_log(
        "9 convergence order",
        ok,
        f"slope(log e^r)={res.slope:.4f} vs -r/s_r={res.target_slope:.4f} (rel {res.slope_rel_error:.3f}); "
        f"slope(log e)={res.slope_e:.4f}; band max/min={res.band_ratio:.3f}; time={elapsed:.0f}s",
    )
    assert ok


def test_c10_moment_oracle(acceptance_log):
    t0 = time.perf_counter()
    worst_z = 0.0
    lloyd_rel = 0.0
    for name in ("three_column", "bm_4_2", "mixed"):
        sp = get(name)
        x = sample(sp, 1_000_000, seed=101).points
        mean, cov = moments(sp)
        n = len(x)
        centered = x - x.mean(axis=0)
        z_mean = np.abs(x.mean(axis=0) - mean) / np.sqrt(np.diag(cov) / n)
        zs = list(z_mean)
        for a in range(2):
            for b in range(a, 2):
                prod = centered[:, a] * centered[:, b]
                se = prod.std() / math.sqrt(n)
                zs.append(abs(prod.mean() - cov[a, b]) / se)
        worst_z = max(worst_z, max(zs))
        cb = lloyd(x, 1, 2.0)
        lloyd_rel = max(lloyd_rel, abs(cb.error_r - np.trace(cov)) / np.trace(cov))
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 4 and lloyd_rel <= 0.01 and elapsed < 60
    acceptance_log(
        "10 moment oracle",
        ok,
        f"max z-score={worst_z:.2f} (<=4); e_(1,2)^2 rel gap={lloyd_rel:.2e} (<=1e-2); time={elapsed:.1f}s",
    )
    assert ok
