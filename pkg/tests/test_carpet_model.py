import json
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carpet_quant import (
    BudgetExceededError,
    CarpetValidationError,
    bedford_mcmullen,
    derived_constants,
    load_spec,
    moments,
    validate,
)
from carpet_quant.carpet_model import eta_low_power, floor_log_ratio
from carpet_quant.fixtures import FIXTURES, get, mixed, three_column_raw


def test_three_column_shape():
    sp = get("three_column")
    assert sp.exact and sp.m == 3 and sp.N == 5
    assert list(sp.letters) == [(1, 1), (2, 1), (1, 2), (2, 2), (1, 3)]
    assert [sp.q(j) for j in (1, 2, 3)] == [F(2, 5), F(2, 5), F(1, 5)]
    assert sp.bm is None


def test_bm_constructor_rows_and_detection():
    sp = bedford_mcmullen(4, 2, [(0, 0), (1, 0), (0, 1)])
    assert sp.bm == (4, 2) and sp.m == 2 and [c.n for c in sp.columns] == [2, 1]
    again = validate(sp.to_dict())
    assert again.bm == (4, 2)
    assert validate({"n0": 4, "m0": 2, "cells": [[0, 0], [1, 0], [0, 1]]}).bm == (4, 2)


def test_string_fractions_select_exact_mode():
    raw = json.loads(json.dumps(mixed().to_dict()))
    assert validate(raw).exact
    assert not validate(raw, exact=False).exact


def test_load_spec_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(get("mixed").to_dict()))
    assert load_spec(path) == get("mixed")


@pytest.mark.parametrize(
    "mutate, code",
    [
        (lambda r: r["columns"][2].update(b=F(1, 2)), "A1"),
        (lambda r: r["columns"][1].update(d=F(1, 4)), "A2"),
        (lambda r: r["columns"][0]["cells"][0].update(a=F(1, 3)), "A3"),
        (lambda r: r["columns"][1]["cells"][0].update(c=F(1, 8)), "A4"),
        (lambda r: r["columns"][0]["cells"][0].update(p=F(0)), "PROB_NONPOSITIVE"),
        (lambda r: r["columns"][0]["cells"][0].update(p=F(1, 2)), "PROB_SUM"),
        (lambda r: r.update(columns=r["columns"][:1]), "M_LT_2"),
    ],
)
def test_rejections_carry_codes(mutate, code):
    raw = three_column_raw()
    mutate(raw)
    with pytest.raises(CarpetValidationError) as info:
        validate(raw)
    assert info.value.code == code
    assert info.value.exit_code == 2
    assert json.loads(json.dumps(info.value.to_json()))["code"] == code


def test_ties_accepted_on_non_strict_side():
    # b_1 + d_1 = d_2 exactly, a + c = next c exactly, sum b = 1: all allowed
    raw = {
        "columns": [
            {"b": "1/2", "d": "0", "cells": [{"a": "1/4", "c": "0", "p": "1/4"}, {"a": "1/4", "c": "1/4", "p": "1/4"}]},
            {"b": "1/2", "d": "1/2", "cells": [{"a": "1/4", "c": "3/4", "p": "1/2"}]},
        ]
    }
    assert validate(raw).m == 2
    # a = b is the strict side of (A3)
    raw["columns"][1]["cells"][0]["a"] = "1/2"
    raw["columns"][1]["cells"][0]["c"] = "1/2"
    with pytest.raises(CarpetValidationError):
        validate(raw)


@given(st.sampled_from(range(5)), st.fractions(min_value=F(1, 10**6), max_value=F(1, 10**3)))
def test_fuzz_single_parameter_crossing_boundary(which, eps):
    """Nudging one parameter past a non-strict boundary flips acceptance."""
    raw = three_column_raw()
    cols = raw["columns"]
    if which == 0:  # (A1): d_3 + b_3 <= 1, currently equal
        cols[2]["d"] = F(2, 3) + eps
        code = "A1"
    elif which == 1:  # (A2): b_1 + d_1 <= d_2, currently equal
        cols[1]["d"] = F(1, 3) - eps
        code = "A2"
    elif which == 2:  # (A4): a_12 + c_12 <= c_22: 1/27 + 1/9 = 4/27, equal
        cols[1]["cells"][1]["c"] = F(4, 27) - eps
        code = "A4"
    elif which == 3:  # (A3) strict: a < b
        cols[2]["cells"][0]["a"] = F(1, 3) + eps
        code = "A3"
    else:  # sum of b above 1 through column 3 height
        cols[2]["b"] = F(1, 3) + eps
        code = "A1"
    with pytest.raises(CarpetValidationError) as info:
        validate(raw)
    assert info.value.code == code
    assert validate(three_column_raw()).m == 3


def test_derived_constants_three_column():
    dc = derived_constants(get("three_column"), 2)
    assert (dc.A1, dc.A2, dc.A3, dc.A4) == (4, 1, F(1, 3), 1.0)
    assert (dc.A5_r, dc.A6, dc.A7, dc.M_r, dc.T1_r, dc.T2_r) == (4, 1, 3, 3, 11, 13)
    # eta_low = p_min q_min^A1 a_min^r = (1/5)(1/5)^4 (1/27)^2
    assert eta_low_power(get("three_column"), 2, 1) == F(1, 5) * F(1, 5) ** 4 * F(1, 27) ** 2
    assert math.isclose(dc.eta_low_r, float(F(1, 5) ** 5 * F(1, 27) ** 2), rel_tol=1e-12)


def test_derived_constants_bm():
    dc = derived_constants(get("bm_4_2"), 2)
    assert dc.A1 == 3 and dc.T2_r == 11


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_derived_constant_relations(name):
    sp = get(name)
    dc = derived_constants(sp, 2)
    assert dc.A1 >= 2  # a_min < b_max
    assert dc.A3 < 1 and dc.A4 > 0
    assert dc.A7 > dc.A6
    assert dc.eta_low_r < dc.eta_high_r
    assert dc.T2_r >= dc.T1_r


@given(st.integers(2, 40), st.integers(2, 40))
def test_floor_log_ratio_exact(u, v):
    x, y = F(1, u), F(1, v)
    k = floor_log_ratio(x, y)
    assert y**k >= x > y ** (k + 1)


def test_budget_error_payload():
    err = BudgetExceededError("too many", count=10, budget=5)
    assert err.exit_code == 3 and err.to_json()["count"] == 10


@pytest.mark.parametrize("name", ["three_column", "bm_4_2", "mixed"])
def test_moments_satisfy_fixed_point_identity(name):
    sp = get(name)
    mean, cov = moments(sp)
    arr = sp.arrays()
    a, b, c, d, p = arr["a"], arr["b"], arr["c"], arr["d"], arr["p"]
    ex, ey = mean
    assert math.isclose(ex, float(np.sum(p * (a * ex + c))), rel_tol=1e-12)
    assert math.isclose(ey, float(np.sum(p * (b * ey + d))), rel_tol=1e-12)
    assert np.all(np.linalg.eigvalsh(cov) > 0)
