"""Reference carpets used by the tests, the CLI ``--fixture`` flag and the docs.

All fixtures are exact (rational parameters).
"""

from __future__ import annotations

from fractions import Fraction as F

from .carpet_model import CarpetSpec, bedford_mcmullen, validate


def _cell(a, c, p):
    return {"a": a, "c": c, "p": p}


def three_column_raw(p=None) -> dict:
    """Three columns of height 1/3, cells of width 1/9 and 1/27 (5 cells)."""
    p = [F(1, 5)] * 5 if p is None else [F(v) for v in p]
    return {
        "columns": [
            {"b": F(1, 3), "d": F(0), "cells": [_cell(F(1, 9), F(0), p[0]), _cell(F(1, 27), F(26, 27), p[1])]},
            {"b": F(1, 3), "d": F(1, 3), "cells": [_cell(F(1, 27), F(1, 9), p[2]), _cell(F(1, 9), F(4, 27), p[3])]},
            {"b": F(1, 3), "d": F(2, 3), "cells": [_cell(F(1, 9), F(0), p[4])]},
        ]
    }


def three_column(p=None) -> CarpetSpec:
    return validate(three_column_raw(p))


def three_column_short_top() -> CarpetSpec:
    """As :func:`three_column` with a shorter top column (b_3 = 1/10, a_13 = 1/12)."""
    raw = three_column_raw()
    top = raw["columns"][2]
    top["b"], top["d"] = F(1, 10), F(9, 10)
    top["cells"][0]["a"] = F(1, 12)
    return validate(raw)


def bm_4_2() -> CarpetSpec:
    """Bedford-McMullen carpet on the 4x2 grid with three cells, uniform weights."""
    return bedford_mcmullen(4, 2, [(0, 0), (1, 0), (0, 1)])


def mixed() -> CarpetSpec:
    """Two columns of unequal heights with 2 and 1 cells and unequal weights."""
    return validate(
        {
            "columns": [
                {"b": F(1, 2), "d": F(0), "cells": [_cell(F(1, 4), F(0), F(1, 2)), _cell(F(1, 8), F(1, 2), F(1, 4))]},
                {"b": F(1, 3), "d": F(2, 3), "cells": [_cell(F(1, 5), F(1, 5), F(1, 4))]},
            ]
        }
    )


def two_strip(a) -> CarpetSpec:
    """Two stacked single-cell columns of height 1/2, cell width ``a`` < 1/2, equal weights."""
    a = F(a)
    return validate(
        {
            "columns": [
                {"b": F(1, 2), "d": F(0), "cells": [_cell(a, F(0), F(1, 2))]},
                {"b": F(1, 2), "d": F(1, 2), "cells": [_cell(a, F(0), F(1, 2))]},
            ]
        }
    )


def two_strip_lean() -> CarpetSpec:
    """Cell width 9/20: anti-chains grow slowly in n (used for n = 2..8 checks)."""
    return two_strip(F(9, 20))


def two_strip_separated() -> CarpetSpec:
    """Cell width 1/8: the star family is admissible already at n = 2."""
    return two_strip(F(1, 8))


FIXTURES = {
    "three_column": three_column,
    "three_column_short_top": three_column_short_top,
    "bm_4_2": bm_4_2,
    "mixed": mixed,
    "two_strip_lean": two_strip_lean,
    "two_strip_separated": two_strip_separated,
}


def get(name: str) -> CarpetSpec:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
