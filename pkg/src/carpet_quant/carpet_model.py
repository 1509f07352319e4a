"""Lalley-Gatzouras carpet parameters, validation and derived constants.

A carpet is given column by column.  Column ``j`` (1-based, bottom to top)
has vertical contraction ``b_j`` and offset ``d_j``; its cells ``i = 1..n_j``
(left to right) carry the horizontal contraction ``a_ij``, offset ``c_ij``
and probability weight ``p_ij``.  The map of cell ``(i, j)`` is

    f_ij(x, y) = (a_ij x + c_ij, b_j y + d_j).

Two numeric modes exist.  In *exact* mode every parameter is a
:class:`fractions.Fraction` and all comparisons of contraction products are
exact.  In *float* mode parameters are doubles and products are compared as
sums of logs with an absolute tolerance ``EPS_CMP``; a tie always counts for
the non-strict side of an inequality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

EPS_CMP = 1e-12
PROB_TOL = 1e-9
_PARAM_TOL = 1e-12

Number = Fraction | float


class CarpetError(Exception):
    """Base class for all package errors; ``exit_code`` is used by the CLI."""

    exit_code = 1

    def __init__(self, message: str, code: str = "error", **details: Any) -> None:
        super().__init__(message)
        self.code = code
        self.details = details

    def to_json(self) -> dict:
        out = {"error": type(self).__name__, "code": self.code, "message": str(self)}
        out.update({k: v for k, v in self.details.items() if _jsonable(v)})
        return out


class CarpetValidationError(CarpetError, ValueError):
    """A carpet description violates one of the structural conditions.

    ``code`` is one of ``A1``, ``A2``, ``A3``, ``A4``, ``PROB_NONPOSITIVE``,
    ``PROB_SUM``, ``M_LT_2``, ``RANGE``, ``SHAPE``, ``BM``.
    """

    exit_code = 2


class BudgetExceededError(CarpetError, RuntimeError):
    """An enumeration would produce more words than the configured budget."""

    exit_code = 3

    def __init__(self, message: str, count: int, budget: int) -> None:
        super().__init__(message, code="BUDGET", count=count, budget=budget)
        self.count = count
        self.budget = budget


class NumericError(CarpetError, ArithmeticError):
    """A root finder could not bracket or converge."""

    exit_code = 4


class PreconditionError(CarpetError, ValueError):
    """A construction was requested below the threshold where it is defined."""

    exit_code = 2


def _jsonable(v: Any) -> bool:
    try:
        json.dumps(v)
    except TypeError:
        return False
    return True


# --------------------------------------------------------------------------
# comparison scales


class ExactScale:
    """Products kept as exact fractions."""

    exact = True
    one = Fraction(1)

    @staticmethod
    def of(v: Number) -> Fraction:
        return Fraction(v)

    @staticmethod
    def mul(x, y):
        return x * y

    @staticmethod
    def div(x, y):
        return x / y

    @staticmethod
    def power(x, k: int):
        return x**k

    @staticmethod
    def ge(x, y) -> bool:
        return x >= y

    @staticmethod
    def gt(x, y) -> bool:
        return x > y

    @staticmethod
    def log(x) -> float:
        return frac_log(x)

    @staticmethod
    def key(x):
        return x


class LogScale:
    """Products kept as sums of natural logs, compared with tolerance."""

    exact = False
    one = 0.0

    def __init__(self, eps: float = EPS_CMP) -> None:
        self.eps = eps

    @staticmethod
    def of(v: Number) -> float:
        return frac_log(v) if isinstance(v, Fraction) else math.log(v)

    @staticmethod
    def mul(x, y):
        return x + y

    @staticmethod
    def div(x, y):
        return x - y

    @staticmethod
    def power(x, k: int):
        return x * k

    def ge(self, x, y) -> bool:
        return x >= y - self.eps

    def gt(self, x, y) -> bool:
        return x > y + self.eps

    @staticmethod
    def log(x) -> float:
        return x

    def key(self, x):
        # bucket used to merge numerically identical states
        return round(x / self.eps) if self.eps > 0 else x


def frac_log(x: Number) -> float:
    """Natural log that stays accurate for fractions far below float range."""
    if isinstance(x, Fraction):
        if x <= 0:
            raise ValueError("log of non-positive number")
        return math.log(x.numerator) - math.log(x.denominator)
    return math.log(x)


def _as_number(v: Any, exact: bool) -> Number:
    if exact:
        if isinstance(v, str):
            return Fraction(v.strip())
        return Fraction(v)
    if isinstance(v, str):
        return float(Fraction(v.strip()))
    return float(v)


def _is_exact_literal(v: Any) -> bool:
    if isinstance(v, bool):
        return False
    if isinstance(v, (int, Fraction)):
        return True
    if isinstance(v, str):
        try:
            Fraction(v.strip())
        except ValueError:
            return False
        return True
    return False


# --------------------------------------------------------------------------
# parameter types


@dataclass(frozen=True)
class CellSpec:
    a: Number
    c: Number
    p: Number


@dataclass(frozen=True)
class ColumnSpec:
    b: Number
    d: Number
    cells: tuple[CellSpec, ...]

    @property
    def n(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class CarpetSpec:
    """A validated carpet.  Build it with :func:`validate` or :func:`bedford_mcmullen`."""

    columns: tuple[ColumnSpec, ...]
    exact: bool
    bm: tuple[int, int] | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    # -- basic shape ------------------------------------------------------
    @property
    def m(self) -> int:
        return len(self.columns)

    @property
    def n_cols(self) -> tuple[int, ...]:
        return tuple(col.n for col in self.columns)

    @property
    def letters(self) -> tuple[tuple[int, int], ...]:
        """The alphabet G as 1-based ``(i, j)`` pairs, ordered by ``(j, i)``."""
        if "letters" not in self._cache:
            self._cache["letters"] = tuple(
                (i + 1, j + 1) for j, col in enumerate(self.columns) for i in range(col.n)
            )
        return self._cache["letters"]

    @property
    def N(self) -> int:
        return len(self.letters)

    def cell(self, i: int, j: int) -> CellSpec:
        return self.columns[j - 1].cells[i - 1]

    def a(self, i: int, j: int) -> Number:
        return self.columns[j - 1].cells[i - 1].a

    def c(self, i: int, j: int) -> Number:
        return self.columns[j - 1].cells[i - 1].c

    def p(self, i: int, j: int) -> Number:
        return self.columns[j - 1].cells[i - 1].p

    def b(self, j: int) -> Number:
        return self.columns[j - 1].b

    def d(self, j: int) -> Number:
        return self.columns[j - 1].d

    def q(self, j: int) -> Number:
        return sum((cell.p for cell in self.columns[j - 1].cells), self.zero)

    @property
    def zero(self) -> Number:
        return Fraction(0) if self.exact else 0.0

    # -- scales -----------------------------------------------------------
    @property
    def scale(self):
        """Scale used for contraction products (a, b)."""
        if "scale" not in self._cache:
            self._cache["scale"] = ExactScale() if self.exact else LogScale()
        return self._cache["scale"]

    def e_scale(self, r: float):
        """Scale used for E_r values; exact only when r is a non-negative integer."""
        if self.exact and float(r).is_integer() and r >= 0:
            return self.scale
        return LogScale()

    def sa(self, i: int, j: int):
        return self._letter_tables()["sa"][(i, j)]

    def sb(self, j: int):
        return self._letter_tables()["sb"][j]

    def _letter_tables(self) -> dict:
        if "tables" not in self._cache:
            sc = self.scale
            self._cache["tables"] = {
                "sa": {(i, j): sc.of(self.a(i, j)) for (i, j) in self.letters},
                "sb": {j: sc.of(self.b(j)) for j in range(1, self.m + 1)},
                "la": {(i, j): frac_log(self.a(i, j)) for (i, j) in self.letters},
                "lb": {j: frac_log(self.b(j)) for j in range(1, self.m + 1)},
                "lp": {(i, j): frac_log(self.p(i, j)) for (i, j) in self.letters},
                "lq": {j: frac_log(self.q(j)) for j in range(1, self.m + 1)},
            }
        return self._cache["tables"]

    @property
    def log_a(self) -> dict:
        return self._letter_tables()["la"]

    @property
    def log_b(self) -> dict:
        return self._letter_tables()["lb"]

    @property
    def log_p(self) -> dict:
        return self._letter_tables()["lp"]

    @property
    def log_q(self) -> dict:
        return self._letter_tables()["lq"]

    # -- arrays for numeric work -----------------------------------------
    def arrays(self) -> dict[str, np.ndarray]:
        """Per-letter float arrays in alphabet order (a, b, c, d, p, j)."""
        if "arrays" not in self._cache:
            L = self.letters
            self._cache["arrays"] = {
                "a": np.array([float(self.a(i, j)) for i, j in L]),
                "b": np.array([float(self.b(j)) for _, j in L]),
                "c": np.array([float(self.c(i, j)) for i, j in L]),
                "d": np.array([float(self.d(j)) for _, j in L]),
                "p": np.array([float(self.p(i, j)) for i, j in L]),
                "j": np.array([j for _, j in L]),
            }
        return self._cache["arrays"]

    def to_dict(self) -> dict:
        def enc(v: Number):
            return str(v) if isinstance(v, Fraction) else v

        return {
            "columns": [
                {
                    "b": enc(col.b),
                    "d": enc(col.d),
                    "cells": [{"a": enc(x.a), "c": enc(x.c), "p": enc(x.p)} for x in col.cells],
                }
                for col in self.columns
            ]
        }


# --------------------------------------------------------------------------
# validation


def _raw_columns(raw: Mapping[str, Any]) -> list:
    if "columns" not in raw:
        raise CarpetValidationError("carpet description needs a 'columns' list", code="SHAPE")
    cols = raw["columns"]
    if not isinstance(cols, Sequence) or isinstance(cols, (str, bytes)):
        raise CarpetValidationError("'columns' must be a list", code="SHAPE")
    return list(cols)


def _all_params(cols: list) -> Iterable[Any]:
    for col in cols:
        yield col["b"]
        yield col["d"]
        for cell in col["cells"]:
            yield cell["a"]
            yield cell["c"]
            yield cell["p"]


def validate(raw: Mapping[str, Any] | CarpetSpec, exact: bool | None = None) -> CarpetSpec:
    """Check a raw description against conditions (A1)-(A4) and build a spec.

    ``exact=None`` picks exact mode when every parameter is an int, a
    Fraction or a rational string such as ``"1/9"``.
    """
    if isinstance(raw, CarpetSpec):
        raw = raw.to_dict()
    if "n0" in raw:
        return bedford_mcmullen(raw["n0"], raw["m0"], raw["cells"], raw.get("p"), exact=exact)
    cols = _raw_columns(raw)
    try:
        for col in cols:
            if not col["cells"]:
                raise CarpetValidationError("every column needs at least one cell", code="SHAPE")
        params = list(_all_params(cols))
    except (KeyError, TypeError) as exc:
        raise CarpetValidationError(f"malformed carpet description: {exc}", code="SHAPE") from exc
    if exact is None:
        exact = all(_is_exact_literal(v) for v in params)
    try:
        columns = [
            (
                _as_number(col["b"], exact),
                _as_number(col["d"], exact),
                [
                    (_as_number(c["a"], exact), _as_number(c["c"], exact), _as_number(c["p"], exact))
                    for c in col["cells"]
                ],
            )
            for col in cols
        ]
    except (ValueError, ZeroDivisionError) as exc:
        raise CarpetValidationError(f"unparseable parameter: {exc}", code="SHAPE") from exc

    tol = 0 if exact else _PARAM_TOL

    def le(x, y) -> bool:  # non-strict: ties accepted
        return x <= y + tol

    def lt(x, y) -> bool:  # strict: ties rejected
        return x < y - tol

    m = len(columns)
    if m < 2:
        raise CarpetValidationError(f"need m >= 2 columns, got {m}", code="M_LT_2")

    for j, (b, d, cells) in enumerate(columns, start=1):
        if not (0 < b < 1) or not (0 <= d < 1):
            raise CarpetValidationError(f"column {j}: need 0<b<1 and 0<=d<1", code="RANGE", column=j)
        for i, (a, c, p) in enumerate(cells, start=1):
            if not (0 < a < 1) or not (0 <= c < 1):
                raise CarpetValidationError(
                    f"cell ({i},{j}): need 0<a<1 and 0<=c<1", code="RANGE", cell=[i, j]
                )
            if not p > 0:
                raise CarpetValidationError(
                    f"cell ({i},{j}): probability must be positive", code="PROB_NONPOSITIVE", cell=[i, j]
                )

    # (A1)
    bsum = sum(b for b, _, _ in columns)
    if not le(bsum, 1):
        raise CarpetValidationError(f"(A1) violated: sum of b_j = {float(bsum)} > 1", code="A1")
    b_m, d_m, _ = columns[-1]
    if not le(d_m, 1 - b_m):
        raise CarpetValidationError("(A1) violated: d_m > 1 - b_m", code="A1")
    # (A2)
    for j in range(m - 1):
        b, d, _ = columns[j]
        if not le(b + d, columns[j + 1][1]):
            raise CarpetValidationError(
                f"(A2) violated between columns {j + 1} and {j + 2}", code="A2", column=j + 1
            )
    # (A3), (A4)
    for j, (b, _, cells) in enumerate(columns, start=1):
        if not le(sum(a for a, _, _ in cells), 1):
            raise CarpetValidationError(f"(A3) violated in column {j}: sum of a_ij > 1", code="A3", column=j)
        if not all(lt(a, b) for a, _, _ in cells):
            raise CarpetValidationError(f"(A3) violated in column {j}: need max a_ij < b_j", code="A3", column=j)
        a_last, c_last, _ = cells[-1]
        if not le(a_last + c_last, 1):
            raise CarpetValidationError(
                f"(A3) violated in column {j}: a_nj + c_nj > 1", code="A3", column=j
            )
        for i in range(len(cells) - 1):
            a, c, _ = cells[i]
            if not le(a + c, cells[i + 1][1]):
                raise CarpetValidationError(
                    f"(A4) violated in column {j} between cells {i + 1} and {i + 2}", code="A4", column=j
                )

    psum = sum(p for _, _, cells in columns for _, _, p in cells)
    if abs(float(psum) - 1.0) > PROB_TOL:
        raise CarpetValidationError(f"probabilities sum to {float(psum)!r}, not 1", code="PROB_SUM")

    spec_cols = tuple(
        ColumnSpec(b, d, tuple(CellSpec(a, c, p / psum) for a, c, p in cells)) for b, d, cells in columns
    )
    return CarpetSpec(spec_cols, exact=exact, bm=_detect_bm(spec_cols, exact))


def _detect_bm(columns: tuple[ColumnSpec, ...], exact: bool) -> tuple[int, int] | None:
    a_vals = {cell.a for col in columns for cell in col.cells}
    b_vals = {col.b for col in columns}
    if len(a_vals) != 1 or len(b_vals) != 1:
        return None
    a, b = Fraction(next(iter(a_vals))), Fraction(next(iter(b_vals)))
    if not exact:
        a, b = a.limit_denominator(10**6), b.limit_denominator(10**6)
    if a.numerator != 1 or b.numerator != 1:
        return None
    n0, m0 = a.denominator, b.denominator
    for col in columns:
        if Fraction(col.d).limit_denominator(10**6) * m0 % 1:
            return None
        for cell in col.cells:
            if Fraction(cell.c).limit_denominator(10**6) * n0 % 1:
                return None
    return (n0, m0)


def bedford_mcmullen(
    n0: int,
    m0: int,
    cells: Iterable[Sequence[int]],
    probs: Sequence[Any] | None = None,
    exact: bool | None = None,
) -> CarpetSpec:
    """Bedford-McMullen carpet on the ``n0 x m0`` grid.

    ``cells`` holds 0-based ``(i, j)`` grid positions (``i`` horizontal).
    ``probs`` is aligned with ``cells``; uniform weights when omitted.
    Empty rows are dropped and the remaining ones renumbered 1..m.
    """
    n0, m0 = int(n0), int(m0)
    cells = [tuple(int(v) for v in c) for c in cells]
    if not cells:
        raise CarpetValidationError("empty cell set", code="BM")
    if n0 <= m0:
        raise CarpetValidationError(
            f"need n0 > m0 (a_ij = 1/n0 must be < b_j = 1/m0), got n0={n0}, m0={m0}", code="A3"
        )
    if len(set(cells)) != len(cells):
        raise CarpetValidationError("duplicate cells", code="BM")
    for i, j in cells:
        if not (0 <= i < n0 and 0 <= j < m0):
            raise CarpetValidationError(f"cell {(i, j)} outside the grid", code="BM")
    if probs is None:
        probs = [Fraction(1, len(cells))] * len(cells)
    if len(probs) != len(cells):
        raise CarpetValidationError("need one probability per cell", code="BM")
    if exact is None:
        exact = all(_is_exact_literal(p) for p in probs)
    weight = {c: p for c, p in zip(cells, probs)}
    rows = sorted({j for _, j in cells})
    raw_cols = []
    for j in rows:
        row_cells = sorted(i for i, jj in cells if jj == j)
        raw_cols.append(
            {
                "b": Fraction(1, m0),
                "d": Fraction(j, m0),
                "cells": [{"a": Fraction(1, n0), "c": Fraction(i, n0), "p": weight[(i, j)]} for i in row_cells],
            }
        )
    spec = validate({"columns": raw_cols}, exact=exact)
    return CarpetSpec(spec.columns, exact=spec.exact, bm=(n0, m0))


def load_spec(path: str | Path, exact: bool | None = None) -> CarpetSpec:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return validate(raw, exact=exact)


# --------------------------------------------------------------------------
# derived constants


def _floor(x: float) -> int:
    """Floor that snaps values within rounding noise of an integer."""
    k = round(x)
    if abs(x - k) <= 1e-9 * max(1.0, abs(x)):
        return int(k)
    return math.floor(x)


def floor_log_ratio(x: Number, y: Number) -> int:
    """``floor(log x / log y)`` for ``0 < x, y < 1``, exact for fractions."""
    if isinstance(x, Fraction) and isinstance(y, Fraction):
        # largest k with y**k >= x
        k = _floor(frac_log(x) / frac_log(y))
        while y ** (k + 1) >= x:
            k += 1
        while k > 0 and y**k < x:
            k -= 1
        return k
    return _floor(frac_log(x) / frac_log(y))


@dataclass(frozen=True)
class DerivedConstants:
    r: float
    a_min: Number
    a_max: Number
    b_min: Number
    b_max: Number
    p_min: Number
    p_max: Number
    q_min: Number
    q_max: Number
    A1: int
    A2: int
    A3: Number
    A4: float
    A5_r: int
    A6: int
    A7: int
    eta_low_r: float
    eta_high_r: float
    log_eta_low_r: float
    log_eta_high_r: float
    M_r: int
    T1_r: int
    T2_r: int

    def as_table(self) -> list[tuple[str, str]]:
        rows = []
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            rows.append((name, str(v) if isinstance(v, Fraction) else repr(v)))
        return rows


def derived_constants(spec: CarpetSpec, r: float) -> DerivedConstants:
    """Constants of the anti-chain constructions for exponent ``r``.

    ``T2_r`` is stored as ``floor(T1_r + 2*A2/A4)``; for integer ``n`` the
    condition ``n > T2_r`` is unchanged by the floor.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    key = ("derived", float(r))
    if key in spec._cache:
        return spec._cache[key]
    a_vals = [spec.a(i, j) for i, j in spec.letters]
    p_vals = [spec.p(i, j) for i, j in spec.letters]
    b_vals = [spec.b(j) for j in range(1, spec.m + 1)]
    q_vals = [spec.q(j) for j in range(1, spec.m + 1)]
    a_min, a_max = min(a_vals), max(a_vals)
    b_min, b_max = min(b_vals), max(b_vals)
    p_min, p_max = min(p_vals), max(p_vals)
    q_min, q_max = min(q_vals), max(q_vals)

    A1 = floor_log_ratio(a_min, b_max) + 1
    A2 = floor_log_ratio(b_min, a_max) + 1
    A3 = max(spec.a(i, j) / spec.b(j) for i, j in spec.letters)
    A4 = frac_log(A3) / frac_log(b_min)
    A6 = _floor(1.0 / A4)
    A7 = _floor(2.0 / A4) + 1

    log_eta_low = frac_log(p_min) + A1 * frac_log(q_min) + r * frac_log(a_min)
    log_eta_high = frac_log(p_max) - frac_log(q_min) + r * frac_log(a_max)
    M_r = _floor(log_eta_low / log_eta_high)
    A5 = _floor((2 * frac_log(q_min) + log_eta_low) / (r * frac_log(a_max)))
    T1 = _floor((A1 + A5 + 3) / A4)
    T2 = _floor(T1 + 2 * A2 / A4)
    dc = DerivedConstants(
        r=float(r),
        a_min=a_min,
        a_max=a_max,
        b_min=b_min,
        b_max=b_max,
        p_min=p_min,
        p_max=p_max,
        q_min=q_min,
        q_max=q_max,
        A1=A1,
        A2=A2,
        A3=A3,
        A4=A4,
        A5_r=A5,
        A6=A6,
        A7=A7,
        eta_low_r=math.exp(log_eta_low),
        eta_high_r=math.exp(log_eta_high),
        log_eta_low_r=log_eta_low,
        log_eta_high_r=log_eta_high,
        M_r=M_r,
        T1_r=T1,
        T2_r=T2,
    )
    spec._cache[key] = dc
    return dc


def eta_low_power(spec: CarpetSpec, r: float, n: int):
    """``eta_low_r ** n`` on the E_r scale (exact when possible)."""
    sc = spec.e_scale(r)
    dc = derived_constants(spec, r)
    if sc.exact:
        base = Fraction(dc.p_min) * Fraction(dc.q_min) ** dc.A1 * Fraction(dc.a_min) ** int(r)
        return base**n
    return n * dc.log_eta_low_r


# --------------------------------------------------------------------------
# moments


def moments(spec: CarpetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the self-affine measure, in closed form.

    Solves the linear fixed-point identities E[g(X, Y)] = sum p E[g(f(X, Y))]
    for g in {x, y, x^2, y^2, xy}.  Exact arithmetic is used in exact mode.
    """
    cells = [(spec.p(i, j), spec.a(i, j), spec.c(i, j), spec.b(j), spec.d(j)) for i, j in spec.letters]
    one = Fraction(1) if spec.exact else 1.0

    def s(fn):
        return sum((fn(*cell) for cell in cells), spec.zero)

    ex = s(lambda p, a, c, b, d: p * c) / (one - s(lambda p, a, c, b, d: p * a))
    ey = s(lambda p, a, c, b, d: p * d) / (one - s(lambda p, a, c, b, d: p * b))
    exx = s(lambda p, a, c, b, d: p * (2 * a * c * ex + c * c)) / (one - s(lambda p, a, c, b, d: p * a * a))
    eyy = s(lambda p, a, c, b, d: p * (2 * b * d * ey + d * d)) / (one - s(lambda p, a, c, b, d: p * b * b))
    exy = s(lambda p, a, c, b, d: p * (a * d * ex + c * b * ey + c * d)) / (
        one - s(lambda p, a, c, b, d: p * a * b)
    )
    mean = np.array([float(ex), float(ey)])
    cov = np.array(
        [
            [float(exx - ex * ex), float(exy - ex * ey)],
            [float(exy - ex * ey), float(eyy - ey * ey)],
        ]
    )
    return mean, cov
