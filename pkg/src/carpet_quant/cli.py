"""Command-line front end: ``carpet-quant <command> [options]``.

Every command reads a carpet from ``--spec FILE`` (JSON) or ``--fixture NAME``
and writes CSV or JSON (or SVG for ``render``) preceded by a reproducibility
header: package version, SHA-256 of the canonical carpet description, seed,
and the derived-constants table.

Exit codes: 0 ok, 1 certification check failed, 2 validation or precondition
error, 3 budget exceeded, 4 numeric failure.  Errors are reported as one JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import __version__
from . import fixtures
from .carpet_model import CarpetError, CarpetSpec, PreconditionError, derived_constants, load_spec, validate
from .words import DEFAULT_BUDGET, enumerate_psi, log_e_r, measure, rectangle

EXIT_OK, EXIT_CHECK, EXIT_VALIDATION, EXIT_BUDGET, EXIT_NUMERIC = 0, 1, 2, 3, 4


# --------------------------------------------------------------------------
# helpers


def spec_hash(spec: CarpetSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def header(spec: CarpetSpec, args) -> dict:
    dc = derived_constants(spec, getattr(args, "r", 2.0))
    return {
        "tool": "carpet-quant",
        "version": __version__,
        "spec_sha256": spec_hash(spec),
        "source": args.spec or f"fixture:{args.fixture}",
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "exact": spec.exact,
        "constants": {k: _plain(getattr(dc, k)) for k in dc.__dataclass_fields__},
    }


class Emitter:
    """Writes header + table (CSV) or header + payload (JSON) to a file or stdout."""

    def __init__(self, args, spec: CarpetSpec) -> None:
        self.args = args
        self.head = header(spec, args)

    def _open(self):
        if self.args.out:
            return open(self.args.out, "w", encoding="utf-8", newline="")
        return None

    def emit(self, columns: Sequence[str], rows: Sequence[Sequence], summary: dict | None = None) -> None:
        fh = self._open()
        stream = fh or sys.stdout
        try:
            if self.args.format == "json":
                payload = {"header": self.head, "columns": list(columns), "rows": [[_plain(v) for v in r] for r in rows]}
                if summary is not None:
                    payload["summary"] = {k: _plain(v) for k, v in summary.items()}
                json.dump(payload, stream, indent=2, sort_keys=True)
                stream.write("\n")
            else:
                for key, val in self.head.items():
                    if key != "constants":
                        stream.write(f"# {key}: {val}\n")
                for key, val in self.head["constants"].items():
                    stream.write(f"# const {key}: {val}\n")
                if summary is not None:
                    for key, val in summary.items():
                        stream.write(f"# {key}: {json.dumps(_plain(val))}\n")
                writer = csv.writer(stream, lineterminator="\n")
                writer.writerow(columns)
                for row in rows:
                    writer.writerow([_plain(v) for v in row])
        finally:
            if fh:
                fh.close()


def parse_q_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma-separated list."""
    if ":" in text:
        a, b, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("step must be positive")
        k = int(np.floor((b - a) / step + 1e-9))
        return [a + i * step for i in range(k + 1)]
    return [float(x) for x in text.split(",") if x]


def parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


# --------------------------------------------------------------------------
# commands


def cmd_validate(spec: CarpetSpec, args) -> int:
    rows = [(k, v) for k, v in derived_constants(spec, args.r).as_table()]
    summary = {"m": spec.m, "N": spec.N, "exact": spec.exact, "bm": spec.bm}
    Emitter(args, spec).emit(("constant", "value"), rows, summary)
    return EXIT_OK


def cmd_enumerate(spec: CarpetSpec, args) -> int:
    words = enumerate_psi(spec, args.level, budget=args.budget)
    if args.count:
        Emitter(args, spec).emit(("level", "count"), [(args.level, len(words))])
        return EXIT_OK
    rows = [(str(w), w.l, len(w), measure(spec, w), float(np.exp(log_e_r(spec, w, args.r)))) for w in words]
    Emitter(args, spec).emit(("word", "l", "length", "mass", "E_r"), rows, {"count": len(words)})
    return EXIT_OK


def cmd_dimension(spec: CarpetSpec, args) -> int:
    from .pressure import bm_closed_form_d_r, closed_form_s_r, closed_form_t_r, solve_t_r

    rows = []
    summary: dict = {"r": args.r, "method": args.method}
    if args.method == "closed":
        t = closed_form_t_r(spec, args.r)
        s = closed_form_s_r(spec, args.r)
        rows.append(("closed", t, s, s, s))
    elif args.method == "bm":
        try:
            s = bm_closed_form_d_r(spec, args.r)
        except ValueError as exc:
            raise PreconditionError(str(exc), code="NOT_BM") from exc
        rows.append(("bm", s / (s + args.r), s, s, s))
    else:
        curve = solve_t_r(spec, args.r, l_max=args.lmax)
        lo, hi = curve.band
        rows.append(("partition", curve.root, curve.s, lo, hi))
        summary["lmax"] = args.lmax
        summary["level_roots"] = list(curve.t_hats)
    Emitter(args, spec).emit(("method", "t_r", "s_r", "s_lo", "s_hi"), rows, summary)
    return EXIT_OK


def cmd_spectrum(spec: CarpetSpec, args) -> int:
    from .pressure import spectrum

    rows = spectrum(spec, parse_q_grid(args.q_grid))
    Emitter(args, spec).emit(("q", "tau_y", "tau"), rows)
    return EXIT_OK


def _build_family(spec: CarpetSpec, args):
    from . import antichain as ac

    if args.family == "lambda":
        fam = ac.build_lambda(spec, args.n, args.r, args.budget)
        return ac.certify_lambda(spec, fam) if args.check else fam
    if args.family == "gamma":
        fam = ac.build_gamma(spec, args.n, args.r, args.budget)
        return ac.certify_gamma(spec, fam) if args.check else fam
    lam = ac.build_lambda(spec, args.n, args.r, args.budget)
    if args.family == "bar":
        fam = ac.build_bar(spec, lam, args.r)
        return fam.with_flags(**ac.check_bar(spec, fam)) if args.check else fam
    if ac.bar_column(spec) is None:
        fam = ac.build_star(spec, lam, args.r)
    else:
        fam = ac.build_star(spec, ac.build_bar(spec, lam, args.r), args.r)
    if args.check:
        sep = ac.check_separation(spec, fam)
        fam = fam.with_flags(separated=sep.passed, min_ratio=sep.min_ratio, constant=float(sep.constant))
    return fam


def _flags_ok(flags: dict) -> bool:
    ok = True
    for key, val in flags.items():
        if isinstance(val, bool):
            ok &= val
        elif key.endswith("violations") and isinstance(val, int):
            ok &= val == 0
    return ok


def cmd_antichain(spec: CarpetSpec, args) -> int:
    fam = _build_family(spec, args)
    rows = [(str(w), w.l, len(w), float(np.exp(log_e_r(spec, w, args.r)))) for w in fam.words]
    summary = {"kind": fam.kind, "n": fam.n, "count": len(fam), "certified": {k: _plain(v) for k, v in fam.certified.items()}}
    Emitter(args, spec).emit(("word", "l", "length", "E_r"), rows, summary)
    if args.check and not _flags_ok(fam.certified):
        return EXIT_CHECK
    return EXIT_OK


def cmd_quantize(spec: CarpetSpec, args) -> int:
    from .quantizer import coefficient_scan

    res = coefficient_scan(
        spec, args.r, n_grid=args.ngrid, sample_size=args.samples, seed=args.seed, restarts=args.restarts, tol=args.tol
    )
    summary = {
        "s_r": res.s_r,
        "slope": res.slope,
        "target_slope": res.target_slope,
        "slope_e": res.slope_e,
        "band": list(res.band),
        "sample_size": res.sample_size,
        "truncation_tol": res.truncation_tol,
    }
    Emitter(args, spec).emit(("n", "error_r", "scaled"), res.rows, summary)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            json.dump({"header": header(spec, args), **summary}, fh, indent=2, sort_keys=True)
    return EXIT_OK


# --------------------------------------------------------------------------
# SVG


SVG_SIZE = 800.0


def _fmt(v: float) -> str:
    return repr(float(v))


def svg_document(rects: Sequence, points: np.ndarray | None = None, size: float = SVG_SIZE, title: str = "") -> str:
    """SVG 1.1 with the unit square mapped to ``[0, size]^2`` and y pointing up."""
    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n')
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(size)}" height="{_fmt(size)}" '
        f'viewBox="0 0 {_fmt(size)} {_fmt(size)}">\n'
    )
    if title:
        out.write(f"<title>{title}</title>\n")
    out.write(f'<rect x="0.0" y="0.0" width="{_fmt(size)}" height="{_fmt(size)}" fill="white" stroke="black" stroke-width="1"/>\n')
    out.write('<g fill="steelblue" fill-opacity="0.5" stroke="navy" stroke-width="0.2">\n')
    for rc in rects:
        x = float(rc.x_lo) * size
        y = (1.0 - float(rc.y_hi)) * size
        w = float(rc.x_hi - rc.x_lo) * size
        h = float(rc.y_hi - rc.y_lo) * size
        out.write(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}"/>\n')
    out.write("</g>\n")
    if points is not None and len(points):
        out.write('<g fill="crimson">\n')
        for px, py in points:
            out.write(f'<circle cx="{_fmt(px * size)}" cy="{_fmt((1.0 - py) * size)}" r="2"/>\n')
        out.write("</g>\n")
    out.write("</svg>\n")
    return out.getvalue()


def cmd_render(spec: CarpetSpec, args) -> int:
    points = None
    if args.what == "squares":
        words = enumerate_psi(spec, args.level, budget=args.budget)
        title = f"approximate squares, level {args.level}"
    elif args.what == "antichain":
        words = list(_build_family(spec, args).words)
        title = f"{args.family} family, n={args.n}, r={args.r}"
    else:
        from .quantizer import lloyd, sample

        pts = sample(spec, args.samples, tol=args.tol, seed=args.seed)
        cb = lloyd(pts, args.n, args.r, restarts=args.restarts, seed=args.seed)
        words = enumerate_psi(spec, 1, budget=args.budget)
        points = cb.centers
        title = f"Lloyd codebook, n={args.n}, r={args.r}"
    rects = [rectangle(spec, w) for w in words]
    text = svg_document(rects, points, title=title)
    comment = json.dumps(header(spec, args), sort_keys=True, default=str).replace("--", "- -")
    text = text.replace("<svg ", f"<!-- {comment} -->\n<svg ", 1)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


COMMANDS = {
    "validate": cmd_validate,
    "enumerate": cmd_enumerate,
    "dimension": cmd_dimension,
    "spectrum": cmd_spectrum,
    "antichain": cmd_antichain,
    "quantize": cmd_quantize,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="carpet description (JSON)")
    src.add_argument("--fixture", choices=sorted(fixtures.FIXTURES), help="built-in carpet")
    common.add_argument("--float", dest="force_float", action="store_true", help="use floating-point mode")
    common.add_argument("--r", type=float, default=2.0, help="quantization exponent (default 2)")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="word budget for enumerations")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output file (default stdout)")

    parser = argparse.ArgumentParser(prog="carpet-quant", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check a carpet and print derived constants")

    p = sub.add_parser("enumerate", parents=[common], help="list approximate squares of a level")
    p.add_argument("--level", "-l", type=int, required=True)
    p.add_argument("--count", action="store_true", help="print only the count")

    p = sub.add_parser("dimension", parents=[common], help="quantization dimension s_r")
    p.add_argument("--method", choices=("partition", "closed", "bm"), default="closed")
    p.add_argument("--lmax", type=int, default=12)

    p = sub.add_parser("spectrum", parents=[common], help="L^q spectrum on a grid")
    p.add_argument("--q-grid", required=True, help="a:b:step or comma list")

    family = argparse.ArgumentParser(add_help=False)
    family.add_argument("--n", type=int, required=True)
    family.add_argument("--family", choices=("lambda", "gamma", "bar", "star"), default="lambda")
    family.add_argument("--check", action="store_true", help="run the certification checks")

    sub.add_parser("antichain", parents=[common, family], help="build an anti-chain family")

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--samples", type=int, default=200_000)
    sampling.add_argument("--seed", type=int, default=0)
    sampling.add_argument("--restarts", type=int, default=1)
    sampling.add_argument("--tol", type=float, default=1e-9, help="chaos-game truncation tolerance")

    p = sub.add_parser("quantize", parents=[common, sampling], help="Lloyd error scan over n")
    p.add_argument("--ngrid", type=parse_int_list, default=[2**k for k in range(4, 11)])
    p.add_argument("--summary", help="also write the JSON summary here")

    p = sub.add_parser("render", parents=[common, sampling], help="SVG picture")
    p.add_argument("--what", choices=("squares", "antichain", "codebook"), required=True)
    p.add_argument("--level", "-l", type=int, default=2)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--family", choices=("lambda", "gamma", "bar", "star"), default="lambda")
    p.add_argument("--check", action="store_true", help=argparse.SUPPRESS)
    parser._render = p  # for the required --out check below
    return parser


def _load(args) -> CarpetSpec:
    exact = False if args.force_float else None
    if args.spec:
        return load_spec(args.spec, exact=exact)
    spec = fixtures.get(args.fixture)
    return validate(spec.to_dict(), exact=False) if args.force_float else spec


def _fail(payload: dict, code: int) -> int:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "render" and not args.out:
        parser._render.error("render needs --out FILE.svg")
    try:
        spec = _load(args)
        return COMMANDS[args.command](spec, args)
    except CarpetError as exc:
        return _fail(exc.to_json(), exc.exit_code)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail({"error": type(exc).__name__, "code": "IO", "message": str(exc)}, EXIT_VALIDATION)
    except ValueError as exc:
        return _fail({"error": type(exc).__name__, "code": "VALUE", "message": str(exc)}, EXIT_VALIDATION)
    except (ArithmeticError, FloatingPointError) as exc:
        return _fail({"error": type(exc).__name__, "code": "NUMERIC", "message": str(exc)}, EXIT_NUMERIC)


def run(argv: Sequence[str] | None = None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
