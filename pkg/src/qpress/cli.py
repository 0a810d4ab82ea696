"""Command-line entry point: ``qpress <command> [options]``.

Reports go to ``--out`` (stdout by default) as CSV or JSON. Failures print a
one-line JSON object on stderr and exit with 2 (configuration), 3 (capacity)
or 4 (numerics).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .errors import QPressError, UsageError
from .models import cw_pressure_closed, cw_solution, cwp_beta_c, cwp_limit_cylinder, cwp_regime, cwp_solution
from .oracle import CSV_HEADER, convergence_report, cwp_convergence_report
from .quadratic import limit_measure, solve_quadratic
from .symbolic import CW_ALPHABET, all_words, dump_potential, parse_potential_spec, potts_alphabet
from .transfer import pressure_grid

DEFAULT_FORMAT = {"pressure": "csv", "verify": "csv", "sweep": "csv"}


# --- formatting ---------------------------------------------------------------


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def to_json(obj, indent: int = 2, level: int = 0) -> str:
    """JSON with every float rendered to 17 significant digits."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    return json.dumps(str(obj))


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return str(v)


def to_csv(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_cell(r[k]) for k in header))
    return "\n".join(lines) + "\n"


def emit_report(report: dict, fmt: str, out: str | None) -> None:
    """Write ``report`` (``meta``, ``header``, ``rows`` plus extra keys) as CSV or JSON."""
    if fmt == "csv":
        text = to_csv(report["header"], report["rows"])
    else:
        doc = {k: v for k, v in report.items() if k != "header"}
        text = to_json(doc) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(out, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise QPressError(f"cannot write report to {out}: {exc.strerror}") from None


# --- argument helpers ---------------------------------------------------------------


def parse_range(text: str) -> np.ndarray:
    try:
        a, b, steps = text.split(":")
        a, b, steps = float(a), float(b), int(steps)
    except ValueError:
        raise UsageError(f"range must look like start:stop:steps, got {text!r}") from None
    if steps < 1:
        raise UsageError("range needs at least one step")
    return np.linspace(a, b, steps)


def parse_schedule(text: str) -> list[int]:
    try:
        ns = [int(float(s)) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--n must be a comma separated list of integers, got {text!r}") from None
    if not ns or min(ns) < 1:
        raise UsageError("--n needs positive integers")
    return ns


def _beta(args) -> float:
    if args.beta is None:
        raise UsageError("--beta is required")
    if not args.beta > 0:
        raise UsageError(f"beta must be positive, got {args.beta}")
    return args.beta


def _potential(args):
    pot = parse_potential_spec(args.potential)
    if getattr(args, "dump_potential", None):
        dump_potential(pot, args.dump_potential)
    return pot


def _cylinders(alphabet, texts, default_length):
    if not texts:
        return [tuple(w) for w in all_words(alphabet.q, default_length)]
    return [alphabet.parse(t) for t in texts]


def _meta(args, beta):
    return {
        "command": args.command,
        "potential": getattr(args, "potential", None) or (f"cwp:{args.q}" if getattr(args, "q", None) else None),
        "beta": beta,
        "version": __version__,
    }


def _quad_kwargs(args):
    kw = {"tol_sep": args.tol_sep, "threshold": args.tol_order}
    if args.tol_value is not None:
        kw["tol_value"] = args.tol_value
    return kw


# --- commands ------------------------------------------------------------------------


def cmd_pressure(args):
    pot = _potential(args)
    ts = parse_range(args.t_range)
    P = pressure_grid(pot, ts)
    rows = [{"t": float(t), "pressure": float(p)} for t, p in zip(ts, P)]
    return {"meta": _meta(args, None), "header": ("t", "pressure"), "rows": rows}


def cmd_quadratic(args):
    pot = _potential(args)
    beta = _beta(args)
    sol = solve_quadratic(pot, beta, **_quad_kwargs(args))
    limit = limit_measure(sol)
    cylinders = _cylinders(pot.alphabet, args.cylinder, 2)
    maxima = [{"t": t, "k": k, "c": c} for t, k, c in zip(sol.t_list, sol.k_list, sol.c_list)]
    table = [{"cylinder": pot.alphabet.render(w), "prob": limit(w)} for w in cylinders]
    rows = [dict(beta=sol.beta, P2=sol.P2, **m) for m in maxima]
    return {
        "meta": _meta(args, beta),
        "beta": sol.beta,
        "P2": sol.P2,
        "t": list(sol.t_list),
        "c": list(sol.c_list),
        "maxima": maxima,
        "limit": table,
        "header": ("beta", "P2", "t", "k", "c"),
        "rows": rows,
    }


def cmd_cw(args):
    beta = _beta(args)
    sol = cw_solution(beta)
    P2 = cw_pressure_closed(beta * sol.xi) - 0.5 * beta * sol.xi**2
    cylinders = _cylinders(CW_ALPHABET, args.cylinder, 2)
    rows = [{"cylinder": CW_ALPHABET.render(w), "prob": sol.limit(w)} for w in cylinders]
    return {
        "meta": _meta(args, beta),
        "beta": beta,
        "xi": sol.xi,
        "p_plus": sol.p_plus,
        "P2": P2,
        "header": ("cylinder", "prob"),
        "rows": rows,
    }


def _reject_critical(q, beta):
    # the critical branch is measure zero; only an explicit flag selects it
    if cwp_regime(q, beta) == "critical":
        raise UsageError(f"beta={beta!r} is at the critical point of q={q}; pass --at-critical to use that branch")


def cmd_cwp(args):
    if args.q is None:
        raise UsageError("--q is required")
    if args.q == 2:
        report = cmd_cw(args)
        report["note"] = "q=2 is the Curie-Weiss model; reported with the Curie-Weiss closed form"
        return report
    if args.at_critical:
        beta = cwp_beta_c(args.q)
    else:
        beta = _beta(args)
        _reject_critical(args.q, beta)
    sol = cwp_solution(args.q, beta)
    alphabet = potts_alphabet(args.q)
    cylinders = _cylinders(alphabet, args.cylinder, 1)
    rows = [{"cylinder": alphabet.render(w), "prob": cwp_limit_cylinder(args.q, beta, w)} for w in cylinders]
    return {
        "meta": _meta(args, beta),
        "q": args.q,
        "beta": sol.beta,
        "beta_c": sol.beta_c,
        "regime": sol.regime,
        "s": sol.s,
        "A": sol.A_w,
        "B": sol.B_w,
        "header": ("cylinder", "prob"),
        "rows": rows,
    }


def _verify_one(job):
    kind, payload, beta, cylinders, n, method = job
    if kind == "cwp":
        return cwp_convergence_report(payload, beta, cylinders, [n]).rows
    pot = parse_potential_spec(payload)
    return convergence_report(pot, beta, cylinders, [n], method=method).rows


def _pool_map(fn, jobs, n_jobs):
    if n_jobs and n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, jobs))  # map keeps input order
    return [fn(j) for j in jobs]


def cmd_verify(args):
    ns = parse_schedule(args.n)
    if args.potential is None:
        if args.q is None:
            raise UsageError("verify needs --potential or --q (Curie-Weiss-Potts)")
        if args.method not in (None, "collapse"):
            raise UsageError("the Potts model is verified with the collapse method only")
        if args.at_critical:
            beta = cwp_beta_c(args.q)
        else:
            beta = _beta(args)
            _reject_critical(args.q, beta)
        cylinders = _cylinders(potts_alphabet(args.q), args.cylinder, 1)
        jobs = [("cwp", args.q, beta, cylinders, n, None) for n in ns]
    else:
        pot = _potential(args)
        beta = _beta(args)
        cylinders = _cylinders(pot.alphabet, args.cylinder, 2)
        method = args.method
        if method == "collapse":
            method = "cw_collapse"
        jobs = [("pot", args.potential, beta, cylinders, n, method) for n in ns]
    rows = [r for chunk in _pool_map(_verify_one, jobs, args.jobs) for r in chunk]
    return {"meta": _meta(args, beta), "header": CSV_HEADER, "rows": rows}


def _sweep_one(job):
    spec, beta, kw = job
    sol = solve_quadratic(parse_potential_spec(spec), beta, **kw)
    return {"beta": float(beta), "J": sol.J, "t": [float(t) for t in sol.t_list], "P2": sol.P2}


def cmd_sweep(args):
    _potential(args)
    if args.beta_range is None:
        raise UsageError("--beta-range is required")
    betas = parse_range(args.beta_range)
    if np.any(betas <= 0):
        raise UsageError("every beta in the range must be positive")
    jobs = [(args.potential, float(b), _quad_kwargs(args)) for b in betas]
    rows = _pool_map(_sweep_one, jobs, args.jobs)
    return {"meta": _meta(args, args.beta_range), "header": ("beta", "J", "t", "P2"), "rows": rows}


COMMANDS = {
    "pressure": cmd_pressure,
    "quadratic": cmd_quadratic,
    "cw": cmd_cw,
    "cwp": cmd_cwp,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qpress", description="Quadratic pressure and Curie-Weiss type Gibbs limits.")
    parser.add_argument("--version", action="version", version=f"qpress {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    common = _Parser(add_help=False)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--cylinder", action="append", help="cylinder as concatenated labels (repeatable)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for verify/sweep")
    common.add_argument("--tol-value", type=float, help="value tolerance for ties between maxima")
    common.add_argument("--tol-sep", type=float, default=1e-6, help="minimum separation of distinct maxima")
    common.add_argument("--tol-order", type=float, default=1e-6, help="threshold on even derivatives")
    common.add_argument("--dump-potential", metavar="PATH", help="write the resolved potential as JSON")

    pot = _Parser(add_help=False)
    pot.add_argument("--potential", help="cw, potts:q:k, random:q:m:seed or a JSON file")

    beta = _Parser(add_help=False)
    beta.add_argument("--beta", type=float)

    p = sub.add_parser("pressure", parents=[common, pot], help="pressure curve P(t psi)")
    p.add_argument("--t-range", default="-3:3:61", help="start:stop:steps")
    sub.add_parser("quadratic", parents=[common, pot, beta], help="maxima, weights and the limit measure")
    sub.add_parser("cw", parents=[common, beta], help="closed-form Curie-Weiss solution")
    p = sub.add_parser("cwp", parents=[common, beta], help="closed-form Curie-Weiss-Potts solution")
    p.add_argument("--q", type=int)
    p.add_argument("--at-critical", action="store_true", help="evaluate exactly at the critical beta")
    p = sub.add_parser("verify", parents=[common, pot, beta], help="oracle values against the predicted limit")
    p.add_argument("--n", default="100,1000", help="comma separated n schedule")
    p.add_argument("--method", choices=("exact", "collapse", "quadrature"))
    p.add_argument("--q", type=int, help="verify the Curie-Weiss-Potts model instead of a potential")
    p.add_argument("--at-critical", action="store_true")
    p = sub.add_parser("sweep", parents=[common, pot], help="phase diagram over a beta range")
    p.add_argument("--beta-range", help="start:stop:steps")
    return parser


# options whose values may start with "-" (CW cylinders, negative ranges)
DASH_VALUED = ("--cylinder", "--t-range", "--beta-range", "--beta")


def _glue_dash_values(argv):
    out, it = [], iter(argv)
    for tok in it:
        if tok in DASH_VALUED:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_glue_dash_values(argv))
        if getattr(args, "potential", None) is None and args.command in ("pressure", "quadratic", "sweep"):
            raise UsageError("--potential is required")
        report = COMMANDS[args.command](args)
        emit_report(report, args.format or DEFAULT_FORMAT.get(args.command, "json"), args.out)
    except QPressError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        residual = getattr(exc, "residual", None)
        if residual is not None:
            err["residual"] = float(residual)
        sys.stderr.write(json.dumps(err) + "\n")
        return exc.exit_code
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
