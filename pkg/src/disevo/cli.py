"""Command line front end: ``disevo analyze|evolve|dof|verify``.

Exit codes: 0 ok, 1 usage or parse error (and failed verification),
2 inconsistent dynamics, 3 data off the constraint surface, 4 missing
free parameters.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from typing import Sequence

from . import kernel as K
from .action import Slice
from .analysis import VerificationFailed, classify, counting_formulas, reduced_dimension
from .evolution import EvolutionMap, Inconsistent, MissingParameter, match_and_propagate
from .legendre import AffineConstraint, ConstraintSet, OffConstraintSurface, PhasePoint
from .local_moves import initial_state, momentum_update
from .models import Scenario, ScenarioError, load_scenario, pachner_move, run_pachner_sequence
from .verify import SUITES, run_suites

log = logging.getLogger("disevo")

EXIT_OK, EXIT_USAGE, EXIT_INCONSISTENT, EXIT_OFF_SURFACE, EXIT_MISSING = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- serialization -------------------------------------------------------------

def _vec(values) -> list:
    return [K.format_scalar(v) for v in values]


def encode_constraint(c: AffineConstraint) -> dict:
    return {
        "gx": _vec(c.gx), "gp": _vec(c.gp), "c0": K.format_scalar(c.c0),
        "tag": c.tag, "provenance": c.provenance, "origin": c.origin,
        "text": c.describe(),
    }


def decode_constraint(doc: dict, slc: Slice) -> AffineConstraint:
    """Inverse of :func:`encode_constraint` in the current arithmetic."""
    return AffineConstraint(slc, doc["gx"], doc["gp"], doc["c0"], doc["tag"], doc["provenance"], doc.get("origin", ""))


def _encode_set(cset: ConstraintSet) -> list[dict]:
    return [encode_constraint(c) for c in cset]


def encode_point(pt: PhasePoint) -> dict:
    return {"step": pt.slice.step, "labels": list(pt.slice.labels), "x": _vec(pt.x), "p": _vec(pt.p), "tag": pt.tag}


def _slice_entry(sr) -> dict:
    rep = classify(sr.combined)
    return {
        "step": sr.index,
        "labels": list(sr.slice.labels),
        "status": sr.status,
        "cases": list(sr.cases),
        "dirac_rank": sr.dirac_rank,
        "pre": _encode_set(sr.pre),
        "post": _encode_set(sr.post),
        "combined": _encode_set(sr.combined),
        "classification": {
            "first_class": rep.n_first,
            "second_class": rep.n_second,
            "gauge_generators": [encode_constraint(g) for g in rep.gauge_generators],
        },
    }


# -- commands ----------------------------------------------------------------------

def cmd_analyze(sc: Scenario, args) -> dict:
    out: dict = {"command": "analyze", "scenario": sc.name, "mode": K.get_mode()}
    if sc.slabs:
        report = match_and_propagate(sc.schedule())
        out["sweeps"] = report.sweeps
        out["slices"] = [_slice_entry(sr) for sr in report.slices]
    if sc.moves:
        run = run_pachner_sequence(sc.initial_surface(), sc.moves)
        out["local"] = {
            "moves": [m.name for m in run.moves],
            "post_constraint_counts": run.counts,
            "live_counts": run.live_counts,
            "surfaces": [list(s) for s in run.surfaces],
        }
    return out


def _initial_data(sc: Scenario, args, labels: Sequence[str]):
    init = dict(sc.initial)
    if args.x is not None:
        init["x"] = args.x.split(",") if args.x else []
    if args.p is not None:
        init["p"] = args.p.split(",") if args.p else []
    n = len(labels)
    x = init.get("x", [0] * n)
    p = init.get("p", [0] * n)
    if len(x) != n or len(p) != n:
        raise ScenarioError(f"initial data: expected {n} values for x and p, got {len(x)} and {len(p)}")
    return K.as_vector(x, n), K.as_vector(p, n)


def _parameters(sc: Scenario, args) -> dict[str, list]:
    params = {str(k): (v if isinstance(v, list) else [v]) for k, v in sc.parameters.items()}
    for item in args.param or []:
        key, _, vals = item.partition("=")
        if not _:
            raise ScenarioError(f"--param {item!r}: expected MOVE=v1,v2,...")
        params[key.strip()] = [v for v in vals.split(",") if v.strip()]
    return params


def cmd_evolve(sc: Scenario, args) -> dict:
    params = _parameters(sc, args)
    trace = []
    used = {}
    if sc.slabs:
        sched = sc.schedule()
        x, p = _initial_data(sc, args, sched.slices[0].labels)
        pt = PhasePoint(sched.slices[0], x, p, "pre")
        trace.append(encode_point(pt))
        for n, S in enumerate(sched.moves, start=1):
            emap = EvolutionMap.from_action(S)
            lam = params.get(str(n))
            pt = emap.forward(pt, lam, strict=args.strict)
            used[str(n)] = lam if lam is not None else [0] * len(emap.free_directions)
            trace.append(encode_point(pt))
    if sc.moves:
        surface = sc.initial_surface()
        if sc.slabs:
            state = initial_state(surface, pt.x, pt.p, step=0)
        else:
            x, p = _initial_data(sc, args, surface)
            state = initial_state(surface, x, p, step=0)
        trace_local = [encode_point(state.point)]
        for k, (kind, pos) in enumerate(sc.moves, start=1):
            spec = pachner_move(kind, surface, pos, taken=state.labels)
            lam = params.get(f"local{k}")
            state = momentum_update(spec, state, lam, strict=args.strict)
            surface = spec.surface_after
            trace_local.append(encode_point(state.point))
        trace.extend(trace_local)
    return {"command": "evolve", "scenario": sc.name, "mode": K.get_mode(), "parameters": used, "trace": trace}


def _dof_queries(sc: Scenario, args) -> list[dict]:
    if args.i is not None or args.f is not None:
        if args.i is None or args.f is None:
            raise ScenarioError("dof needs both --i and --f")
        q = {"i": args.i, "f": args.f}
        if args.n is not None:
            q["n"] = args.n
        return [q]
    raw = sc.queries.get("dof")
    if raw is None:
        return [{"i": 0, "f": len(sc.slabs)}]
    return raw if isinstance(raw, list) else [raw]


def cmd_dof(sc: Scenario, args) -> dict:
    sched = sc.schedule()
    results = []
    for q in _dof_queries(sc, args):
        i, f = int(q["i"]), int(q["f"])
        a, b = counting_formulas(sched, i, f)
        if a != b:
            raise VerificationFailed(f"counting formulas disagree for {i}->{f}: {a} vs {b}")
        entry = {"i": i, "f": f, "from_initial": a, "from_final": b, "propagating": a}
        if q.get("n") is not None:
            entry["n"] = int(q["n"])
            entry["reduced_dimension"] = reduced_dimension(sched, i, int(q["n"]), f)
        results.append(entry)
    return {"command": "dof", "scenario": sc.name, "mode": K.get_mode(), "queries": results}


def cmd_verify(args) -> dict:
    names = args.suite or list(SUITES)
    results = run_suites(names, seed=args.seed, count=args.count)
    return {
        "command": "verify", "mode": K.get_mode(), "seed": args.seed, "count": args.count,
        "suites": [
            {"suite": r.name, "trials": r.trials, "passed": r.passed, "failures": r.failures}
            for r in results
        ],
    }


# -- output ------------------------------------------------------------------------

def _csv_rows(report: dict) -> tuple[list[str], list[list]]:
    cmd = report["command"]
    if cmd == "analyze":
        head = ["step", "q", "pre", "post", "combined", "status", "dirac_rank", "first_class", "second_class"]
        rows = [
            [s["step"], len(s["labels"]), len(s["pre"]), len(s["post"]), len(s["combined"]), s["status"],
             s["dirac_rank"], s["classification"]["first_class"], s["classification"]["second_class"]]
            for s in report.get("slices", [])
        ]
        if "local" in report:
            for k, (n, live) in enumerate(zip(report["local"]["post_constraint_counts"], report["local"]["live_counts"])):
                rows.append([f"local{k}", "", "", n, live, "", "", "", ""])
        return head, rows
    if cmd == "evolve":
        head = ["step", "label", "x", "p"]
        rows = [[pt["step"], lab, x, p] for pt in report["trace"] for lab, x, p in zip(pt["labels"], pt["x"], pt["p"])]
        return head, rows
    if cmd == "dof":
        head = ["i", "n", "f", "from_initial", "from_final", "reduced_dimension"]
        rows = [[q["i"], q.get("n", ""), q["f"], q["from_initial"], q["from_final"], q.get("reduced_dimension", "")]
                for q in report["queries"]]
        return head, rows
    head = ["suite", "trials", "failures", "passed"]
    return head, [[s["suite"], s["trials"], len(s["failures"]), s["passed"]] for s in report["suites"]]


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, ensure_ascii=False)
    buf = io.StringIO()
    head, rows = _csv_rows(report)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(rows)
    return buf.getvalue().rstrip("\n")


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=["exact", "float"], default=None,
                        help="arithmetic mode (DISEVO_MODE overrides)")
    common.add_argument("--tol", type=float, default=None, help="zero tolerance in float mode")
    common.add_argument("--strict", action="store_true", help="require explicit free parameters")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="disevo", description="Canonical analysis of quadratic discrete actions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="constraints per slice")
    p.add_argument("scenario", help="scenario file or fixture name")

    p = sub.add_parser("evolve", parents=[common], help="evolve initial data through the schedule")
    p.add_argument("scenario")
    p.add_argument("--x", default=None, help="comma separated initial configuration")
    p.add_argument("--p", default=None, help="comma separated initial momenta")
    p.add_argument("--param", action="append", metavar="MOVE=v1,v2",
                   help="free parameter values for a move (1-based; local moves as localK)")

    p = sub.add_parser("dof", parents=[common], help="propagating and reduced dimensions")
    p.add_argument("scenario")
    p.add_argument("--i", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--f", type=int, default=None)

    p = sub.add_parser("verify", parents=[common], help="run the randomized invariant suites")
    p.add_argument("--suite", action="append", choices=list(SUITES))
    p.add_argument("--count", type=int, default=100)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        sc = load_scenario(args.scenario) if args.command != "verify" else None
        mode = K.mode_from_env(args.mode or (sc.mode if sc else "exact"))
        if mode not in ("exact", "float"):
            raise ScenarioError(f"DISEVO_MODE: unknown mode {mode!r}")
        with K.arithmetic(mode, args.tol):
            if args.command == "analyze":
                report = cmd_analyze(sc, args)
            elif args.command == "evolve":
                report = cmd_evolve(sc, args)
            elif args.command == "dof":
                report = cmd_dof(sc, args)
            else:
                report = cmd_verify(args)
            text = render(report, args.format)
    except (ScenarioError, ValueError) as exc:
        if isinstance(exc, (OffConstraintSurface, MissingParameter)):
            return _fail_data(exc)
        print(f"disevo: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Inconsistent as exc:
        print(f"disevo: inconsistent dynamics at slice {exc.slice_index}: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except VerificationFailed as exc:
        print(f"disevo: internal check failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(text)
    if args.command == "verify" and not all(s["passed"] for s in report["suites"]):
        for s in report["suites"]:
            if not s["passed"]:
                print(f"disevo: invariant violated: {s['suite']} ({len(s['failures'])} failures)", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def _fail_data(exc) -> int:
    if isinstance(exc, MissingParameter):
        print(f"disevo: missing free parameters: {exc}", file=sys.stderr)
        return EXIT_MISSING
    res = ", ".join(str(K.format_scalar(r)) for r in exc.residuals)
    print(f"disevo: data off the constraint surface: {exc} (residuals: {res})", file=sys.stderr)
    return EXIT_OFF_SURFACE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
