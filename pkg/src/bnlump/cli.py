"""Command-line front end.

Exit codes: 0 holds, 1 fails, 2 inconclusive, 64 input error, 65 budget
exceeded, 70 internal inconsistency.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import checkers as ck
from . import modelfile
from .errors import InternalInconsistency, LumpError, ModelTooLarge
from .lumping import Lumping
from .markov import (
    StochasticMatrix,
    matrix_from_json,
    parse_lumping_spec,
    parse_matrix_text,
    quotient_matrix,
    strong_lumpability,
    weak_lumpability_horizon,
)
from .model import as_fraction, point_mass
from .report import CheckReport, Verdict, jsonable
from .search import enumerate_lumpings, find_d1_counterexample, search_valid_lumpings

EXIT_INPUT = 64
EXIT_BUDGET = 65
EXIT_INTERNAL = 70

PROPERTIES = {
    "d1": lambda net, lump, a: ck.check_d1(net, lump),
    "d2": lambda net, lump, a: ck.check_d2_exact(net, lump, a.grid_budget),
    "d3": lambda net, lump, a: ck.check_d3(net, lump),
    "ks": lambda net, lump, a: ck.check_kemeny_snell(net, lump),
    "depth-one-ks": lambda net, lump, a: ck.check_depth_one_ks_necessity(net, lump),
    "zero-pattern": lambda net, lump, a: ck.check_zero_pattern_d2(net, lump),
    "structured-d1": lambda net, lump, a: ck.check_structured_suff_d1(net, lump),
    "nec-d1": lambda net, lump, a: ck.check_nec_d1(net, lump),
    "bad-vertex": lambda net, lump, a: ck.find_bad_vertices(net, lump),
}


class InputError(Exception):
    pass


def _emit(reports: Sequence[CheckReport], fmt: str, out, summary: Optional[str] = None) -> None:
    if fmt == "json":
        if len(reports) == 1 and summary is None:
            out.write(reports[0].to_json(indent=2) + "\n")
        else:
            doc = {"reports": [r.to_dict() for r in reports]}
            if summary:
                doc["summary"] = summary
            out.write(json.dumps(doc, indent=2) + "\n")
    else:
        out.write("\n\n".join(r.render_text() for r in reports) + "\n")
        if summary:
            out.write(f"\nsummary: {summary}\n")


def _lumping_from_args(mf, spec: Optional[str]) -> Lumping:
    if spec:
        alph = mf.alphabets[mf.dag.vertices[0]]
        if any(mf.alphabets[v] != alph for v in mf.dag.vertices):
            raise InputError("--lumping needs one shared alphabet; use a per-vertex lumping in the model file")
        return Lumping.shared(parse_lumping_spec(spec, alph), mf.dag.vertices)
    if mf.lumping is None:
        raise InputError("no lumping: give --lumping or a 'lumping' section in the model file")
    return mf.lumping


def _worst(verdicts) -> int:
    codes = [v.exit_code for v in verdicts]
    if 1 in codes:
        return 1
    if 2 in codes:
        return 2
    return 0


def cmd_check(args) -> int:
    mf = modelfile.load(args.model)
    lump = _lumping_from_args(mf, args.lumping)
    if args.emit_dot:
        Path(args.emit_dot).write_text(mf.dag.to_dot())
    if args.property == "all":
        reports = ck.check_all(mf.net, lump, grid_budget=args.grid_budget)
        core = [reports[k] for k in ("D1", "D2", "D3")]
        summary = ("implications D3 => D2 => D1 consistent; "
                   + ", ".join(f"{r.property}={r.verdict.value}" for r in core))
        _emit(list(reports.values()), args.format, sys.stdout, summary)
        return _worst(r.verdict for r in core)
    rep = PROPERTIES[args.property](mf.net, lump, args)
    _emit([rep], args.format, sys.stdout)
    return rep.verdict.exit_code


def cmd_search(args) -> int:
    mf = modelfile.load(args.model)
    net = mf.net
    count = 0
    if args.property == "none":
        for i, lump in enumerate(enumerate_lumpings(net, args.shared, args.max_classes, args.include_trivial,
                                                    args.max_candidates)):
            print(json.dumps({"index": i, "lumping": _describe(lump), "seed": args.seed}))
            count += 1
    else:
        found = search_valid_lumpings(net, args.property.upper(), args.shared, args.max_classes,
                                      args.include_trivial, args.max_candidates)
        for i, (lump, rep) in enumerate(found):
            print(json.dumps({"index": i, "lumping": _describe(lump), "report": rep.to_dict(),
                              "seed": args.seed}))
            count += 1
    print(json.dumps({"summary": {"property": args.property, "count": count}}))
    return 0


def _describe(lump: Lumping) -> dict:
    first = lump.vertices[0]
    if all(lump.map(v) == lump.map(first) for v in lump.vertices):
        return {"shared": [list(c) for c in lump.classes(first)]}
    return {v: [list(c) for c in lump.classes(v)] for v in lump.vertices}


def _load_matrix(path: str) -> tuple[StochasticMatrix, dict]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        doc = json.loads(text)
        if isinstance(doc, dict) and "dag" in doc:
            mf = modelfile.load(doc, require_cpds=False)
            if "matrix" not in mf.markov:
                raise InputError("model file has no markov.matrix section")
            return mf.markov["matrix"], mf.markov
        return matrix_from_json(doc), {}
    return parse_matrix_text(text), {}


def _parse_initial(spec: str, states) -> list:
    if spec in states:
        return list(point_mass(states, spec))
    parts = [s for s in spec.replace(",", " ").split() if s]
    return [as_fraction(x) for x in parts]


def cmd_markov(args) -> int:
    p, extra = _load_matrix(args.matrix)
    lumping = args.lumping or extra.get("lumping")
    if not lumping:
        raise InputError("no lumping: give --lumping, e.g. 'a1,a2|a3'")
    m = parse_lumping_spec(lumping, p.states)
    if args.mode == "strong":
        rep = strong_lumpability(p, m)
        _emit([rep], args.format, sys.stdout)
        if rep.holds and args.format == "text":
            print("quotient matrix:")
            print("\n".join("  " + line for line in quotient_matrix(rep).to_text().splitlines()))
        return rep.verdict.exit_code
    if args.initial is not None:
        initial = _parse_initial(args.initial, p.states)
    elif "initial" in extra:
        initial = extra["initial"]
    else:
        raise InputError("weak mode needs --initial (a state name or a probability vector)")
    horizon = args.horizon or extra.get("horizon")
    if not horizon:
        raise InputError("weak mode needs --horizon")
    rep = weak_lumpability_horizon(p, initial, m, horizon)
    _emit([rep], args.format, sys.stdout)
    if args.format == "text":
        print(f"NHDTMC up to horizon {horizon}: {'yes' if rep.details['nhdtmc'] else 'no'}")
        print(f"DTMC: {'yes' if rep.details['dtmc'] else 'no'}")
    return rep.verdict.exit_code


def cmd_witness(args) -> int:
    mf = modelfile.load(args.dag_file, require_cpds=False)
    lump = _lumping_from_args(mf, args.lumping)
    found = find_d1_counterexample(mf.dag, lump, args.attempts, args.seed, args.max_denominator)
    if found is None:
        print(json.dumps({"result": "none", "attempts": args.attempts, "seed": args.seed}))
        return Verdict.INCONCLUSIVE.exit_code
    net, rep = found
    doc = modelfile.dump(net, lump, description=f"D1 counterexample (seed {args.seed}, attempt "
                                                  f"{rep.details['attempt']})")
    text = json.dumps(doc, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
        print(json.dumps({"result": "found", "output": args.output, "witness": jsonable(rep.witness)}))
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bnlump", description="Exact lumpability checks for Bayesian networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="decide D1/D2/D3 and related conditions for a model file")
    c.add_argument("model")
    c.add_argument("--property", default="all", choices=sorted(PROPERTIES) + ["all"])
    c.add_argument("--lumping", help="shared lumping as blocks, e.g. 'a1,a2|a3' (overrides the file)")
    c.add_argument("--format", choices=["text", "json"], default="text")
    c.add_argument("--emit-dot", metavar="FILE", help="also write the DAG in DOT format")
    c.add_argument("--grid-budget", type=int, default=ck.DEFAULT_GRID_BUDGET)
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("search", help="enumerate lumpings (optionally those satisfying a property)")
    s.add_argument("model")
    s.add_argument("--property", default="none", choices=["none", "d1", "d2", "d3", "ks"])
    grp = s.add_mutually_exclusive_group()
    grp.add_argument("--shared", dest="shared", action="store_true", default=True)
    grp.add_argument("--per-vertex", dest="shared", action="store_false")
    s.add_argument("--seed", type=int, default=0, help="recorded in the output; enumeration is deterministic")
    s.add_argument("--max-classes", type=int)
    s.add_argument("--max-candidates", type=int, default=10_000)
    s.add_argument("--include-trivial", action="store_true")
    s.set_defaults(func=cmd_search)

    m = sub.add_parser("markov", help="strong or finite-horizon weak lumpability of a Markov chain")
    m.add_argument("matrix", help="JSON matrix, model file with a markov section, or whitespace text matrix")
    m.add_argument("--mode", choices=["strong", "weak"], default="weak")
    m.add_argument("--initial", help="start state name or probability vector 'p1,p2,...'")
    m.add_argument("--horizon", type=int)
    m.add_argument("--lumping", help="blocks, e.g. 'a1,a2|a3'")
    m.add_argument("--format", choices=["text", "json"], default="text")
    m.set_defaults(func=cmd_markov)

    w = sub.add_parser("witness", help="search a random net on a DAG whose lumping violates D1")
    w.add_argument("dag_file", help="model file with states and dag (cpds optional)")
    w.add_argument("--lumping", help="blocks, e.g. 'a1,a2'")
    w.add_argument("--attempts", type=int, default=1000)
    w.add_argument("--seed", type=int, required=True)
    w.add_argument("--max-denominator", type=int, default=12)
    w.add_argument("--output", "-o")
    w.set_defaults(func=cmd_witness)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InternalInconsistency as exc:
        print(f"internal inconsistency: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ModelTooLarge as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, LumpError, json.JSONDecodeError, ValueError) as exc:
        kind = type(exc).__name__
        print(f"input error ({kind}): {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
