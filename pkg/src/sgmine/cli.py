"""Command line entry points: mine, serve, synth, bench, detail.

Data paths resolve against $SGMINE_DATA_DIR when not found locally. Exit code
0 on success, 1 on runtime errors (diagnostics on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Optional

from .data import DataError, SchemaError
from .model import ModelError
from .search import SearchParams
from .session import (
    DatasetRef,
    Session,
    SessionError,
    assimilate_choice,
    load_session,
    mine_next,
    pattern_detail,
    save_session,
    session_to_dict,
)

DATA_DIR_ENV = "SGMINE_DATA_DIR"


def resolve_data_path(raw: str) -> Path:
    path = Path(raw)
    if path.exists():
        return path
    base = os.environ.get(DATA_DIR_ENV)
    if base and not path.is_absolute():
        candidate = Path(base) / raw
        if candidate.exists():
            return candidate
    return path


def _dataset_ref(args: argparse.Namespace) -> DatasetRef:
    if args.data is None:
        return DatasetRef("synthetic", seed=args.seed)
    path = resolve_data_path(args.data)
    if args.schema:
        with open(resolve_data_path(args.schema), encoding="utf-8") as fh:
            config = json.load(fh)
    else:
        if not args.targets:
            raise SessionError("either --schema or --targets is required for CSV data")
        config = {"targets": [t.strip() for t in args.targets.split(",") if t.strip()]}
        if args.descriptors:
            config["descriptors"] = [d.strip() for d in args.descriptors.split(",") if d.strip()]
    return DatasetRef("csv", path=str(path), schema_config=config)


def _search_params(args: argparse.Namespace) -> SearchParams:
    return SearchParams(
        beam_width=args.beam_width,
        max_depth=args.max_depth,
        num_split_points=args.split_points,
        top_log=args.top_log,
        time_limit=args.time_limit,
        min_coverage=args.min_coverage,
    )


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beam-width", type=int, default=40)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--split-points", type=int, default=4)
    p.add_argument("--top-log", type=int, default=150)
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--min-coverage", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="CSV path; omit for the built-in synthetic benchmark")
    p.add_argument("--schema", help="JSON schema configuration path")
    p.add_argument("--targets", help="comma-separated target column names")
    p.add_argument("--descriptors", help="comma-separated descriptor column names")


def _auto_iterations(session: Session, args: argparse.Namespace) -> list[dict]:
    """Accept the top-ranked pattern each iteration; with kind spread/both,
    follow each location with a spread pattern for the same subgroup."""
    params = _search_params(args)
    want_spread = args.kind in ("spread", "both")
    report = []
    for _ in range(args.iterations):
        candidates = mine_next(session, "location", params)
        seen = set(session.assimilated)
        fresh = [c for c in candidates if c.id not in seen]
        if not fresh:
            print("no unassimilated candidates remain; stopping early", file=sys.stderr)
            break
        top = fresh[0]
        timing = assimilate_choice(session, top.id)
        report.append(_report_entry(session, top, timing))
        if want_spread:
            spread_candidates = mine_next(session, "spread", params, two_sparse=args.two_sparse)
            spread_top = spread_candidates[0]
            timing = assimilate_choice(session, spread_top.id)
            report.append(_report_entry(session, spread_top, timing))
    return report


def _report_entry(session: Session, record, timing) -> dict:
    pattern = record.pattern
    entry = {
        "iteration": session.iteration,
        "kind": record.kind,
        "id": record.id,
        "description": pattern.intention.describe(session.dataset),
        "coverage": len(pattern.extension),
        "score": {"ic": record.score.ic, "dl": record.score.dl, "si": record.score.si},
        "update_seconds": timing.seconds,
        "update_rounds": timing.rounds,
    }
    if record.kind == "location":
        entry["mean"] = [float(v) for v in pattern.mean]
    else:
        entry["direction"] = [float(v) for v in pattern.direction]
        entry["variance"] = float(pattern.variance)
    return entry


def cmd_mine(args: argparse.Namespace) -> int:
    session = Session.create(_dataset_ref(args), gamma=args.gamma, eta=args.eta, seed=args.seed)
    report = _auto_iterations(session, args)
    for entry in report:
        score = entry["score"]
        print(
            f"[{entry['iteration']:>2}] {entry['kind']:<8} si={score['si']:8.3f} "
            f"ic={score['ic']:9.3f} dl={score['dl']:.2f} cover={entry['coverage']:>5}  "
            f"{entry['description']}"
        )
    payload = {
        "params": {
            "gamma": args.gamma,
            "eta": args.eta,
            "seed": args.seed,
            "iterations": args.iterations,
            "kind": args.kind,
        },
        "iterations": report,
    }
    if args.report:
        Path(args.report).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
        print(f"report written to {args.report}")
    if args.save_session:
        save_session(session, args.save_session)
        print(f"session written to {args.save_session}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    from .data import flip_noise, generate_synthetic, write_csv

    data = generate_synthetic(args.seed)
    if args.flip > 0.0:
        data = flip_noise(data, args.flip, args.flip_seed)
    write_csv(data, args.out)
    print(f"wrote {data.n} rows to {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(port=args.port, host=args.host, ui_dir=args.ui_dir)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    session = Session.create(_dataset_ref(args), gamma=args.gamma, eta=args.eta, seed=args.seed)
    _auto_iterations(session, args)
    rows = [("iteration", "kind", "seconds", "rounds")]
    rows.extend(
        (str(t.iteration), t.kind, repr(t.seconds), str(t.rounds)) for t in session.timings
    )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        print(f"timings written to {args.out}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerows(rows)
    return 0


def cmd_detail(args: argparse.Namespace) -> int:
    from dataclasses import asdict

    session = load_session(args.session)
    detail = pattern_detail(session, args.pattern)
    print(json.dumps(asdict(detail), sort_keys=True, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgmine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="iteratively mine and assimilate the top pattern")
    _add_data_flags(p)
    _add_search_flags(p)
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--kind", choices=("location", "spread", "both"), default="location")
    p.add_argument("--two-sparse", action="store_true", help="restrict spread directions to attribute pairs")
    p.add_argument("--report", help="write the iteration report as JSON")
    p.add_argument("--save-session", help="write the final session state as JSON")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("synth", help="write the synthetic benchmark dataset as CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flip", type=float, default=0.0, help="binary descriptor noise probability")
    p.add_argument("--flip-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", help="directory of static UI assets to serve")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="time model updates over auto-accepted iterations")
    _add_data_flags(p)
    _add_search_flags(p)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--kind", choices=("location", "spread", "both"), default="location")
    p.add_argument("--two-sparse", action="store_true")
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("detail", help="print the detail view of a pattern in a saved session")
    p.add_argument("--session", required=True)
    p.add_argument("--pattern", required=True)
    p.set_defaults(func=cmd_detail)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SessionError, SchemaError, DataError, ModelError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
