"""Command-line front door: reduce, check, bench, dot, and trace replay.

Exit codes: 0 success, 1 semantic failure (check mismatch or truncated
reduction), 2 usage errors.  All outputs are deterministic for a fixed
input and option set.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import to_dot
from .engine import ReductionOptions, run_reduction
from .grammars import GrammarError, TruncatedReduction, measure_growth
from .oracle import check_equivalence, default_queries
from .terms import ParseError, ProgramError, format_program, normalize_program, parse_program


def _load(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse_program(text)


def _actives(arg: str | None):
    if not arg:
        return None
    return frozenset(p.strip() for p in arg.split(",") if p.strip())


def cmd_reduce(args: argparse.Namespace) -> int:
    program = _load(args.file)
    opts = ReductionOptions(
        max_steps=args.max_steps,
        use_links=not args.no_compile,
        downward_only=args.downward_only,
        keep_snapshots=bool(args.dot),
    )
    state = run_reduction(program, _actives(args.active), opts)
    out = []
    out.append("% final program")
    out.append(format_program(state.program))
    out.append("")
    out.append("% memoization table")
    for e in state.memo:
        out.append(f"%   {e.name}: {e!r}")
    out.append("")
    out.append("% dependency links")
    for l in state.dlinks:
        out.append(f"%   {l!r}")
    for g in state.gaplinks:
        out.append(f"%   {g!r}")
    print("\n".join(out))
    if args.trace:
        lines = [json.dumps({
            "input": args.file,
            "active": sorted(state.active),
            "max_steps": opts.max_steps,
            "use_links": opts.use_links,
            "downward_only": opts.downward_only,
        }, sort_keys=True)]
        lines += [ev.to_json() for ev in state.trace]
        Path(args.trace).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.dot:
        dot_dir = Path(args.dot)
        dot_dir.mkdir(parents=True, exist_ok=True)
        for i, snap in enumerate(state.snapshots):
            links = state.link_snapshots[i] if i < len(state.link_snapshots) else state.dlinks
            gaps = state.gap_snapshots[i] if i < len(state.gap_snapshots) else ()
            (dot_dir / f"step-{i:04d}.dot").write_text(to_dot(snap, links, gaps), encoding="utf-8")
    if state.truncated:
        print("% reduction truncated at the step cap", file=sys.stderr)
        return 1
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    program = _load(args.file)
    normalized = normalize_program(program)
    opts = ReductionOptions(max_steps=args.max_steps, keep_snapshots=True)
    state = run_reduction(program, _actives(args.active), opts)
    queries = default_queries(normalized)
    failures = 0
    for i, snap in enumerate(state.snapshots):
        report = check_equivalence(normalized, snap, queries, depth=args.depth)
        if not report.equal:
            failures += 1
            print(f"state {i}: DISCREPANCY")
            print(report.as_text())
            if args.json:
                print(report.as_json())
    if failures == 0:
        print(f"all queries agree over {len(state.snapshots)} states (depth {args.depth})")
        return 0
    return 1


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        table = measure_growth(args.frontend, range(args.n_min, args.n_max + 1))
    except TruncatedReduction as ex:
        print(f"bench failed: {ex}", file=sys.stderr)
        return 1
    print(table.as_text())
    return 0


def cmd_dot(args: argparse.Namespace) -> int:
    program = _load(args.file)
    state = run_reduction(program, _actives(args.active), ReductionOptions(max_steps=0))
    sys.stdout.write(to_dot(state.program, state.dlinks, state.gaplinks))
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    lines = Path(args.trace).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    program = _load(args.file)
    opts = ReductionOptions(
        max_steps=header["max_steps"],
        use_links=header["use_links"],
        downward_only=header["downward_only"],
    )
    active = frozenset(header["active"]) if header["active"] else None
    state = run_reduction(program, active, opts)
    replayed = [ev.to_json() for ev in state.trace]
    recorded = lines[1:]
    if replayed == recorded:
        print(f"replay OK: {len(replayed)} events match")
        return 0
    print("replay MISMATCH", file=sys.stderr)
    for i, (a, b) in enumerate(zip(recorded, replayed)):
        if a != b:
            print(f"  first difference at event {i}:", file=sys.stderr)
            print(f"    recorded: {a}", file=sys.stderr)
            print(f"    replayed: {b}", file=sys.stderr)
            break
    if len(recorded) != len(replayed):
        print(f"  event counts differ: {len(recorded)} recorded, {len(replayed)} replayed",
              file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depred",
        description="Dependency reduction for Horn-clause programs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="reduce a program and print the final state")
    p.add_argument("file")
    p.add_argument("--active", help="comma-separated predicates to move")
    p.add_argument("--max-steps", type=int, default=10000)
    p.add_argument("--downward-only", action="store_true")
    p.add_argument("--no-compile", action="store_true")
    p.add_argument("--trace", help="write a JSON-lines trace here")
    p.add_argument("--dot", help="write step-NNNN.dot files into this directory")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("check", help="oracle-check reduction states against the input")
    p.add_argument("file")
    p.add_argument("--active", help="comma-separated predicates to move")
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--max-steps", type=int, default=10000)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="growth benchmark over sentence lengths")
    p.add_argument("--frontend", choices=["cfg", "tag"], required=True)
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=8)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dot", help="emit the D-link graph of the compiled program")
    p.add_argument("file")
    p.add_argument("--active", help="comma-separated predicates to move")
    p.set_defaults(func=cmd_dot)

    p = sub.add_parser("replay", help=argparse.SUPPRESS)
    p.add_argument("file")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return 2 if ex.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ParseError, ProgramError, GrammarError, FileNotFoundError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
