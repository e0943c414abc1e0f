"""Command-line entry point.

Exit codes: 0 completed / success, 1 usage or input error, 2 orchestration
exited, 3 max_ticks overrun, 4 fuzz invariant failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import (
    DEFAULT_BOUND,
    classify_safety,
    consistency_verdict,
    export_dot,
    markings_with,
    reachable,
)
from .changes import (
    functional_initial,
    functional_template,
    nonfunctional_initial,
    nonfunctional_template,
)
from .fuzz import fuzz
from .petri import net_to_dict
from .scenario import ScenarioError, load_scenario_file
from .simenv import run

log = logging.getLogger("petrichange")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load(path: str):
    try:
        return load_scenario_file(path)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
    except ScenarioError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
    return None


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    config = _load(args.scenario)
    if config is None:
        return 1
    if args.heartbeat_limit is not None:
        config = replace(config, policy=replace(config.policy, heartbeat_limit=args.heartbeat_limit))
    if args.polling_interval is not None:
        config = replace(config, polling=replace(config.polling, interval_ticks=args.polling_interval))
    trace = run(config)
    sys.stdout.write(trace.text())
    if args.out:
        Path(args.out).write_text(trace.text(), encoding="utf-8")
    return trace.exit_code


def cmd_validate(args) -> int:
    config = _load(args.scenario)
    if config is None:
        return 1
    print(f"ok {config.name}: {len(config.services)} services, "
          f"{len(config.fault_schedule)} faults, {len(config.rules)} rules")
    return 0


def cmd_analyze(args) -> int:
    config = _load(args.scenario)
    if config is None:
        return 1
    net, m0 = config.flat_net(), config.initial()
    rs = reachable(net, m0, args.bound)
    print(f"reachable={len(rs)} truncated={str(rs.truncated).lower()}")
    print(f"consistency={consistency_verdict(net, m0, args.bound)}")
    print(f"safety={classify_safety(net, m0, config.unsafe).value}")
    tpl = reachable(nonfunctional_template(), nonfunctional_initial(), args.bound)
    print(f"template_unsafe={markings_with(nonfunctional_template(), tpl.markings, config.unsafe)}/{len(tpl)}")
    return 0


def cmd_export(args) -> int:
    if args.format not in ("dot", "json"):
        print(f"error: unknown format {args.format!r} (expected dot or json)", file=sys.stderr)
        return 1
    config = _load(args.scenario)
    if config is None:
        return 1
    net = config.flat_net()
    templates = {
        "nonfunctional": (nonfunctional_template(), nonfunctional_initial()),
        "functional": (functional_template(), functional_initial()),
    }
    if args.format == "dot":
        text = export_dot(net, config.initial(), name=config.name)
        if args.templates:
            text += "".join(export_dot(n, m, name=k) for k, (n, m) in templates.items())
    else:
        data = net_to_dict(net)
        if args.templates:
            data = {"process": data, "templates": {k: net_to_dict(n) for k, (n, _) in templates.items()}}
        text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    _write(text, args.out)
    return 0


def cmd_fuzz(args) -> int:
    if args.count < 1:
        print("error: --count must be >= 1", file=sys.stderr)
        return 1
    config = _load(args.scenario)
    if config is None:
        return 1
    failures = fuzz(config, args.count, args.seed)
    if not failures:
        print(f"fuzz ok: {args.count} schedules, seed {args.seed}")
        return 0
    for f in failures:
        print(f"FAIL schedule {f.index} seed={f.seed}", file=sys.stderr)
        for p in f.problems:
            print(f"  {p}", file=sys.stderr)
        print("  reproducer: " + json.dumps([x.to_dict() for x in f.schedule]), file=sys.stderr)
    return 4


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="petrichange", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a scenario and print its trace")
    p.add_argument("scenario")
    p.add_argument("--heartbeat-limit", type=int)
    p.add_argument("--polling-interval", type=int)
    p.add_argument("--out", help="also write the trace here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a scenario document")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="reachability, consistency and safety of the process net")
    p.add_argument("scenario")
    p.add_argument("--bound", type=int, default=DEFAULT_BOUND)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export", help="write the flattened process net as DOT or JSON")
    p.add_argument("scenario")
    p.add_argument("--format", default="dot")
    p.add_argument("--templates", action="store_true", help="include the change templates")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("fuzz", help="random fault schedules against the invariant suite")
    p.add_argument("scenario")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_fuzz)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("PETRICHANGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    for flag in ("heartbeat_limit", "polling_interval", "bound"):
        value = getattr(args, flag, None)
        if value is not None and value < 1:
            print(f"error: --{flag.replace('_', '-')} must be >= 1", file=sys.stderr)
            return 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
