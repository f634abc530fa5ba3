"""Command line driver: explore a configuration, run checks, report.

Exit codes: 0 every selected check passed (or was skipped), 1 a safety
property was violated or a liveness witness is missing, 2 usage error,
3 the state limit was hit before exploration finished.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

from . import properties
from .core import Config
from .explorer import StateLimitExceeded, explore, export_aut

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_LIMIT = 0, 1, 2, 3

# JSON config document key -> argparse dest
CONFIG_KEYS = {
    "numberOfServers": "nodes",
    "numberOfClientRequests": "commands",
    "maxTerm": "max_term",
    "networkCapacity": "net_capacity",
    "lossyNetwork": "lossy",
    "crashesEnabled": "crashes",
}
OPTION_KEYS = {
    "check": "check",
    "exportAut": "export_aut",
    "maxStates": "max_states",
    "trace": "trace",
    "report": "report",
}


class UsageError(Exception):
    pass


@dataclass
class Options:
    checks: list
    export_aut: Optional[str] = None
    max_states: Optional[int] = None
    trace: Optional[str] = None
    report: Optional[str] = None
    verbose: bool = False


@dataclass
class RunReport:
    config: Config
    stateCount: int = 0
    transitionCount: int = 0
    wallClockSeconds: float = 0.0
    checks: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    stateLimit: Optional[dict] = None
    exitCode: int = EXIT_OK

    def to_json(self) -> dict:
        return {
            "config": self.config._asdict(),
            "stateCount": self.stateCount,
            "transitionCount": self.transitionCount,
            "wallClockSeconds": round(self.wallClockSeconds, 3),
            "checks": self.checks,
            "artifacts": self.artifacts,
            "stateLimit": self.stateLimit,
            "exitCode": self.exitCode,
        }


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="raftcheck",
        description="Exhaustively explore a Raft model instance and check its properties.",
    )
    p.add_argument("--config", metavar="FILE", help="JSON document with configuration keys")
    p.add_argument("--nodes", type=int, help="number of servers (default 3)")
    p.add_argument("--commands", type=int, help="number of client requests (default 2)")
    p.add_argument("--max-term", type=int, help="highest term a node may reach (default 1)")
    p.add_argument("--net-capacity", type=int, help="in-flight message capacity (default 3)")
    p.add_argument("--lossy", action=argparse.BooleanOptionalAction, default=None,
                   help="let the network drop messages")
    p.add_argument("--crashes", action=argparse.BooleanOptionalAction, default=None,
                   help="let nodes crash and resume")
    p.add_argument("--check", action="append", metavar="NAME",
                   help=f"check to run, repeatable: {', '.join(properties.CHECKS)} or all (default all)")
    p.add_argument("--export-aut", metavar="PATH", help="write the LTS in Aldebaran format")
    p.add_argument("--max-states", type=int, metavar="N", help="abort exploration beyond N states")
    p.add_argument("--trace", metavar="PATH", help="write counterexample/witness traces")
    p.add_argument("--report", metavar="PATH", help="write the JSON report here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true", help="log exploration progress")
    return p


def parse_config(argv=None) -> tuple[Config, Options]:
    """Merge defaults, an optional JSON document and flags (flags win)."""
    args = build_parser().parse_args(argv)
    values: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config document must be a JSON object")
        for key, value in doc.items():
            dest = CONFIG_KEYS.get(key) or OPTION_KEYS.get(key)
            if dest is None:
                raise UsageError(f"unknown config key {key!r}")
            values[dest] = value
    for dest in (*CONFIG_KEYS.values(), *OPTION_KEYS.values()):
        flag = getattr(args, dest)
        if flag is not None:
            values[dest] = flag

    defaults = Config()
    try:
        cfg = Config(
            int(values.get("nodes", defaults.numberOfServers)),
            int(values.get("commands", defaults.numberOfClientRequests)),
            int(values.get("max_term", defaults.maxTerm)),
            int(values.get("net_capacity", defaults.networkCapacity)),
            bool(values.get("lossy", defaults.lossyNetwork)),
            bool(values.get("crashes", defaults.crashesEnabled)),
        ).validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc

    checks = values.get("check") or ["all"]
    if isinstance(checks, str):
        checks = [checks]
    selected = []
    for name in checks:
        if name == "all":
            selected.extend(properties.CHECKS)
        elif name in properties.CHECKS:
            selected.append(name)
        else:
            raise UsageError(f"unknown check {name!r}")
    selected = list(dict.fromkeys(selected))

    max_states = values.get("max_states")
    if max_states is not None and int(max_states) < 1:
        raise UsageError("--max-states must be positive")
    opts = Options(
        checks=selected,
        export_aut=values.get("export_aut"),
        max_states=None if max_states is None else int(max_states),
        trace=values.get("trace"),
        report=values.get("report"),
        verbose=args.verbose,
    )
    return cfg, opts


def skip_reason(name: str, cfg: Config) -> Optional[str]:
    if name == "distinct-leaders" and (cfg.maxTerm < 2 or cfg.numberOfServers < 2):
        return "needs maxTerm >= 2 and at least two servers"
    return None


def run(cfg: Config, opts: Options) -> RunReport:
    report = RunReport(cfg)
    started = time.perf_counter()
    try:
        lts = explore(cfg, max_states=opts.max_states)
    except StateLimitExceeded as exc:
        report.stateCount = exc.partial.num_states
        report.transitionCount = exc.partial.num_transitions
        report.stateLimit = {"limit": exc.limit, "frontier": exc.frontier}
        report.wallClockSeconds = time.perf_counter() - started
        report.exitCode = EXIT_LIMIT
        return report
    report.stateCount = lts.num_states
    report.transitionCount = lts.num_transitions

    if opts.export_aut:
        with open(opts.export_aut, "wb") as sink:
            export_aut(lts, sink)
        report.artifacts["aut"] = opts.export_aut

    traces = []
    failed = False
    for name in opts.checks:
        kind = "safety" if name in properties.SAFETY else "liveness"
        reason = skip_reason(name, cfg)
        if reason:
            report.checks.append({"name": name, "kind": kind, "status": "SKIPPED",
                                  "holds": None, "detail": reason, "pathLength": None})
            continue
        verdict = properties.run_check(name, lts)
        failed |= not verdict.holds
        path = verdict.path
        report.checks.append({
            "name": name,
            "kind": kind,
            "status": "PASS" if verdict.holds else "FAIL",
            "holds": verdict.holds,
            "detail": verdict.detail,
            "pathLength": None if path is None else len(path),
        })
        if path is not None:
            what = "counterexample" if verdict.counterexample else "witness"
            traces.append((name, what, path.rendered()))

    if opts.trace:
        with open(opts.trace, "w") as fh:
            for name, what, labels in traces:
                fh.write(f"# {name} {what}\n")
                for line in labels:
                    fh.write(line + "\n")
        report.artifacts["trace"] = opts.trace

    report.wallClockSeconds = time.perf_counter() - started
    report.exitCode = EXIT_VIOLATION if failed else EXIT_OK
    return report


def render_table(report: RunReport) -> str:
    c = report.config
    lines = [
        f"config: nodes={c.numberOfServers} commands={c.numberOfClientRequests} "
        f"maxTerm={c.maxTerm} netCapacity={c.networkCapacity} "
        f"lossy={'yes' if c.lossyNetwork else 'no'} crashes={'yes' if c.crashesEnabled else 'no'}",
        f"states: {report.stateCount}  transitions: {report.transitionCount}  "
        f"time: {report.wallClockSeconds:.1f}s",
    ]
    if report.stateLimit:
        lines.append(f"state limit {report.stateLimit['limit']} exceeded "
                     f"({report.stateLimit['frontier']} states unexpanded)")
    if report.checks:
        lines.append(f"{'check':<22} {'kind':<9} {'result':<8} detail")
        for row in report.checks:
            lines.append(f"{row['name']:<22} {row['kind']:<9} {row['status']:<8} {row['detail']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    try:
        cfg, opts = parse_config(argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"raftcheck: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse already printed the usage message
        return EXIT_USAGE if exc.code else EXIT_OK

    logging.basicConfig(level=logging.INFO if opts.verbose else logging.WARNING, format="%(message)s")
    report = run(cfg, opts)
    print(render_table(report))
    doc = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if opts.report:
        with open(opts.report, "w") as fh:
            fh.write(doc + "\n")
    else:
        print(doc)
    return report.exitCode


if __name__ == "__main__":
    sys.exit(main())
