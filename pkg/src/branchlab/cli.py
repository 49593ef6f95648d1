"""Command-line entry points.

    branchlab run --config branch.json --seed 7 --duration 600 --out metrics.json
    branchlab compare --config branch.json --seed 7
    branchlab verify-audit chain.bin
    branchlab serve --config branch.json --host 127.0.0.1 --port 8765

Exit codes: 0 success, 2 invalid config or input, 3 invariant violation or
tampering detected.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import config as config_mod
from . import sim
from .records import AuditChain, ChainOk, MalformedChainFile

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_INVARIANT = 3


def _load_sim_config(args: argparse.Namespace) -> sim.SimConfig:
    if args.config:
        cfg = config_mod.load_sim_config(args.config)
    else:
        cfg = sim.SimConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        overrides["duration_s"] = args.duration
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_sim_config(args)
    result = sim.run_detailed(cfg)
    if args.out:
        sim.emit_metrics(result.report, args.out)
        with open(args.out + ".events", "w", encoding="utf-8") as fh:
            for line in result.world.log:
                fh.write(line + "\n")
        print(f"metrics written to {args.out}, event log to {args.out}.events")
    print(result.report.to_json())
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _load_sim_config(args)
    report = sim.compare_baseline_report(cfg)
    print(report.to_json())
    print(
        f"pre-connect saves {report.preconnect_savings_ms:.1f} ms of "
        "time-to-first-reply per served customer",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_verify_audit(args: argparse.Namespace) -> int:
    try:
        chain = AuditChain.load(args.chain_file)
    except FileNotFoundError:
        print(f"no such file: {args.chain_file}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except MalformedChainFile as exc:
        print(f"chain file malformed (treating as tampered): {exc}")
        return EXIT_INVARIANT
    verdict = chain.verify()
    if isinstance(verdict, ChainOk):
        print(f"Ok ({len(chain)} entries)")
        return EXIT_OK
    print(f"TamperedAt({verdict.seq})")
    return EXIT_INVARIANT


def cmd_serve(args: argparse.Namespace) -> int:
    import asyncio

    from .server import serve_forever

    doc = config_mod.load_document(args.config) if args.config else {}
    try:
        asyncio.run(serve_forever(doc, host=args.host, port=args.port))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation")
    p_run.add_argument("--config", help="JSON config file")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--duration", type=float, help="seconds")
    p_run.add_argument("--out", help="metrics output file")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="measure the pre-connect latency benefit")
    p_cmp.add_argument("--config", help="JSON config file")
    p_cmp.add_argument("--seed", type=int)
    p_cmp.add_argument("--duration", type=float)
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify-audit", help="verify a persisted audit chain")
    p_ver.add_argument("chain_file")
    p_ver.set_defaults(func=cmd_verify_audit)

    p_srv = sub.add_parser("serve", help="run the live branch service over WebSocket")
    p_srv.add_argument("--config", help="JSON config file")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8765)
    p_srv.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except sim.InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except (sim.InvariantViolation, sim.TimeRegression) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
