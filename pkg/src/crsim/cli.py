"""Command line: crsim {train,run,metrics,stub,fixtures}.

Exit codes: 0 success, 1 some dialogues ended in an agent error, 2 bad
configuration or input, 3 every dialogue of every agent failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from collections import defaultdict
from pathlib import Path

from .config import (
    AgentConfig, Artifacts, ExperimentConfig, Resources, build_endpoint, build_simulator,
    build_stub, default_agents, load_reference,
)
from .domain import DialogueTranscript, Status, dump_transcripts, load_transcripts
from .engine import ConfigError, run_campaign
from .evaluation import evaluate, format_ordering
from .report import write_report
from .stub import StubServer, serve_stdio
from .synthetic import write_fixtures
from .training import train

log = logging.getLogger("crsim")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_TOTAL = 0, 1, 2, 3
# corpus, taxonomy and config errors are all ValueError subclasses (or KeyError for bad references)
INPUT_ERRORS = (ValueError, KeyError, OSError)


def _experiment(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig(default_agents())
    if getattr(args, "seed", None) is not None:
        cfg.base_seed = args.seed
    if getattr(args, "n", None) is not None:
        if args.n < 1:
            raise ConfigError("--n must be at least 1")
        cfg.n_dialogues = args.n
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "models", None):
        cfg.models = args.models
    if getattr(args, "oracle_nlu", False):
        cfg.oracle_nlu = True
    return cfg


def cmd_train(args) -> int:
    cfg = _experiment(args)
    dialogues = Path(args.dialogues) if args.dialogues else cfg.dialogues_path
    out = args.out or cfg.models
    try:
        summary = train(dialogues, out, cfg.alpha if args.alpha is None else args.alpha)
    except INPUT_ERRORS as e:
        raise ConfigError(f"{dialogues}: {e}") from None
    print(json.dumps({"corpus": str(dialogues), "models": str(out), **summary}, indent=1, sort_keys=True))
    return EXIT_OK


def _tcp_servers(cfg: ExperimentConfig, res: Resources, spec: str):
    """Start one TCP stub server per stub agent; ports count up from the given one (0 = any)."""
    host, _, port = spec[len("tcp:"):].rpartition(":")
    port = int(port)
    servers, transports = [], {}
    for i, agent in enumerate(cfg.agents):
        if agent.stub is None:
            continue
        server = StubServer(build_stub(agent, res), host or "127.0.0.1", port + i if port else 0)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        transports[agent.name] = server.address
    return servers, transports


def run_experiment(cfg: ExperimentConfig, transport: str | None = None):
    """Run every simulator against every agent; returns (transcripts by group, report)."""
    artifacts = Artifacts.load(cfg.models)
    res = Resources.load(cfg)
    reference = load_reference(cfg)
    servers, overrides = [], {}
    if transport and transport.startswith("tcp:"):
        servers, overrides = _tcp_servers(cfg, res, transport)
    endpoints = {a.name: build_endpoint(a, cfg, res, overrides.get(a.name, transport)) for a in cfg.agents}
    groups: dict[tuple[str, str], list[DialogueTranscript]] = {}
    try:
        for sim_name in cfg.simulators:
            sim = build_simulator(sim_name, artifacts, res, cfg)
            for agent in cfg.agents:
                log.info("running %s against %s (n=%d)", sim_name, agent.name, cfg.n_dialogues)
                groups[(sim_name, agent.name)] = run_campaign(sim, endpoints[agent.name], cfg.n_dialogues,
                                                              cfg.base_seed, cfg.workers)
    finally:
        for ep in endpoints.values():
            ep.close()
        for s in servers:
            s.shutdown()
            s.server_close()
    caps = {a.name: a.capabilities for a in cfg.agents}
    return groups, evaluate(groups, caps, reference)


def _exit_for(transcripts) -> int:
    failed = sum(t.status is Status.AGENT_ERROR for t in transcripts)
    if failed == 0:
        return EXIT_OK
    return EXIT_TOTAL if failed == len(transcripts) else EXIT_PARTIAL


def _summarize(report) -> None:
    for sim, per in report.orderings.items():
        for m in ("success_rate", "reward"):
            if m in per:
                print(f"{sim:<12} {m:<13} {format_ordering(per[m])}")


def cmd_run(args) -> int:
    cfg = _experiment(args)
    groups, report = run_experiment(cfg, args.transport)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    transcripts = [t for group in groups.values() for t in group]
    dump_transcripts(transcripts, out / "transcripts.jsonl")
    paths = write_report(report, out, figures=not args.no_figures)
    _summarize(report)
    print(f"wrote {len(transcripts)} transcripts and {len(paths)} report files to {out}")
    return _exit_for(transcripts)


def cmd_metrics(args) -> int:
    cfg = _experiment(args)
    transcripts = load_transcripts(args.transcripts)
    if not transcripts:
        raise ConfigError(f"no transcripts in {args.transcripts}")
    groups: dict[tuple[str, str], list] = defaultdict(list)
    for t in transcripts:
        groups[(t.simulator, t.agent)].append(t)
    caps = {a.name: a.capabilities for a in cfg.agents} if args.config else {}
    report = evaluate(dict(groups), caps, load_reference(cfg))
    out = Path(args.out or cfg.out)
    paths = write_report(report, out, figures=not args.no_figures)
    _summarize(report)
    print(f"wrote {len(paths)} report files to {out}")
    return _exit_for(transcripts)


def cmd_stub(args) -> int:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if not args.agent:
            raise ConfigError("--agent is required with --config")
        agent = cfg.agent(args.agent)
        if agent.stub is None:
            raise ConfigError(f"agent {agent.name!r} is not a stub")
    else:
        cfg = ExperimentConfig(default_agents())
        stub = {"policy": args.policy, "p": args.p, "seed": args.seed or 0, "oracle": args.oracle}
        agent = AgentConfig(args.agent or args.policy, stub=stub)
    handler = build_stub(agent, Resources.load(cfg))
    if args.transport == "stdio":
        serve_stdio(handler)
        return EXIT_OK
    host, _, port = args.transport[len("tcp:"):].rpartition(":")
    with StubServer(handler, host or "127.0.0.1", int(port)) as server:
        print(f"serving {agent.name} on {server.address}", file=sys.stderr, flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return EXIT_OK


def cmd_fixtures(args) -> int:
    paths = write_fixtures(args.out, seed=args.seed or 0, n_dialogues=args.n or 75)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


def _transport(value: str) -> str:
    if value == "stdio" or value.startswith("tcp:"):
        if value.startswith("tcp:"):
            _, _, port = value[len("tcp:"):].rpartition(":")
            if not port.isdigit():
                raise argparse.ArgumentTypeError(f"bad port in {value!r}")
        return value
    raise argparse.ArgumentTypeError("expected 'stdio' or 'tcp:HOST:PORT'")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crsim", description="Simulated-user evaluation of conversational recommenders.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", metavar="PATH", help="experiment file (YAML or JSON)")
        sp.add_argument("--seed", type=int, help="base seed")
        sp.add_argument("--n", type=int, help="dialogues per (simulator, agent)")
        sp.add_argument("--out", metavar="DIR", help=out_help)

    sp = sub.add_parser("train", help="estimate interaction models and the agent index")
    common(sp, "where to write the trained artifacts")
    sp.add_argument("--dialogues", metavar="PATH", help="annotated corpus (JSONL)")
    sp.add_argument("--alpha", type=float, help="add-alpha smoothing (0 disables)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("run", help="simulate dialogues against every agent and report")
    common(sp)
    sp.add_argument("--models", metavar="DIR", help="trained artifacts directory")
    sp.add_argument("--transport", type=_transport, help="serve stub agents over stdio or tcp:HOST:PORT")
    sp.add_argument("--oracle-nlu", action="store_true", help="read agent acts from the response labels")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("metrics", help="recompute the report from saved transcripts")
    common(sp)
    sp.add_argument("transcripts", metavar="TRANSCRIPTS", help="transcripts.jsonl from a run")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("stub", help="serve a stub agent")
    sp.add_argument("--config", metavar="PATH")
    sp.add_argument("--agent", help="agent name in the config")
    sp.add_argument("--policy", default="PERFECT", choices=("PERFECT", "FLAKY"))
    sp.add_argument("--p", type=float, default=1.0, help="FLAKY success probability")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--oracle", action="store_true", help="include action labels in responses")
    sp.add_argument("--transport", type=_transport, default="stdio")
    sp.set_defaults(func=cmd_stub)

    sp = sub.add_parser("fixtures", help="write a synthetic catalog, ratings and corpus")
    sp.add_argument("--out", metavar="DIR", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int, help="number of dialogues")
    sp.set_defaults(func=cmd_fixtures)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as e:
        print(f"crsim: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
