"""Command-line front end: compile, correlate, generate, bench, oracle."""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

import msgspec

from . import bundled_path
from .alertgen import GenSpec, generate_noise, interleave
from .alerts import decode_record, encode_record
from .corrgraph import export_canonical, export_dot
from .engine import EngineConfig, Session, config_for_variant, render_event
from .model import AttackModel, ModelError, expand_implications, parse_model, validate
from .oracle import batch_correlate, build_alerts, diff
from .typegraph import CycleError, TypeGraph, compile_model, render_dot, render_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_INPUT = 3
EXIT_DIFF = 4


@dataclass
class RunStats:
    alerts_in: int
    vertices: int
    edges: int
    hypotheses: int
    aggregated: int
    wall_time: float
    cpu_time: float

    @property
    def rate(self) -> float:
        return self.alerts_in / self.wall_time if self.wall_time > 0 else 0.0

    def machine_line(self) -> str:
        return (
            f"STATS alerts={self.alerts_in} vertices={self.vertices} "
            f"edges={self.edges} hypotheses={self.hypotheses} "
            f"aggregated={self.aggregated} wall={self.wall_time:.3f} "
            f"cpu={self.cpu_time:.3f} rate={self.rate:.0f}"
        )

    def table(self) -> str:
        rows = [
            ("alerts in", self.alerts_in),
            ("vertices", self.vertices),
            ("edges", self.edges),
            ("hypotheses", self.hypotheses),
            ("aggregated", self.aggregated),
            ("wall time (s)", f"{self.wall_time:.3f}"),
            ("cpu time (s)", f"{self.cpu_time:.3f}"),
            ("rate (alerts/s)", f"{self.rate:.0f}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_model(path: str) -> AttackModel:
    """Parse and validate a model file; exits with EXIT_MODEL on errors."""
    if path == "lldos4.atg" or path == "bench20.atg":
        bundled = bundled_path(path)
        text = bundled.read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        model = parse_model(text)
    except ModelError as exc:
        for d in exc.diagnostics:
            print(f"{path}:{d}", file=sys.stderr)
        raise SystemExit(EXIT_MODEL) from None
    diags = validate(model)
    fatal = False
    for d in diags:
        print(f"{path}: {d}", file=sys.stderr)
        fatal = fatal or d.severity == "error"
    if fatal:
        raise SystemExit(EXIT_MODEL)
    return model


def _compile(model: AttackModel) -> TypeGraph:
    try:
        return compile_model(model)
    except CycleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_MODEL) from None


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def _open_in(path: str):
    if path == "-":
        return sys.stdin.buffer, False
    return open(path, "rb"), True


def _engine_config(args) -> EngineConfig:
    return EngineConfig(
        implicit_correlation=not args.no_implicit,
        hypothesize=args.hypothesize,
        consolidate_hypotheses=args.hypothesize and not args.no_consolidate,
    )


def cmd_compile(args) -> int:
    model = _load_model(args.model)
    tg = _compile(model)
    sys.stdout.write(render_dot(tg) if args.dot else render_report(tg))
    return EXIT_OK


def _read_records(path: str) -> list[dict]:
    records = []
    fh, close = _open_in(path)
    try:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                records.append(decode_record(raw))
            except msgspec.DecodeError as exc:
                print(f"{path}:{lineno}: bad record: {exc}", file=sys.stderr)
                raise SystemExit(EXIT_INPUT) from None
    finally:
        if close:
            fh.close()
    return records


def cmd_correlate(args) -> int:
    model = _load_model(args.model)
    tg = _compile(model)
    session = Session(tg, _engine_config(args))

    events_fh = None
    events_close = False
    if args.events:
        events_fh, events_close = _open_out(args.events)

    fh, close = _open_in(args.input)
    errors = 0
    status = EXIT_OK
    process = session.process
    decode = decode_record
    t_wall = time.perf_counter()
    t_cpu = time.process_time()
    try:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                rec = decode(raw)
            except msgspec.DecodeError as exc:
                errors += 1
                if events_fh:
                    events_fh.write(f"ERR {lineno} bad record: {exc}\n")
                if args.strict:
                    print(f"{args.input}:{lineno}: bad record: {exc}", file=sys.stderr)
                    status = EXIT_INPUT
                    break
                continue
            evs = process(rec)
            if evs:
                bad = evs[0][0] == "ERR"
                if bad:
                    errors += 1
                if events_fh:
                    for ev in evs:
                        events_fh.write(render_event(ev, lineno) + "\n")
                if bad and args.strict:
                    print(f"{args.input}:{lineno}: {evs[0][1]}", file=sys.stderr)
                    status = EXIT_INPUT
                    break
    finally:
        if close:
            fh.close()
        if events_close and events_fh:
            events_fh.close()
    wall = time.perf_counter() - t_wall
    cpu = time.process_time() - t_cpu

    if status == EXIT_OK:
        graph = session.finalize().prune_trivial()
        out, out_close = _open_out(args.output)
        try:
            out.write(export_dot(graph) if args.format == "dot" else export_canonical(graph))
        finally:
            if out_close:
                out.close()

    stats = RunStats(
        alerts_in=session.alerts_in,
        vertices=len(session.graph.vertices),
        edges=len(session.graph.edges),
        hypotheses=session.n_hypo,
        aggregated=session.n_aggr,
        wall_time=wall,
        cpu_time=cpu,
    )
    print(stats.machine_line(), file=sys.stderr)
    if args.stats:
        print(stats.table(), file=sys.stderr)
    return status


def _genspec(args, model: AttackModel) -> GenSpec:
    if args.types:
        pool = tuple(args.types.split(","))
    else:
        pool = tuple(t.name for t in model.types)
    prefix = args.prefix
    if prefix is None:
        prefix = "172.16.0.0/16" if args.network_class == "B" else "192.168.1.0/24"
    try:
        return GenSpec(
            network_class=args.network_class,
            network_prefix=prefix,
            count=args.count,
            seed=args.seed,
            model=model,
            type_pool=pool,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None


def cmd_generate(args) -> int:
    model = _load_model(args.model)
    spec = _genspec(args, model)
    stream = generate_noise(spec)
    if args.scenario:
        scenario = _read_records(args.scenario)
        stream = interleave(scenario, stream, spec.seed, noise_count=spec.count)
    out, close = _open_out(args.output)
    try:
        write = out.write
        for rec in stream:
            write(encode_record(rec).decode() + "\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


def cmd_bench(args) -> int:
    model = _load_model(args.model)
    tg = _compile(model)
    spec = _genspec(args, model)
    stream = generate_noise(spec)
    if args.scenario:
        scenario = _read_records(args.scenario)
        stream = interleave(scenario, stream, spec.seed, noise_count=spec.count)
    records = list(stream)

    variants = args.variants.split(",")
    for v in variants:
        config_for_variant(v)  # validate names before the long runs

    print(f"{'variant':<8}{'min (s)':>10}{'max (s)':>10}{'mean (s)':>10}{'rate (a/s)':>12}")
    for v in variants:
        walls = []
        last = None
        for _ in range(args.reps):
            session = Session(tg, config_for_variant(v))
            process = session.process
            t0 = time.perf_counter()
            for rec in records:
                process(rec)
            walls.append(time.perf_counter() - t0)
            last = session
        mean = sum(walls) / len(walls)
        rate = len(records) / mean if mean > 0 else 0.0
        print(f"{v:<8}{min(walls):>10.3f}{max(walls):>10.3f}{mean:>10.3f}{rate:>12.0f}")
        print(
            f"BENCH variant={v} reps={args.reps} min={min(walls):.3f} "
            f"max={max(walls):.3f} mean={mean:.3f} rate={rate:.0f} "
            f"vertices={len(last.graph.vertices)} edges={len(last.graph.edges)}",
            file=sys.stderr,
        )
    return EXIT_OK


def cmd_oracle(args) -> int:
    model = _load_model(args.model)
    tg = _compile(model)
    records = _read_records(args.input)
    try:
        alerts = build_alerts(tg.model, records)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT) from None
    report = batch_correlate(tg, alerts)
    if not args.against:
        for src, dst in sorted(report.edges):
            print(f"CORR {src} {dst}")
        return EXIT_OK
    engine_edges: set[tuple[str, str]] = set()
    with open(args.against, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 3 and parts[0] == "CORR":
                engine_edges.add((parts[1], parts[2]))
    d = diff(report, engine_edges)
    sys.stdout.write(d.render())
    return EXIT_OK if d.empty() else EXIT_DIFF


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="alertcorr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a model and report its type graph")
    p.add_argument("model")
    p.add_argument("--dot", action="store_true", help="emit DOT instead of the report")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("correlate", help="stream an alert file through the correlator")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="alert file, - for stdin")
    p.add_argument("--output", default="-", help="graph export destination")
    p.add_argument("--format", choices=("canonical", "dot"), default="canonical")
    p.add_argument("--no-implicit", action="store_true", help="variant 1(a)")
    p.add_argument("--hypothesize", action="store_true", help="variant 2(b); with --no-consolidate, 2(a)")
    p.add_argument("--no-consolidate", action="store_true")
    p.add_argument("--events", help="write event lines (CORR/AGGR/HYPO/ERR) to this file, - for stdout")
    p.add_argument("--strict", action="store_true", help="abort on the first input error")
    p.add_argument("--stats", action="store_true", help="print a human-readable stats table")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("generate", help="generate a synthetic noise stream")
    p.add_argument("--model", required=True)
    p.add_argument("--class", dest="network_class", choices=("B", "C"), required=True)
    p.add_argument("--prefix", help="monitored network, e.g. 172.16.0.0/16")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--types", help="comma-separated type pool (default: all model types)")
    p.add_argument("--scenario", help="interleave this alert file into the noise")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="time the correlator on generated streams")
    p.add_argument("--model", required=True)
    p.add_argument("--class", dest="network_class", choices=("B", "C"), required=True)
    p.add_argument("--prefix")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--types")
    p.add_argument("--scenario")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--variants", default="1a,1b,2a,2b")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="brute-force correlate and diff against an event log")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--against", help="engine event log to compare with")
    p.set_defaults(func=cmd_oracle)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
