"""``freshmem`` command line.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 data error.
Configuration is resolved as built-in defaults, then the config file
(``--config`` or ``$FRESHMEM_CONFIG``), then individual flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness as H
from .config import EngineConfig, load_config
from .engine import Engine
from .errors import DataError, FreshMemError, InvalidConfigError
from .mfm import reconstruct
from .streamio import open_stream, write_stream
from .verify import run_verification

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

# flag -> flat config key
CONFIG_FLAGS = {
    "window": ("window_len", int),
    "gamma": ("mfm.gamma", float),
    "bands": ("mfm.K", int),
    "freq_min": ("mfm.f_min", float),
    "freq_max": ("mfm.f_max", float),
    "residual_ratio": ("mfm.residual_ratio", float),
    "mfm_capacity": ("mfm.residual_capacity", int),
    "stm_capacity": ("stm.capacity", int),
    "theta_event": ("stm.theta_event", float),
    "theta_merge": ("stm.theta_merge", float),
    "rho_min": ("stm.rho_min", float),
    "rho_max": ("stm.rho_max", float),
}


def fmt(obj):
    """Round every float to 12 significant digits for stable output."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, (np.floating,)):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: fmt(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [fmt(v) for v in obj]
    return obj


def emit_json(obj, out=None):
    text = json.dumps(fmt(obj), indent=2, sort_keys=False) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", metavar="PATH", help="key = value config file (default: $FRESHMEM_CONFIG)")
    g.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    g.add_argument("--window", type=int)
    g.add_argument("--gamma", type=float)
    g.add_argument("--bands", type=int)
    g.add_argument("--freq-min", type=float)
    g.add_argument("--freq-max", type=float)
    g.add_argument("--residual-ratio", type=float)
    g.add_argument("--mfm-capacity", type=int, help="residual buffer size and MFM slot count")
    g.add_argument("--stm-capacity", type=int)
    g.add_argument("--theta-event", type=float)
    g.add_argument("--theta-merge", type=float)
    g.add_argument("--rho-min", type=float)
    g.add_argument("--rho-max", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("binary", "jsonl"), default=None, help="stream encoding (default: by extension)")
    p.add_argument("--out", metavar="PATH")
    return p


def resolve_config(args) -> tuple[EngineConfig, bool]:
    """Returns the config and whether anything overrode the defaults."""
    config = EngineConfig()
    explicit = False
    path = args.config or os.environ.get("FRESHMEM_CONFIG")
    if path:
        config = load_config(path, config)
        explicit = True
    flat = {}
    for flag, (key, _) in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            flat[key] = value
            if key == "mfm.residual_capacity":
                flat["mfm.slots"] = value
    if flat:
        config = EngineConfig.from_flat(flat, config)
        explicit = True
    return config.validate(), explicit


def parse_values(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma list."""
    if ":" in text:
        a, b, step = (float(v) for v in text.split(":"))
        if step <= 0 or b < a:
            raise InvalidConfigError("--values", f"bad range {text!r}")
        n = int(round((b - a) / step)) + 1
        return [round(a + i * step, 12) for i in range(n)]
    return [float(v) for v in text.split(",") if v.strip()]


# ------------------------------------------------------------ subcommands


def run_stream(config, path, fmt_name):
    engine = Engine(config)
    with open_stream(path, fmt_name) as reader:
        engine.bind_shape(reader.S, reader.D)
        for frame in reader:
            engine.step(frame)
    return engine


def cmd_ingest(args, config, explicit):
    engine = run_stream(config, args.input, args.format)
    out = args.out or args.input + ".fmst"
    engine.export_state(out)
    emit_json({"state": out, "steps": engine.step_count, "episodes": len(engine.stm.episodes),
               "boundaries": len(engine.stm.boundary_log), "fingerprint": engine.config.fingerprint()})
    return EXIT_OK


def _load(args, config, explicit):
    return Engine.import_state(args.state, config if explicit else None)


def cmd_snapshot(args, config, explicit):
    engine = _load(args, config, explicit)
    snap = engine.snapshot()
    if args.sidecar:
        data = snap.tokens()
        with open(args.sidecar, "wb") as fh:
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        doc = snap.to_dict(inline_tokens=False)
        doc["sidecar"] = {"path": args.sidecar, "dtype": "<f8", "frame_shape": list(engine.shape or ())}
    else:
        doc = snap.to_dict(inline_tokens=True)
    doc["digest"] = snap.digest()
    emit_json(doc, args.out)
    return EXIT_OK


def cmd_reconstruct(args, config, explicit):
    engine = _load(args, config, explicit)
    if engine.bank is None or engine.bank.last_t is None:
        raise DataError("state holds no frequency history yet")
    rec = reconstruct(engine.bank, engine.residuals, args.tau)
    emit_json({"tau": rec.tau, "residual_applied": rec.residual_applied, "tokens": rec.tokens.tolist()}, args.out)
    return EXIT_OK


def cmd_segment(args, config, explicit):
    engine = run_stream(config, args.input, args.format)
    view = engine.stm.view()
    emit_json(
        {
            "boundaries": engine.boundary_log,
            "episodes": [
                {"start_t": s.start_t, "end_t": s.end_t, "count": s.count, "thumbnails": len(s.frames),
                 "merged_from": s.merged_from, "active": s.active}
                for s in view
            ],
        },
        args.out,
    )
    return EXIT_OK


def cmd_simulate(args, config, explicit):
    spec = H.SyntheticSpec(
        episode_count=args.episodes,
        frames_per_episode=(args.min_len, args.max_len),
        D=args.D,
        S=args.S,
        within_noise=args.noise,
        min_adjacent_gap=args.gap,
        min_within_sim=args.within,
        seed=args.seed,
    )
    frames, truth = H.gen_synthetic_stream(spec)
    out = args.out or f"synthetic_{args.seed}.ffs"
    write_stream(frames, out, args.format)
    truth_path = out + ".truth.json"
    emit_json({"boundaries": list(truth), "frames": len(frames), "S": spec.S, "D": spec.D}, truth_path)
    emit_json({"stream": out, "truth": truth_path, "frames": len(frames), "boundaries": list(truth)})
    return EXIT_OK


def cmd_verify(args, config, explicit):
    report = run_verification(config, seed=args.seed)
    emit_json(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_bench(args, config, explicit):
    prof = H.latency_profile(config, length=args.length, S=args.S, D=args.D, seed=args.seed)
    n = args.length
    early, late = (1000, 2000), (n - 1000, n)
    emit_json(
        {
            "length": n,
            "mfm_ops_step_100": int(prof.mfm_ops[100]),
            "mfm_ops_last_step": int(prof.mfm_ops[-1]),
            "stm_ops_max": int(prof.stm_ops.max()),
            "stm_ops_bound": config.stm.capacity + 4,  # pooling, boundary, pair scan, two refreshes
            "median_ns_early": float(np.median(prof.wall_ns[early[0]:early[1]])),
            "median_ns_late": float(np.median(prof.wall_ns[late[0]:late[1]])),
            "median_ratio_late_over_early": prof.median_wall_ratio(early, late),
        },
        args.out,
    )
    return EXIT_OK


def cmd_sweep(args, config, explicit):
    values = parse_values(args.values)
    seeds = [args.seed + i for i in range(args.streams)]
    streams = H.planted_streams(H.SyntheticSpec(), seeds)
    rows = H.sweep(args.param, values, streams, config=config, seeds=seeds)
    text = H.rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = common_parser()
    parser = argparse.ArgumentParser(prog="freshmem", description="Bounded-memory summarization of frame-feature streams.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="stream a file through an engine and save its state")
    p.add_argument("input")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("snapshot", parents=[common], help="print the memory snapshot of a state file")
    p.add_argument("state")
    p.add_argument("--sidecar", metavar="PATH", help="write tokens to a raw float64 file instead of inline")
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct a past step from a state file")
    p.add_argument("state")
    p.add_argument("--tau", type=int, required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("segment", parents=[common], help="boundary log and episode table of a stream")
    p.add_argument("input")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("simulate", parents=[common], help="write a planted-episode synthetic stream")
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--min-len", type=int, default=20)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--S", type=int, default=8)
    p.add_argument("--D", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--gap", type=float, default=0.2)
    p.add_argument("--within", type=float, default=0.6)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="run the oracle and invariant suite")
    p.set_defaults(func=cmd_verify, seed=7)

    p = sub.add_parser("bench", parents=[common], help="per-step cost profile")
    p.add_argument("--length", type=int, default=100_000)
    p.add_argument("--S", type=int, default=4)
    p.add_argument("--D", type=int, default=8)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", parents=[common], help="segmentation scores over a parameter grid (CSV)")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="a:b:step or comma list")
    p.add_argument("--streams", type=int, default=5, help="planted streams per value")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config, explicit = resolve_config(args)
        if args.print_config:
            sys.stdout.write(config.dumps())
            return EXIT_OK
        return args.func(args, config, explicit)
    except InvalidConfigError as exc:
        print(f"freshmem: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"freshmem: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FreshMemError as exc:
        print(f"freshmem: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
