"""Command-line surface: train, solve, bench, ablate.

Exit codes: 0 success, 2 usage or config error, 3 I/O error, 4 model
(checkpoint) error.  Every command takes --seed and is deterministic for a
fixed seed; wall-clock timings only appear behind --timings (and on
stderr), keeping default stdout byte-stable.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path
from struct import error as struct_error

from .core import InvalidArgument, TspError, random_instance
from .local_search import LocalSearchConfig
from .policy import init_params, load_checkpoint, sample_best
from .reporting import (
    METHODS,
    BenchReport,
    bench_random_suite,
    bench_tsplib_suite,
    save_bench_figure,
    save_tour_figure,
)
from .rng import RngStream
from .training import TrainConfig, train
from .tsplib import normalize_to_unit_square, parse_tsplib, tsplib_length

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MODEL = 4

_VARIANT_K = {"greedy": 1, "s10": 10, "S100": 100}

_BOOL_KEYS = {
    "use_equivariance",
    "use_rollout_baseline",
    "use_interleaved_ls",
    "use_curriculum",
    "use_rl",
}
_INT_KEYS = {"epochs", "steps_per_epoch", "batch_size", "size_min", "size_max",
             "h", "n_gnn", "iterations"}
_FLOAT_KEYS = {"lr", "lr_decay", "sigma_n", "alpha", "beta", "gamma"}


def parse_config_text(text: str) -> TrainConfig:
    """Plain key=value lines, '#' comments; keys mirror the training and
    local-search hyperparameters (alpha/beta/gamma/iterations go to the
    local-search block, mlp_hidden is a comma pair)."""
    values: dict[str, object] = {}
    ls_values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"config line {lineno}: expected key=value")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        try:
            if key in _BOOL_KEYS:
                if val.lower() not in ("true", "false"):
                    raise ValueError("expected true/false")
                values[key] = val.lower() == "true"
            elif key in _INT_KEYS:
                if key == "iterations":
                    ls_values[key] = int(val)
                else:
                    values[key] = int(val)
            elif key in _FLOAT_KEYS:
                if key in ("alpha", "beta", "gamma"):
                    ls_values[key] = float(val)
                else:
                    values[key] = float(val)
            elif key == "mlp_hidden":
                parts = tuple(int(p) for p in val.split(","))
                if len(parts) != 2:
                    raise ValueError("expected two comma-separated sizes")
                values[key] = parts
            else:
                raise ValueError("unknown key")
        except ValueError as e:
            raise InvalidArgument(f"config line {lineno} ({key}): {e}") from e
    if ls_values:
        values["ls"] = LocalSearchConfig(**ls_values)
    return TrainConfig(**values)


def _load_params(args, rng: RngStream, preprocess=None):
    """Checkpoint parameters when given, otherwise a fresh seed-derived
    untrained policy (the w/o-RL regime)."""
    if getattr(args, "checkpoint", None):
        path = Path(args.checkpoint)
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        try:
            return load_checkpoint(path)
        except (TspError, ValueError, KeyError, IndexError, struct_error) as e:
            raise ModelError(str(e)) from e
    kwargs = {}
    if preprocess is not None:
        kwargs["preprocess"] = preprocess
    return init_params(rng.derive(99), **kwargs)


class ModelError(TspError):
    """Checkpoint failed to load or does not match the expected format."""


def cmd_train(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        config = parse_config_text(text)
    except TspError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    def progress(row):
        print(
            f"epoch {row['epoch']} step {row['step']} n={row['n']} "
            f"improved={row['mean_improved_len']:.4f} adv={row['mean_advantage']:.4f}",
            file=sys.stderr,
        )

    train(config, RngStream(args.seed), out_dir=out, progress=progress)
    print(f"training complete; checkpoints and log in {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    if (args.instance is None) == (args.random is None):
        print("error: give exactly one of an instance path or --random N",
              file=sys.stderr)
        return EXIT_USAGE
    rng = RngStream(args.seed)
    record = None
    if args.instance is not None:
        try:
            text = Path(args.instance).read_text()
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
        try:
            record = parse_tsplib(text)
            instance = normalize_to_unit_square(record)
        except TspError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE
        label = record.name
    else:
        if args.random < 3:
            print("error: --random needs N >= 3", file=sys.stderr)
            return EXIT_USAGE
        instance = random_instance(args.random, rng.derive(0))
        label = f"random{args.random}"
    try:
        params = _load_params(args, rng)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ModelError as e:
        print(f"error: bad checkpoint: {e}", file=sys.stderr)
        return EXIT_MODEL
    ls = LocalSearchConfig(alpha=args.alpha, beta=args.beta, iterations=args.iterations)
    tour = sample_best(instance, params, _VARIANT_K[args.variant], ls, rng.derive(1))
    print(f"instance: {label}")
    print("tour:", " ".join(str(c + 1) for c in tour.order))
    print(f"length: {tour.length:.6f}")
    if record is not None:
        print(f"tsplib_length: {tsplib_length(record, tour)}")
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            save_tour_figure(instance, tour, out / f"tour_{label}.png", title=label)
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        print("error: no methods given", file=sys.stderr)
        return EXIT_USAGE
    for m in methods:
        if m not in METHODS:
            print(f"error: unknown method {m!r} (choose from {', '.join(METHODS)})",
                  file=sys.stderr)
            return EXIT_USAGE
    if args.suite != "tsplib-small" and args.instances < 1:
        print("error: --instances must be positive", file=sys.stderr)
        return EXIT_USAGE
    rng = RngStream(args.seed)
    try:
        params = _load_params(args, rng)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ModelError as e:
        print(f"error: bad checkpoint: {e}", file=sys.stderr)
        return EXIT_MODEL
    ls = LocalSearchConfig(alpha=args.alpha, beta=args.beta, iterations=args.iterations)
    t0 = time.perf_counter()
    try:
        if args.suite == "tsplib-small":
            report = bench_tsplib_suite(_bundled_tsplib(), methods, rng, ls, params)
        else:
            report = bench_random_suite(args.suite, methods, args.instances,
                                        rng, ls, params)
    except TspError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    wall = time.perf_counter() - t0
    print(report.table(timings=args.timings))
    print()
    print(report.records(timings=args.timings))
    print(f"total wall time: {wall:.3f}s", file=sys.stderr)
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "bench_records.txt").write_text(
                report.records(timings=args.timings) + "\n")
            save_bench_figure(report, out / "bench.png")
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def _bundled_tsplib():
    import importlib.resources as resources

    root = resources.files("tspkit") / "data"
    items = []
    for entry in sorted(p.name for p in root.iterdir() if p.name.endswith(".tsp")):
        record = parse_tsplib((root / entry).read_text())
        items.append((record, normalize_to_unit_square(record)))
    return items


def cmd_ablate(args) -> int:
    if len(args.off) != 1:
        print("error: give exactly one --off feature", file=sys.stderr)
        return EXIT_USAGE
    off = args.off[0]
    flag = {
        "equivariance": "use_equivariance",
        "baseline": "use_rollout_baseline",
        "interleaved-ls": "use_interleaved_ls",
        "curriculum": "use_curriculum",
        "rl": "use_rl",
    }[off]
    base = TrainConfig(
        epochs=args.epochs, steps_per_epoch=args.steps, batch_size=args.batch,
        size_min=10, size_max=20, h=args.h, n_gnn=2, mlp_hidden=(32, 64),
    )
    ablated = dataclasses.replace(base, **{flag: False})
    rows = []
    for name, config in (("full", base), (f"off-{off}", ablated)):
        print(f"training {name} model...", file=sys.stderr)
        params, _ = train(config, RngStream(args.seed))
        report = bench_random_suite("random20", ["emagic"], args.instances,
                                    RngStream(args.seed + 1), config.ls, params)
        row = dataclasses.replace(report.rows[0], method=f"emagic[{name}]")
        rows.append(row)
    report = BenchReport(rows)
    print(report.table(timings=args.timings))
    print()
    print(report.records(timings=args.timings))
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "ablate_records.txt").write_text(
                report.records(timings=args.timings) + "\n")
            save_bench_figure(report, out / "ablate.png")
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tspkit",
        description="TSP solver toolkit: learned constructive policy plus "
                    "combined local search and classical baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_ls_flags(p):
        p.add_argument("--alpha", type=float, default=0.5)
        p.add_argument("--beta", type=float, default=1.5)
        p.add_argument("--iterations", type=int, default=10)

    p = sub.add_parser("train", help="train a policy from a config file")
    p.add_argument("config", help="key=value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint/log directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("instance", nargs="?", help="TSPLIB file path")
    p.add_argument("--random", type=int, help="random instance of N cities")
    p.add_argument("--checkpoint", help="policy checkpoint (untrained if omitted)")
    p.add_argument("--variant", choices=sorted(_VARIANT_K), default="greedy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for the tour figure")
    add_ls_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="benchmark methods over a suite")
    p.add_argument("--suite", required=True,
                   choices=["random20", "random50", "random100", "tsplib-small"])
    p.add_argument("--methods", required=True, help="comma-separated method list")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="policy checkpoint (untrained if omitted)")
    p.add_argument("--out", help="directory for records and figures")
    p.add_argument("--timings", action="store_true", help="include wall times")
    add_ls_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="desk-scale ablation: full vs one feature off")
    p.add_argument("--off", action="append", required=True,
                   choices=["equivariance", "baseline", "interleaved-ls",
                            "curriculum", "rl"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--h", type=int, default=32)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--out", help="directory for records and figures")
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except TspError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
