"""Command-line entry points: gen, train, eval, report, grad-check.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import DataError, NonFiniteError, NumericalError, UnoError

log = logging.getLogger("uno")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="uno", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a PDE dataset")
    gen.add_argument("--kind", choices=["darcy", "ns"])
    gen.add_argument("--config")
    gen.add_argument("--n", type=int, help="number of samples")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--grid", type=int)
    gen.add_argument("--target-grid", type=int)
    gen.add_argument("--nu", type=float)
    gen.add_argument("--dt", type=float)
    gen.add_argument("--t-final", type=float)
    gen.add_argument("--workers", type=int)
    gen.add_argument("--out", required=True)

    train = sub.add_parser("train", help="train a model on a dataset")
    train.add_argument("--config")
    train.add_argument("--data", required=True)
    train.add_argument("--out", required=True, help="checkpoint path")
    train.add_argument("--metrics", help="metrics CSV path")
    train.add_argument("--epochs", type=int)
    train.add_argument("--seed", type=int)

    evl = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    evl.add_argument("--ckpt", required=True)
    evl.add_argument("--data", required=True)
    evl.add_argument("--resolution", type=int, nargs="*", default=None)
    evl.add_argument("--fps", type=float, nargs="*", default=None)
    evl.add_argument("--csv")

    rep = sub.add_parser("report", help="memory / parameter / timing tables")
    rep.add_argument("--kind", required=True, choices=["memory", "params", "timing"])
    rep.add_argument("--config")
    rep.add_argument("--ckpt")
    rep.add_argument("--depths", help="range A..B for a depth sweep")
    rep.add_argument("--resolutions", help="comma-separated grid extents")
    rep.add_argument("--csv")

    chk = sub.add_parser("grad-check", help="finite-difference gradient suite")
    chk.add_argument("--config")
    chk.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def _cmd_gen(args) -> int:
    from .config import load_config
    from .datasets import dataset_write, generate_darcy, generate_ns

    cfg = load_config(args.config)["generate"]
    for key, val in (
        ("kind", args.kind), ("samples", args.n), ("seed", args.seed),
        ("grid", args.grid), ("target_grid", args.target_grid), ("nu", args.nu),
        ("dt", args.dt), ("t_final", args.t_final), ("workers", args.workers),
    ):
        if val is not None:
            cfg[key] = val
    if cfg["kind"] == "darcy":
        samples, metadata = generate_darcy(
            int(cfg["samples"]), extent=int(cfg["grid"]), seed=int(cfg["seed"]),
            target_extent=cfg["target_grid"], workers=int(cfg["workers"]),
        )
    else:
        samples, metadata = generate_ns(
            int(cfg["samples"]), nu=float(cfg["nu"]), t_final=float(cfg["t_final"]),
            extent=int(cfg["grid"]), seed=int(cfg["seed"]), dt=float(cfg["dt"]),
            target_extent=cfg["target_grid"], workers=int(cfg["workers"]),
        )
    dataset_write(samples, args.out, metadata)
    print(f"wrote {len(samples)} records to {args.out}")
    return 0


def _check_kind(metadata: dict, problem: str):
    kind = metadata.get("kind")
    expected = "darcy" if problem == "darcy" else "ns"
    if kind is not None and kind != expected:
        raise DataError(f"dataset kind {kind!r} does not fit problem {problem!r}")


def _cmd_train(args) -> int:
    from .config import load_config, model_from_config, train_config
    from .datasets import dataset_read
    from .models import save_checkpoint
    from .training import train

    cfg = load_config(args.config)
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
    tconf = train_config(cfg)
    samples, metadata = dataset_read(args.data)
    _check_kind(metadata, tconf.problem)
    model = model_from_config(cfg)
    metrics = train(model, samples, tconf)
    save_checkpoint(model, args.out)
    if args.metrics:
        metrics.to_csv(args.metrics)
    best = metrics.epochs[metrics.best_epoch]["val_rel_err"]
    print(
        f"trained {tconf.epochs} epochs; best val {best:.3f}% at epoch "
        f"{metrics.best_epoch}; test {metrics.test_rel_err:.3f}%"
    )
    return 0


def _cmd_eval(args) -> int:
    from .datasets import dataset_read
    from .models import load_checkpoint
    from .reports import format_table, write_csv
    from .training import evaluate

    model = load_checkpoint(args.ckpt)
    samples, metadata = dataset_read(args.data)
    config = model.config
    problem = (
        "darcy" if config.domain_kind == "box"
        else ("ns3d" if config.ndim == 3 else "ns2d")
    )
    _check_kind(metadata, problem)
    t_in = config.t_in if config.ndim == 3 else config.in_channels
    t_total = t_in + config.t_target if config.ndim == 3 else 0
    if problem == "ns2d":
        t_total = metadata.get("t_final", t_in + 1)
        t_total = int(t_total)
    kwargs = dict(problem=problem, t_in=t_in, t_total=t_total)
    if problem == "darcy":
        kwargs = dict(problem=problem)
    rows = []
    resolutions = args.resolution or [None]
    fps_values = args.fps or [None]
    for res in resolutions:
        row = {"resolution": res or "native"}
        for fps in fps_values:
            err = evaluate(model, samples, resolution=res, fps=fps, **kwargs)
            row[f"fps={fps}" if fps else "rel_err_%"] = err
        rows.append(row)
    print(format_table(rows), end="")
    if args.csv:
        write_csv(rows, args.csv)
    return 0


def _parse_depths(text):
    lo, _, hi = text.partition("..")
    return range(int(lo), int(hi) + 1)


def _cmd_report(args) -> int:
    from .config import load_config, model_from_config
    from .models import load_checkpoint
    from .reports import (
        MEMORY_RESOLUTIONS,
        format_table,
        memory_by_depth,
        memory_by_resolution,
        parameter_report,
        timing_report,
        write_csv,
    )

    cfg = load_config(args.config)
    if args.kind == "memory":
        if args.depths:
            rows = memory_by_depth(
                depths=_parse_depths(args.depths),
                resolution=int(cfg["model"]["ref_resolution"]),
                d0=int(cfg["model"]["d0"]),
            )
        else:
            resolutions = (
                tuple(int(s) for s in args.resolutions.split(","))
                if args.resolutions
                else MEMORY_RESOLUTIONS
            )
            rows = memory_by_resolution(
                resolutions=resolutions, d0=int(cfg["model"]["d0"])
            )
    else:
        model = (
            load_checkpoint(args.ckpt) if args.ckpt else model_from_config(cfg)
        )
        if args.kind == "params":
            rows = parameter_report(model)
        else:
            s = int(cfg["model"]["ref_resolution"])
            extents = (s, s)
            if model.config.ndim == 3:
                extents = (s, s, model.config.t_in)
            rows = timing_report(model, extents)
    print(format_table(rows), end="")
    if args.csv:
        write_csv(rows, args.csv)
    return 0


def _cmd_grad_check(args) -> int:
    from .verification import gradient_suite, suite_passed

    results = gradient_suite(tolerance=args.tolerance)
    for name, check in results:
        status = "ok " if check.passed else "FAIL"
        print(f"[{status}] {name}: max rel err {check.max_rel_err:.3e}")
    if not suite_passed(results):
        worst = max(results, key=lambda r: r[1].max_rel_err)
        raise NumericalError(
            f"gradient check failed for {worst[0]}: {worst[1]}"
        )
    print(f"all {len(results)} gradient checks passed")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "grad-check": _cmd_grad_check,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (NumericalError, NonFiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except UnoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
