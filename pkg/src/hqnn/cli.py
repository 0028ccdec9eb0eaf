"""Command-line entry point: ``hqnn {train,sweep,validate-channels,gradcheck,plot}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import harness
from .noise import CHANNELS, PROBABILITY_GRID, make_channel, SWEEP_GRID


def parse_probs(text: str) -> list:
    if text in ("grid", "all"):
        return list(SWEEP_GRID)
    return [float(v) for v in text.split(",") if v]


def _shots(text: str):
    if text == "analytic":
        return None
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("shots must be positive")
    return n


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--model", choices=["quann", "qcnn", "qtl"])
    p.add_argument("--template", choices=["basic", "strong", "weak"])
    p.add_argument("--layers", type=int, choices=range(1, 7), metavar="1..6")
    p.add_argument("--channel", choices=["none", "all", *CHANNELS])
    p.add_argument("--prob", type=parse_probs, dest="probabilities",
                   help="comma-separated probabilities or 'grid' (0.1..1.0)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=_shots, help="'analytic' or a shot count such as 1024")
    p.add_argument("--train-per-class", type=int)
    p.add_argument("--val-per-class", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--data-dir")
    p.add_argument("--features", dest="features_path", help="QTL feature file (label + 49 values)")
    p.add_argument("--out-dir")
    p.add_argument("--jobs", type=int)
    p.add_argument("--freeze-quantum", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hqnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("train", help="train one model and write its CSV"))
    sw = sub.add_parser("sweep", help="noise sweep: CSV, SVG plot and JSON snapshots")
    _common(sw)
    sw.add_argument("--overlay", action="store_true", help="overlay curves in one panel")
    sub.add_parser("validate-channels", help="check completeness of all channels on the grid")
    gc = sub.add_parser("gradcheck", help="parameter-shift vs finite differences")
    gc.add_argument("--circuits", type=int, default=20, help="random circuits per template")
    gc.add_argument("--seed", type=int, default=0)
    pl = sub.add_parser("plot", help="re-render a sweep plot from a CSV")
    pl.add_argument("csv")
    pl.add_argument("--out", help="output SVG path (default: CSV path with .svg)")
    pl.add_argument("--overlay", action="store_true")
    return parser


def _config(args) -> harness.ExperimentConfig:
    keys = ["model", "template", "layers", "channel", "probabilities", "epochs", "seed", "shots",
            "train_per_class", "val_per_class", "lr", "data_dir", "features_path", "out_dir",
            "jobs", "freeze_quantum"]
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if args.config:
        return harness.ExperimentConfig.from_file(args.config, **overrides)
    return harness.ExperimentConfig(**overrides)


def cmd_train(args) -> int:
    cfg = _config(args)
    if cfg.channel == "all":
        raise ValueError("train takes a single channel; use sweep for 'all'")
    p = cfg.probabilities[0] if cfg.channel != "none" else 0.0
    if cfg.channel != "none" and len(cfg.probabilities) != 1:
        logging.getLogger(__name__).warning("train uses only the first probability %.1f", p)
    rec = harness.run_training(cfg, cfg.channel, p)
    out = Path(cfg.out_dir)
    path = harness.emit_csv(rec, out / f"{cfg.model}_{cfg.channel}_{p:.1f}.csv")
    harness.emit_snapshots(rec, out / "snapshots")
    print(f"final val_acc {rec.val_acc[-1]:.4f}; wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    result = harness.run_noise_sweep(cfg)
    out = Path(cfg.out_dir)
    stem = f"sweep_{cfg.model}_{cfg.template}{cfg.layers}_{cfg.channel}"
    csv_path = harness.emit_csv(result, out / f"{stem}.csv")
    svg_path = harness.emit_plot(result, out / f"{stem}.svg", overlay=args.overlay)
    harness.emit_snapshots(result, out / "snapshots")
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def cmd_validate_channels(args) -> int:
    t0 = time.perf_counter()
    ok_all = True
    for label in CHANNELS:
        worst = 0.0
        for p in PROBABILITY_GRID:
            ok, dev = make_channel(label, p).cptp()
            ok_all &= ok
            worst = max(worst, dev)
        print(f"{label:<18} max deviation {worst:.3e} {'ok' if worst < 1e-12 else 'FAIL'}")
    logging.getLogger(__name__).info("validated in %.3f s", time.perf_counter() - t0)
    return 0 if ok_all else 1


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    report = run_gradcheck(args.circuits, args.seed)
    for template, err in report.per_template.items():
        print(f"{template:<7} max relative error {err:.3e}")
    print(f"max relative error {report.max_error:.3e} over {report.n_checks} gradients "
          f"({report.seconds:.1f} s)")
    return 0 if report.passed else 1


def cmd_plot(args) -> int:
    result = harness.read_csv(args.csv)
    out = args.out or str(Path(args.csv).with_suffix(".svg"))
    harness.emit_plot(result, out, overlay=args.overlay)
    print(f"wrote {out}")
    return 0


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "validate-channels": cmd_validate_channels,
            "gradcheck": cmd_gradcheck, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"hqnn {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
