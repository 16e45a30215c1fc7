"""Command-line entry point: echoanat {prepare|synth|train|translate|segment|evaluate|report|serve}."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import EchoAnatError, TrainingDivergedError
from ..segmentation import CircleSeed, GACParams
from .commands import (
    cmd_evaluate,
    cmd_prepare,
    cmd_report,
    cmd_segment,
    cmd_synth,
    cmd_train,
    cmd_translate,
)
from .config import load_config

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML run configuration file")
    parser.add_argument("--seed", type=int, help="override dataset/training seed")
    parser.add_argument("--preset", choices=("paper", "desk"), help="model preset override")
    parser.add_argument("--force", action="store_true", help="overwrite completed artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echoanat",
        description="US-to-pseudo-anatomy translation and lesion evaluation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the two-domain synthetic dataset")
    p.add_argument("--out", required=True, help="output root (dataset lands in <out>/synthetic)")
    p.add_argument("--n-per-class", type=int, default=67)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--paired", action="store_true", help="share geometry between domains")
    _add_common(p)

    p = sub.add_parser("prepare", help="split manifest and patch index for a BUSI tree")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("train", help="train the translation model")
    p.add_argument("--data-root", required=True, help="directory containing us/ and anatomy/")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--epochs", type=int, help="override training epochs")
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    p.add_argument("--log-every", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("translate", help="translate US images into the anatomy domain")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--outdir", required=True)
    _add_common(p)

    p = sub.add_parser("segment", help="contour-segment images")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed-center", nargs=2, type=float, metavar=("ROW", "COL"))
    p.add_argument("--seed-radius", type=float)
    p.add_argument("--seed-from-masks", help="directory of reference masks matched by case id")
    p.add_argument("--trace-every", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("evaluate", help="score generated masks against references")
    p.add_argument("--generated", required=True)
    p.add_argument("--manual", help="directory of manual reference masks")
    p.add_argument("--reseg", help="directory of re-segmented reference masks")
    p.add_argument("--outdir", required=True)
    p.add_argument("--plots", action="store_true")
    _add_common(p)

    p = sub.add_parser("report", help="render summary table and plots from records.csv")
    p.add_argument("--records", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--no-plots", action="store_true")
    _add_common(p)

    p = sub.add_parser("serve", help="run the segmentation workbench API")
    p.add_argument("--root", required=True, help="US-domain BUSI tree to browse")
    p.add_argument("--checkpoint", help="checkpoint for the translated view")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    _add_common(p)
    return parser


def _config_from_args(args) -> "RunConfig":
    overrides: dict = {}
    if args.seed is not None:
        overrides.setdefault("dataset", {})["seed"] = args.seed
        overrides.setdefault("training", {})["seed"] = args.seed
    if getattr(args, "preset", None):
        overrides.setdefault("model", {})["preset"] = args.preset
    if getattr(args, "epochs", None):
        overrides.setdefault("training", {})["epochs"] = args.epochs
    return load_config(args.config, overrides)


def _gac_params(config) -> GACParams:
    s = config.segmentation
    return GACParams(
        iterations=s.iterations,
        smoothing=s.smoothing,
        balloon=s.balloon,
        threshold=s.threshold,
        early_stop_window=s.early_stop_window,
        alpha=s.alpha,
        sigma=s.sigma,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "synth":
            cmd_synth(
                args.out,
                n_per_class=args.n_per_class,
                size=args.size,
                seed=config.dataset.seed,
                paired=args.paired,
                force=args.force,
            )
        elif args.command == "prepare":
            cmd_prepare(
                args.root,
                args.out,
                seed=config.dataset.seed,
                ratios=config.dataset.ratios,
                patch_size=config.dataset.patch_size,
                stride=config.dataset.stride,
                force=args.force,
            )
        elif args.command == "train":
            cmd_train(
                config,
                args.data_root,
                args.run_dir,
                force=args.force,
                resume=args.resume,
                log_every=args.log_every,
            )
        elif args.command == "translate":
            result = cmd_translate(
                args.checkpoint,
                args.inputs,
                args.outdir,
                patch_size=config.dataset.patch_size,
                stride=config.dataset.stride,
                force=args.force,
            )
            if result["failed"]:
                return EXIT_PARTIAL
        elif args.command == "segment":
            seed_circle = None
            if args.seed_center is not None or args.seed_radius is not None:
                if args.seed_center is None or args.seed_radius is None:
                    raise EchoAnatError("--seed-center and --seed-radius go together")
                seed_circle = CircleSeed(tuple(args.seed_center), args.seed_radius)
            cmd_segment(
                args.inputs,
                args.outdir,
                _gac_params(config),
                seed_circle=seed_circle,
                seed_mask_dir=args.seed_from_masks,
                trace_every=args.trace_every,
                force=args.force,
            )
        elif args.command == "evaluate":
            references = {}
            if args.manual:
                references["manual"] = args.manual
            if args.reseg:
                references["reseg"] = args.reseg
            cmd_evaluate(
                args.generated,
                references,
                args.outdir,
                std_mode=config.report.std_mode,
                plots=args.plots,
                force=args.force,
            )
        elif args.command == "report":
            cmd_report(
                args.records,
                args.outdir,
                std_mode=config.report.std_mode,
                plots=not args.no_plots,
                force=args.force,
            )
        elif args.command == "serve":
            from .service import serve

            serve(
                args.root,
                checkpoint=args.checkpoint,
                config=config,
                host=args.host,
                port=args.port,
            )
    except TrainingDivergedError as exc:
        print(f"echoanat: training diverged: {exc}", file=sys.stderr)
        for name, value in exc.components.items():
            print(f"  {name} = {value}", file=sys.stderr)
        return EXIT_ERROR
    except EchoAnatError as exc:
        print(f"echoanat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
