"""Command-line entry point.

Subcommands: simulate, train, detect, fuse, report. Exit codes: 0 success,
2 config error, 3 data error, 4 model-version error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .pipeline import (ConfigError, DataError, ModelVersionError, cmd_detect,
                       cmd_fuse, cmd_report, cmd_simulate, cmd_train, load_config)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL_VERSION = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="normotion",
                                     description="Motion-normality learning and "
                                                 "innovation-based abnormality detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the command's output directory")

    p = sub.add_parser("simulate", help="generate synthetic train/test scenarios")
    add_common(p)

    p = sub.add_parser("train", help="learn the normality model from train data")
    add_common(p)

    p = sub.add_parser("detect", help="score test trajectories against the model")
    add_common(p)
    p.add_argument("trajectories", nargs="*", help="explicit trajectory CSVs")

    p = sub.add_parser("fuse", help="align SL innovations with PL scores")
    add_common(p)
    p.add_argument("--sl", required=True, help="innovation CSV from detect")
    p.add_argument("--pl", help="PL score CSV (optional)")

    p = sub.add_parser("report", help="summarize detect outputs")
    add_common(p)
    return parser


def _config_from_args(args) -> "PipelineConfig":
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        # --out retargets the active command's output location
        key = {"simulate": "data_dir", "train": "model_dir"}.get(args.command, "out_dir")
        overrides[key] = args.out
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "simulate":
            counts = cmd_simulate(cfg)
            print(f"simulated {counts['train']} train and {counts['test']} test laps "
                  f"under {cfg.data_dir}")
        elif args.command == "train":
            model = cmd_train(cfg)
            groups = model.zone_groups()
            print(f"trained model with {len(model.zmap.zones)} zones "
                  f"({len(groups['set1'])} straight, {len(groups['set2'])} curve) "
                  f"-> {cfg.model_dir}")
        elif args.command == "detect":
            summary = cmd_detect(cfg, args.trajectories or None)
            for entry in summary["trajectories"]:
                print(f"{entry['name']}: abnormal_fraction="
                      f"{entry['abnormal_fraction']:.4f} runs={entry['runs']}")
        elif args.command == "fuse":
            stats = cmd_fuse(cfg, args.sl, args.pl)
            print(f"fused report -> {cfg.out_dir} (alignment: {stats['alignment']})")
        elif args.command == "report":
            report = cmd_report(cfg)
            print(f"report over {len(report['trajectories'])} trajectories -> {cfg.out_dir}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ModelVersionError as e:
        print(f"model version error: {e}", file=sys.stderr)
        return EXIT_MODEL_VERSION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
