"""Command-line entry point: train the discriminator bank, score frames."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import data, score, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plgan",
                                     description="Cross-channel GAN bank for "
                                                 "first-person abnormality scoring")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the four generator/discriminator pairs")
    p.add_argument("--data", required=True, help="lap directory (trajectories, labels, frames/)")
    p.add_argument("--innovations", required=True,
                   help="directory with innovations_<lap>.csv for the same laps")
    p.add_argument("--groups", required=True, help="zone_groups.json from the trained model")
    p.add_argument("--out", required=True, help="checkpoint root (pl/)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--max-per-set", type=int, default=400)
    p.add_argument("--cache", help="flow cache directory")

    p = sub.add_parser("score", help="score lap frames against a trained bank")
    p.add_argument("--data", required=True, help="lap directory with frames/")
    p.add_argument("--bank", required=True, help="checkpoint root (pl/)")
    p.add_argument("--out", required=True, help="output directory for score CSVs")
    p.add_argument("--threshold", type=float, help="fixed abnormality threshold")
    p.add_argument("--calibration-lap",
                   help="lap whose 90th percentile sets the threshold (default: first lap)")
    p.add_argument("--cache", help="flow cache directory")
    return parser


def cmd_train(args) -> int:
    laps = data.discover_laps(args.data, args.innovations)
    if not laps:
        print(f"no lap frame directories under {args.data}", file=sys.stderr)
        return 3
    missing = [l.name for l in laps if l.innovations_csv is None]
    if missing:
        print(f"missing innovations CSVs for: {', '.join(missing)}", file=sys.stderr)
        return 3
    groups = data.load_zone_groups(args.groups)
    samples = [data.build_samples(l, groups, flow_cache_dir=args.cache) for l in laps]
    try:
        split = data.training_split(samples, max_per_set=args.max_per_set)
    except ValueError as e:
        print(str(e), file=sys.stderr)
        return 3
    cfg = train.TrainConfig(seed=args.seed, epochs=args.epochs,
                            max_per_set=args.max_per_set)
    summary = train.train_bank(split, args.out, cfg)
    for name, stats in summary["pairs"].items():
        print(f"{name}: {stats['steps']} steps, d={stats['final_loss_d']:.4f} "
              f"g={stats['final_loss_g']:.4f} (n={stats['n_train']})")
    print(f"bank -> {args.out} ({summary['train_seconds']}s)")
    return 0


def cmd_score(args) -> int:
    laps = data.discover_laps(args.data)
    if not laps:
        print(f"no lap frame directories under {args.data}", file=sys.stderr)
        return 3
    try:
        bank = train.load_bank(args.bank)
    except FileNotFoundError as e:
        print(str(e), file=sys.stderr)
        return 3
    samples = [data.build_samples(l, flow_cache_dir=args.cache) for l in laps]
    result, threshold = score.score_frames(bank, samples, threshold=args.threshold,
                                           calibration_lap=args.calibration_lap)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, rows in sorted(result.items()):
        score.write_scores_csv(rows, out_dir / f"pl_scores_{name}.csv")
    score.write_summary(result, threshold, out_dir / "pl_summary.json")
    print(f"scored {len(result)} laps (threshold {threshold:.4f}) -> {out_dir}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        return cmd_train(args)
    return cmd_score(args)


if __name__ == "__main__":
    sys.exit(main())
