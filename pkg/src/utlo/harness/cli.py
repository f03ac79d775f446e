"""Command line entry point: build-dataset, train, eval, sweep, report.

Exit codes: 0 success, 1 user error (bad config, missing files, invalid
arguments), 2 numerical abort during training.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..autodiff.checkpoint import CheckpointFormatError
from ..data.io import DatasetFormatError, load_dataset, save_dataset
from ..data.profile import ProfileError
from ..data.world import WorldError, generate_synthetic_dataset
from ..gan.config import ConfigError
from ..gan.train import NumericalAbort, checkpoint_load
from ..metrics import MetricError, append_csv, write_json
from .config import ExperimentConfig, load_config
from .run import (
    HarnessError,
    emit_report,
    emit_sweep_report,
    evaluate_model,
    is_sweep_dir,
    reference_set,
    run_sweep,
    select_best,
    train_run,
)

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; here 2 is reserved for numerical aborts."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment YAML; defaults apply when omitted")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--out", type=Path, help="output path or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="utlo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-dataset", help="render the long-tailed synthetic dataset")
    _common(p)
    p.add_argument("--balanced", action="store_true", help="equal class counts with the long-tail total")

    p = sub.add_parser("train", help="train one model with periodic evaluation")
    _common(p)
    p.add_argument("--dataset", type=Path, help="LTDS file; rendered from the config when omitted")
    p.add_argument("--mode", choices=("utlo", "conditional"))
    p.add_argument("--iterations", type=int)
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p = sub.add_parser("eval", help="score a checkpoint or select the best one in a run")
    _common(p)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--dataset", type=Path)
    p.add_argument("--select", type=Path, metavar="RUN_DIR", help="print the checkpoint with the lowest FID-FS")

    p = sub.add_parser("sweep", help="one child run per value of an ablation axis")
    _common(p)
    p.add_argument("--axis", required=True, choices=("res_uc", "lambda", "beta", "mode"))
    p.add_argument("--values", required=True, nargs="+")
    p.add_argument("--seed-rule", choices=("shared", "derived"), default="shared")
    p.add_argument("--iterations", type=int)

    p = sub.add_parser("report", help="curves, grids and the class-pair heat map")
    _common(p)
    p.add_argument("run_dir", type=Path)
    p.add_argument("--num-latents", type=int)
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mode", None):
        overrides["model__mode"] = args.mode
    if getattr(args, "iterations", None):
        overrides["training__iterations"] = args.iterations
    return cfg.with_overrides(**overrides) if overrides else cfg


def _load_data(path: Path, cfg: ExperimentConfig):
    return load_dataset(path, cfg.dataset.profile().few_shot_classes, cfg.dataset.rho, cfg.dataset.seed)


def cmd_build_dataset(args) -> int:
    cfg = _load(args)
    if args.balanced:
        cfg = cfg.with_overrides(dataset__balanced=True)
    out = args.out or Path(cfg.out_dir) / "dataset.ltds"
    profile = cfg.dataset.profile()
    data = generate_synthetic_dataset(cfg.dataset.world(), profile, cfg.dataset.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(data, out)
    print(profile.summary())
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    run_dir = args.out or Path(cfg.out_dir)
    dataset = _load_data(args.dataset, cfg) if args.dataset else None
    result = train_run(cfg, run_dir, dataset=dataset, resume=args.resume)
    print(f"run complete: {result.run_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.select:
        best, ckpt = select_best(args.select)
        print(ckpt)
        print(f"iter={best['iter']} fid_fs={best['fid_fs']}")
        return EXIT_OK
    if not args.checkpoint or not args.dataset:
        raise HarnessError("eval needs --checkpoint and --dataset (or --select RUN_DIR)")
    cfg = _load(args)
    state = checkpoint_load(args.checkpoint)
    data = _load_data(args.dataset, cfg)
    mc = state.cfg
    if mc.num_classes != data.profile.num_classes or mc.resolution != data.images.shape[-1]:
        raise ConfigError(
            f"checkpoint ({mc.num_classes} classes, {mc.resolution}px) is incompatible with dataset "
            f"({data.profile.num_classes} classes, {data.images.shape[-1]}px)"
        )
    cfg = cfg.with_overrides(dataset__num_classes=mc.num_classes, dataset__image_size=mc.resolution)
    report = evaluate_model(state.model, cfg, data, reference_set(cfg, data), cfg.seed, state.iteration)
    out = args.out or args.checkpoint.with_suffix("")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "eval.csv"
    if csv_path.exists():
        csv_path.unlink()
    append_csv(csv_path, report)
    write_json(out / "eval.json", report.to_dict())
    row = report.csv_row()
    print(" ".join(f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = args.out or Path(cfg.out_dir) / f"sweep_{args.axis}"
    rows = run_sweep(cfg, args.axis, args.values, out, seed_rule=args.seed_rule)
    for r in rows:
        print(f"{args.axis}={r['value']} fid_fs={r['fid_fs']} fid={r['fid']} iter={r['iter']}")
    return EXIT_OK


def cmd_report(args) -> int:
    if is_sweep_dir(args.run_dir):
        emit_sweep_report(args.run_dir)
    else:
        emit_report(args.run_dir, num_latents=args.num_latents)
    return EXIT_OK


COMMANDS = {
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "report": cmd_report,
}

USER_ERRORS = (
    ConfigError,
    ProfileError,
    WorldError,
    MetricError,
    HarnessError,
    DatasetFormatError,
    CheckpointFormatError,
    FileNotFoundError,
    PermissionError,
    IsADirectoryError,
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
