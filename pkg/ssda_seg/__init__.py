import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any

from .commands import (
    eval_command,
    generate_command,
    pseudolabel_command,
    sweep_command,
    train_command,
)
from .custom_logger import setup_logging
from .data import Role
from .errors import SsdaError, UsageError
from .settings import RunConfig

LOGLEVEL = os.environ.get("LOGLEVEL", "WARNING").upper()


setup_logging(LOGLEVEL)
log = logging.getLogger(__name__)
log.info(f"Log level set to {LOGLEVEL}")

# flag -> RunConfig key, for value flags shared by every command
VALUE_FLAGS = {
    "--setting": ("setting", str, "ssda, uda or ssl"),
    "--n-target": ("n_target", int, "number of labeled target images"),
    "--seed": ("seed", int, "random seed, falls back to $SSDA_SEED then 0"),
    "--name": ("name", str, "run name, the run directory is <runs-dir>/<name>"),
    "--runs-dir": ("runs_dir", Path, "directory holding run directories"),
    "--data": ("data_dir", Path, "dataset directory written by `generate`"),
    "--classes": ("classes", int, "number of classes C"),
    "--gap": ("gap", str, "domain gap preset: none, small or large"),
    "--rounds": ("rounds", int, "self-training rounds K"),
    "--n-steps": ("n_steps", int, "optimizer steps per round"),
    "--n-drop": ("n_drop", int, "step at which pseudolabels are dropped"),
    "--tau": ("tau", float, "pseudolabel confidence threshold"),
    "--cr-variant": ("cr_variant", str, "auto, onehot or prob"),
    "--styling": ("styling", str, "none or lab"),
    "--pc-scope": ("pc_scope", str, "target, target+unlabeled or target+source"),
}
SWITCH_FLAGS = {
    "--disable-cr": ("disable_cr", "drop the consistency term"),
    "--disable-pc": ("disable_pc", "drop the pixel contrast term"),
    "--disable-class-weights": ("disable_class_weights", "uniform class weights"),
    "--disable-batch-mix": ("disable_batch_mix", "separate source/target forward passes"),
    "--no-pl-drop": ("no_pl_drop", "keep pseudolabels until the end of each round"),
    "--warm-start": ("warm_start", "start each round from the previous round model"),
}


def parse_overrides(pairs: list[str]) -> dict[str, Any]:
    overrides = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep:
            msg = f"--set expects KEY=VALUE, got {pair!r}"
            raise UsageError(msg)
        overrides[key.strip()] = RunConfig.coerce(key.strip(), raw)
    return overrides


def parse_int_list(raw: str) -> list[int]:
    try:
        return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError as e:
        msg = f"expected a comma separated list of integers, got {raw!r}"
        raise UsageError(msg) from e


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key, may be repeated",
    )
    for flag, (key, kind, help_text) in VALUE_FLAGS.items():
        parser.add_argument(flag, dest=key, type=kind, default=None, help=help_text)
    for flag, (key, help_text) in SWITCH_FLAGS.items():
        parser.add_argument(flag, dest=key, action="store_true", default=None, help=help_text)
    parser.add_argument("--debug", action="store_true", help="enable debug logging")
    parser.add_argument("--verbose", action="store_true", help="enable info logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssda-seg",
        description="semi-supervised domain adaptation for semantic segmentation",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    generate = subparsers.add_parser("generate", help="render a synthetic two-domain dataset")
    add_config_arguments(generate)
    generate.add_argument("--out", type=Path, required=True, help="dataset directory")
    generate.add_argument("--force", action="store_true", help="overwrite a non-empty directory")

    train = subparsers.add_parser("train", help="run all self-training rounds")
    add_config_arguments(train)

    evaluate = subparsers.add_parser("eval", help="evaluate one checkpoint or an ensemble of two")
    add_config_arguments(evaluate)
    evaluate.add_argument("checkpoint_a", type=Path)
    evaluate.add_argument("checkpoint_b", type=Path, nargs="?")
    evaluate.add_argument("--out", type=Path, default=Path("eval.txt"), help="report path")
    evaluate.add_argument(
        "--role", default="validation", help="dataset role to evaluate on"
    )

    sweep = subparsers.add_parser("sweep", help="train across label budgets and seeds")
    add_config_arguments(sweep)
    sweep.add_argument("--labels", default="0,8,50", help="comma separated labeled-target counts")
    sweep.add_argument("--seeds", default="0,1,2", help="comma separated seeds")
    sweep.add_argument("--grid", default="", help="on/off axes (cr, pc, cw, mix, lab) to cross, e.g. cr,lab")
    sweep.add_argument(
        "--ablate", action="store_true", help="switch the --grid axes off one at a time (all of cr,pc,cw,mix if empty)"
    )

    pseudolabel = subparsers.add_parser("pseudolabel", help="pseudolabel the unlabeled target images with a round checkpoint")
    add_config_arguments(pseudolabel)
    pseudolabel.add_argument("--checkpoint", type=Path, required=True)
    pseudolabel.add_argument("--out", type=Path, required=True, help="pseudolabel directory")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then --set pairs, then dedicated flags."""
    config = RunConfig.from_file(args.config) if args.config is not None else RunConfig()
    config = config.merged(parse_overrides(args.overrides))
    flags = {key: getattr(args, key) for key, _, _ in VALUE_FLAGS.values()}
    flags |= {key: getattr(args, key) for key, _ in SWITCH_FLAGS.values()}
    return config.merged({k: v for k, v in flags.items() if v is not None})


def run_command(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    if args.command == "generate":
        generate_command(config.with_seed(), args.out, args.force)
    elif args.command == "train":
        train_command(config)
    elif args.command == "eval":
        if config.data_dir is None:
            msg = "eval needs --data"
            raise UsageError(msg)
        try:
            role = Role(args.role)
        except ValueError:
            msg = f"unknown role {args.role!r}"
            raise UsageError(msg) from None
        eval_command(args.checkpoint_a, args.checkpoint_b, config.data_dir, args.out, role)
    elif args.command == "sweep":
        grid = [axis.strip() for axis in args.grid.split(",") if axis.strip()]
        sweep_command(config, parse_int_list(args.labels), parse_int_list(args.seeds), grid, args.ablate)
    elif args.command == "pseudolabel":
        pseudolabel_command(config, args.checkpoint, args.out)


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    if args.debug:
        setup_logging("DEBUG")
    elif args.verbose:
        setup_logging("INFO")
    try:
        run_command(args)
    except SsdaError as e:
        log.error(f"{type(e).__name__}: {e}")  # noqa: TRY400
        sys.exit(e.exit_code)
    except Exception:
        log.exception("unexpected error")
        sys.exit(1)


if __name__ == "__main__":
    main()
