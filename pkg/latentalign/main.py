import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from latentalign import __version__
from latentalign.commands import evaluate, gen_data, run, sweep, train
from latentalign.config import parse_config, settings
from latentalign.errors import AlignerError, ConfigError

logger = logging.getLogger("latentalign")

COMMANDS = {
    "gen-data": gen_data,
    "train": train,
    "run": run,
    "eval": evaluate,
    "sweep": sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentalign",
        description="Align two diffusion samplers in a shared contrastive embedding space",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS), help="Subcommand to run")
    parser.add_argument("--config", type=Path, help="Flat key = value experiment file")
    parser.add_argument("--task", choices=["v2a", "a2v", "i2a", "a2i", "joint"])
    parser.add_argument("--lambda1", type=float, help="Latent step size for every generated modality")
    parser.add_argument("--lambda2", type=float, help="Prompt-embedding step size")
    parser.add_argument("--optim-start", type=float, help="Fraction of denoising steps left unguided")
    parser.add_argument("--inf-steps", type=int)
    parser.add_argument("--num-optim-steps", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--runs", type=int)
    parser.add_argument("--out", type=Path, help="Output directory for result stores and reports")
    parser.add_argument("--no-prompt-tuning", action="store_true")
    parser.add_argument("--stop-grad-denoiser", action="store_true", help="Treat the denoiser output as constant")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override any config key")
    parser.add_argument("--workers", type=int, help="Worker processes for run/sweep")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ...")
    return parser


def flags_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    flags: Dict[str, Any] = {
        "task": args.task,
        "lambda1": args.lambda1,
        "lambda2": args.lambda2,
        "optim_start": args.optim_start,
        "inf_steps": args.inf_steps,
        "num_optim_steps": args.num_optim_steps,
        "seed": args.seed,
        "runs": args.runs,
        "out_dir": args.out,
    }
    if args.no_prompt_tuning:
        flags["prompt_tuning"] = False
    if args.stop_grad_denoiser:
        flags["grad_through_denoiser"] = False
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        flags[key.strip().lower()] = value.strip()
    return flags


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: Dict[str, Any] = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.log_level:
        overrides["log_level"] = args.log_level.upper()
    saved = {key: getattr(settings, key) for key in overrides}
    for key, value in overrides.items():
        setattr(settings, key, value)
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        resolved = parse_config(args.config, flags_from_args(args))
        logger.info("latentalign %s: %s", __version__, args.command)
        return COMMANDS[args.command].run(resolved)
    except AlignerError as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"✗ Error: {e}")
        return 1
    finally:
        # --workers and --log-level hold for this invocation only
        for key, value in saved.items():
            setattr(settings, key, value)


if __name__ == "__main__":
    sys.exit(main())
