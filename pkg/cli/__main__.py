"""Command-line entry point: ``python -m cli <subcommand> [flags]``."""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from cli import commands
from config.config import (
    DEFAULT_CONFIG_PATH,
    DEFAULT_OUT_DIR,
    DEFAULT_THREADS,
    LOG_LEVEL,
    read_key_values,
    setup_directories,
    validate_config,
)
from config.schemas import ExperimentConfig, Variant
from utils.errors import TemplinkError
from utils.logger import LogContext, setup_logger

SUBCOMMANDS = ("generate", "split", "baseline", "pretrain", "train", "evaluate", "report", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="templink", description="Temporal link prediction experiments.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=str(DEFAULT_CONFIG_PATH), help="Experiment key=value config file")
    common.add_argument("--seed", type=int, default=None, help="Seed for every seeded section (overrides the file)")
    common.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="Worker threads for sample preparation")
    common.add_argument("--out-dir", default=str(DEFAULT_OUT_DIR), help="Run directory")
    common.add_argument("--protocol", default=None, help="Validation protocol: oot or edge")
    common.add_argument("--variant", default=None, help="Model variant, e.g. 2seal-rnn, seal, rnn, gcn-lpatt")
    common.add_argument("--features", default=None, help="Feature mode: et, et+sl, sl, modified-sl")
    common.add_argument("--hop", type=int, default=None, help="Enclosing subgraph hop count (1 or 2)")
    common.add_argument("--cap", type=int, default=None, help="Maximum subgraph nodes")
    common.add_argument("--alpha", type=float, default=None, help="Negatives per positive")

    helps = {
        "generate": "Generate the synthetic dataset, oracle and credit labels",
        "split": "Build train/val/test sample sets for one protocol",
        "baseline": "Score the test set with similarity heuristics",
        "pretrain": "Pretrain the node encoder and store embedded transactions",
        "train": "Train one model variant",
        "evaluate": "Score the test set with a trained model",
        "report": "Aggregate results into results.csv and results.txt",
        "pipeline": "Run every step for one seed",
    }
    for name in SUBCOMMANDS:
        cmd = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "baseline":
            cmd.add_argument("--kind", action="append", default=[], help="Heuristic (CN, AA, RA, Jaccard, PA); repeatable")
        if name == "train":
            cmd.add_argument("--attention", default="rnn", help="Link scorer for gcn-lpatt: rnn or a SEAL variant")
    return parser


def overrides(args: argparse.Namespace) -> Dict[str, str]:
    """Config keys set by flags; flags win over the file."""
    mapping = {
        "split.protocol": args.protocol,
        "model.variant": args.variant,
        "model.feature_mode": args.features,
        "subgraph.hop": args.hop,
        "subgraph.cap": args.cap,
        "split.alpha": args.alpha,
    }
    return {key: str(value) for key, value in mapping.items() if value is not None}


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    mapping = read_key_values(args.config)
    mapping.update(overrides(args))
    cfg = ExperimentConfig.from_mapping(mapping)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    validate_config(cfg)
    return cfg


def run(args: argparse.Namespace) -> None:
    cfg = load_config(args)
    ws = commands.Workspace(Path(args.out_dir))
    threads = max(1, args.threads)
    with LogContext(command=args.command, variant=cfg.model.variant.value, seed=cfg.run_seed):
        logging.info(f"Running {args.command} in {ws.root}")
        if args.command == "generate":
            commands.cmd_generate(ws, cfg)
        elif args.command == "split":
            commands.cmd_split(ws, cfg)
        elif args.command == "baseline":
            commands.cmd_baseline(ws, cfg, args.kind)
        elif args.command == "pretrain":
            commands.cmd_pretrain(ws, cfg)
        elif args.command == "train":
            commands.cmd_train(ws, cfg, threads, Variant.parse(args.attention))
        elif args.command == "evaluate":
            commands.cmd_evaluate(ws, cfg, threads)
        elif args.command == "report":
            commands.cmd_report(ws, cfg)
        else:
            commands.cmd_pipeline(ws, cfg, threads)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand.

    Returns:
        0 on success, 1 on a domain or I/O error (reported as one
        ``error: <ErrorClass>: <message>`` line on stderr). Usage errors exit
        with 2 from argparse.
    """
    args = build_parser().parse_args(argv)
    try:
        out_dir = setup_directories(args.out_dir)
        timestamp = time.strftime("%Y%m%d-%H%M%S")
        setup_logger(LOG_LEVEL, str(out_dir / "logs" / f"{args.command}-{timestamp}.log"))
        run(args)
    except (TemplinkError, OSError) as e:
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        message = str(e).replace("\n", " ")
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
