"""
Command-line interface

Usage:
    surgeon <synth|train|embed|eval|bench|gradcheck> [options]

Exit codes: 0 success, 1 usage error, 2 input or validation error,
3 numerical failure.
"""

import argparse
import logging
import shutil
import sys
import traceback
from pathlib import Path
from typing import List, Optional

from . import __version__
from .bench import batch_size_sweep, constraint_scaling, embedding_size_sweep, run_bench
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, apply_overrides, load_config
from .dataio import atomic_write_text, generate_sbm, load_dataset, save_embeddings, write_dataset
from .exceptions import (
    ModeMismatchError,
    SurgeonError,
    SurgeonInputError,
    SurgeonUsageError,
    exit_code_for,
)
from .gradcheck import run_gradcheck_suite
from .probe import evaluate, fit_probe, stable_rank
from .trainer import GraphSurgeon

logger = logging.getLogger("graph_surgeon")


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting with status 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SurgeonUsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration file")
    common.add_argument("--seed", type=int, help="Seed for every random stream")
    common.add_argument("--mode", choices=["pre", "post"], help="Augmentation placement")
    common.add_argument("--constraint", choices=["row", "column"],
                        help="Constraint Gram orientation")
    common.add_argument("--gamma", type=float, help="Constraint weight")
    common.add_argument("--epochs", type=int, help="Training epochs")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--dataset", help="Dataset directory")
    common.add_argument("--checkpoint", help="Checkpoint file (default: OUT/best.gsrg)")
    common.add_argument("--debug", action="store_true", help="Enable debug logging")

    parser = _Parser(
        prog="surgeon",
        description=f"GraphSurgeon v{__version__}: self-supervised graph embeddings "
                    "with learned augmentations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate the SBM benchmark dataset:
  surgeon synth --out data/sbm

  # Train in post-augmentation mode with the column constraint:
  surgeon train --dataset data/sbm --mode post --constraint column --out runs/post

  # Evaluate the best checkpoint with a linear probe:
  surgeon eval --dataset data/sbm --mode post --out runs/post

  # Compare runtime and memory of all four variants:
  surgeon bench --dataset data/sbm --scaling 1000,2000,4000
        """,
    )
    parser.add_argument("--version", action="version", version=f"GraphSurgeon v{__version__}")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    commands.add_parser("synth", parents=[common], help="Generate an SBM dataset directory")
    commands.add_parser("train", parents=[common], help="Train and checkpoint a model")
    commands.add_parser("embed", parents=[common], help="Write embeddings of a checkpoint")
    commands.add_parser("eval", parents=[common], help="Probe a checkpoint on the test split")
    bench = commands.add_parser("bench", parents=[common], help="Benchmark pre/post x row/column")
    bench.add_argument("--scaling",
                       help="Comma separated node counts for the constraint memory sweep")
    bench.add_argument("--batch-sizes", dest="batch_sizes",
                       help="Comma separated batch sizes to sweep")
    bench.add_argument("--embed-dims", dest="embed_dims",
                       help="Comma separated embedding sizes to sweep")
    commands.add_parser("gradcheck", parents=[common], help="Verify backward rules numerically")
    return parser


def _output_dir(config: RunConfig) -> Path:
    path = Path(config.out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise SurgeonInputError(f"cannot create output directory: {e.strerror}", path=path) from e
    return path


def _require_dataset(config: RunConfig):
    if not config.dataset:
        raise SurgeonUsageError("no dataset given (use --dataset or [dataset] path)")
    dataset = load_dataset(config.dataset)
    if config.task is not None and dataset.meta.task is not config.task:
        raise ModeMismatchError(
            f"dataset task is {dataset.meta.task.value} but the configuration expects "
            f"{config.task.value}", path=config.dataset,
        )
    return dataset


def _probe_score(config: RunConfig, embeddings, dataset, split: str):
    probe = fit_probe(embeddings, dataset.labels, dataset.splits.train,
                      epochs=config.probe.epochs, lr=config.probe.lr,
                      standardize=config.probe.standardize)
    return evaluate(probe, embeddings, dataset.labels, dataset.splits.get(split))


def cmd_synth(config: RunConfig) -> int:
    """Generate an SBM dataset and write it to the output directory"""
    bundle = generate_sbm(config.synth)
    out = _output_dir(config)
    try:
        write_dataset(bundle, out)
    except OSError as e:
        raise SurgeonInputError(f"cannot write dataset: {e.strerror}", path=out) from e
    print(bundle.meta.summary())
    return 0


def cmd_train(config: RunConfig) -> int:
    """
    Train, checkpoint periodically and keep the best-validation checkpoint

    Writes ``checkpoints/epoch_NNNN.gsrg``, ``best.gsrg``, ``history.csv``
    and ``checkpoints.csv`` under the output directory.
    """
    dataset = _require_dataset(config)
    out = _output_dir(config)
    checkpoint_dir = out / "checkpoints"
    checkpoint_dir.mkdir(exist_ok=True)
    trainer = GraphSurgeon(config.train)
    scores = []
    best = {"epoch": None, "value": float("-inf")}

    def on_checkpoint(epoch, model, record):
        path = checkpoint_dir / f"epoch_{epoch:04d}.gsrg"
        save_checkpoint(path, model)
        metrics = _probe_score(config, trainer.embed(dataset, model), dataset, "val")
        scores.append((epoch, metrics.name, metrics.value))
        logger.info(f"epoch {epoch}: val {metrics.name}={metrics.value:.4f}")
        if metrics.value > best["value"] or best["epoch"] is None:
            best.update(epoch=epoch, value=metrics.value)
            shutil.copyfile(path, out / "best.gsrg")

    try:
        _, history = trainer.fit(dataset, on_checkpoint=on_checkpoint)
    except OSError as e:
        raise SurgeonInputError(f"cannot write checkpoint: {e.strerror}", path=out) from e

    atomic_write_text(out / "history.csv", history.to_csv())
    lines = ["epoch,val_metric,val_value\n"]
    lines += [f"{e},{name},{value!r}\n" for e, name, value in scores]
    atomic_write_text(out / "checkpoints.csv", "".join(lines))
    logger.info(f"Best validation score {best['value']:.4f} at epoch {best['epoch']}")
    return 0


def _load_model(config: RunConfig):
    path = config.checkpoint_path
    if not path.is_file():
        raise SurgeonInputError("checkpoint not found", path=path)
    return load_checkpoint(path, config.train)


def cmd_embed(config: RunConfig) -> int:
    """Write the embeddings of a checkpoint as ``embeddings.gsem``"""
    dataset = _require_dataset(config)
    trainer = GraphSurgeon(config.train)
    embeddings = trainer.embed(dataset, _load_model(config))
    out = _output_dir(config)
    save_embeddings(out / "embeddings.gsem", embeddings)
    rows, cols = embeddings.shape
    logger.info(f"Wrote {rows}x{cols} embeddings to {out / 'embeddings.gsem'}")
    return 0


def cmd_eval(config: RunConfig) -> int:
    """Probe a checkpoint on the test split and write ``results.txt``"""
    dataset = _require_dataset(config)
    trainer = GraphSurgeon(config.train)
    embeddings = trainer.embed(dataset, _load_model(config))
    metrics = _probe_score(config, embeddings, dataset, "test")
    line = metrics.results_line("test", config.seed)
    out = _output_dir(config)
    atomic_write_text(out / "results.txt", line + "\n")
    logger.info(f"Embedding stable rank {stable_rank(embeddings):.3f}")
    print(line)
    return 0


def cmd_bench(config: RunConfig) -> int:
    """Benchmark every mode and constraint cell and write CSV tables"""
    dataset = _require_dataset(config)
    report = run_bench(dataset, config.train, config.bench)
    if config.bench.scaling:
        report.scaling = constraint_scaling(config.bench.scaling, config.train, config.synth)
    if config.bench.batch_sizes:
        report.batch_sizes = batch_size_sweep(dataset, config.train, config.bench.batch_sizes,
                                              config.probe)
    if config.bench.embed_dims:
        report.embed_dims = embedding_size_sweep(dataset, config.train, config.bench.embed_dims,
                                                 config.probe)
    out = _output_dir(config)
    atomic_write_text(out / "bench.csv", report.to_csv())
    if report.scaling:
        atomic_write_text(out / "scaling.csv", report.scaling_csv())
    if report.batch_sizes:
        atomic_write_text(out / "batch_sizes.csv", report.batch_sizes_csv())
    if report.embed_dims:
        atomic_write_text(out / "embed_dims.csv", report.embed_dims_csv())
    print(report.table())
    return 0


def cmd_gradcheck(config: RunConfig) -> int:
    """Run the finite-difference suite; fails with the names of bad ops"""
    report = run_gradcheck_suite()
    for line in report.lines():
        print(line)
    report.raise_for_failure()
    return 0


HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "embed": cmd_embed,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the ``surgeon`` console script"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            raise SurgeonUsageError("no command given")
    except SurgeonUsageError as e:
        print(f"surgeon: error: {e}", file=sys.stderr)
        return exit_code_for(e)

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    try:
        config = apply_overrides(load_config(args.config), args)
        return HANDLERS[args.command](config)
    except SurgeonError as e:
        logger.error(str(e))
        logger.debug(traceback.format_exc())
        return exit_code_for(e)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 1


if __name__ == "__main__":
    sys.exit(main())
