#!/usr/bin/env python3
"""
hmmforge Command Line

Subcommands:
    generate  synthetic HMM instance -> train.seq, val.seq, generator.json
    ingest    character corpus -> train.seq, val.seq, vocab.json
    train     fit a model (--method beliefnet | baumwelch | spectral)
    eval      validation loss and perplexity of a model file
    inspect   most probable glyphs of every hidden state -> emissions.csv
    sweep     candidate-dimension sweep -> sweep.csv, sweep_summary.txt
    replay    re-run a command from its manifest.json

Every command writes its artifacts and one manifest.json into --out.

Exit codes: 0 ok, 2 usage or input error, 3 rank deficiency,
4 numeric failure (gradient overflow, non-convergence).

Run: python hmmforge.py <command> --help
"""

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, Field

# Add current directory to path for imports
sys.path.insert(0, str(Path(__file__).resolve().parent))

from config.settings import TOOL_VERSION, get_config, validate_config
from evaluation.harness import (
    FilterPredictor,
    SpectralPredictor,
    UniformPredictor,
    emission_report,
    evaluate,
    load_predictor,
    metrics,
    perplexity,
)
from evaluation.sweep import METHODS, sweep
from hmm.errors import (
    GradientOverflowError,
    HmmForgeError,
    RankDeficiencyError,
    StationaryDistributionError,
    VocabularyMismatchError,
)
from hmm.storage import (
    read_dataset,
    read_json,
    read_model,
    write_curve,
    write_csv,
    write_dataset,
    write_json,
    write_model,
)
from ingestion.chunking import build_vocab, chunk, load_corpus, read_vocab, split, write_vocab
from ingestion.synthetic import LAMBDA_PRESETS, SyntheticConfig, make_instance
from learners.baum_welch import EmConfig, fit
from learners.beliefnet import GridSpec, TrainConfig, grid_search, train
from learners.logits import write_logits
from learners.spectral import fit_spectral, select_rank, write_rank_report, write_spectral

logger = logging.getLogger("hmmforge")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RANK_DEFICIENCY = 3
EXIT_NUMERIC = 4

MANIFEST_NAME = "manifest.json"

BELIEFNET_ITERS = 2000
BELIEFNET_TEXT_ITERS = 4000
EM_ITERS = 20


class RunManifest(BaseModel):
    """Everything needed to re-run one command into the same directory."""
    version: int = 1
    command: str
    argv: List[str]
    config: Dict[str, Any]
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    tool_version: str = TOOL_VERSION
    started_at: str
    finished_at: Optional[str] = None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _configure_logging() -> None:
    level = get_config().runtime.log_level
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def _banner(title: str) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)


def _lambda_value(text: str) -> float:
    if text in LAMBDA_PRESETS:
        return LAMBDA_PRESETS[text]
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a number or one of {sorted(LAMBDA_PRESETS)}, got {text!r}"
        )


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


class Run:
    """Output directory plus the manifest being assembled for it."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str]):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        config = {
            key: (str(value) if isinstance(value, Path) else value)
            for key, value in vars(args).items()
            if key != "handler"
        }
        self.manifest = RunManifest(
            command=args.command,
            argv=list(argv),
            config=config,
            seed=getattr(args, "seed", None),
            started_at=_now(),
        )

    def input(self, name: str, path) -> Path:
        self.manifest.inputs[name] = str(path)
        return Path(path)

    def output(self, name: str) -> Path:
        path = self.out / name
        self.manifest.outputs[name] = str(path)
        return path

    def finish(self) -> Path:
        self.manifest.finished_at = _now()
        path = write_json(self.out / MANIFEST_NAME, self.manifest)
        logger.info(f"[CLI] Manifest written to {path}")
        return path


def _resolve_datasets(args: argparse.Namespace, run: Run):
    data = Path(args.data) if args.data else None
    train_path = args.train or (data / "train.seq" if data else None)
    val_path = args.val or (data / "val.seq" if data else None)
    if train_path is None or val_path is None:
        raise ValueError("pass --data DIR or both --train and --val")
    train_ds = read_dataset(run.input("train", train_path))
    val_ds = read_dataset(run.input("val", val_path))
    if train_ds.m != val_ds.m:
        raise ValueError(f"train m={train_ds.m} and validation m={val_ds.m} differ")
    return train_ds, val_ds


def cmd_generate(args: argparse.Namespace, run: Run) -> int:
    cfg = SyntheticConfig(
        d=args.d,
        m=args.m,
        n_train=args.n,
        lam=args.lam,
        temp_A=args.temp_a,
        temp_C=args.temp_c,
        t=args.t,
        val_fraction=args.val_fraction,
        seed=args.seed,
    )
    instance = make_instance(cfg)
    write_dataset(run.output("train.seq"), instance.train)
    write_dataset(run.output("val.seq"), instance.val)
    write_model(run.output("generator.json"), instance.params)

    oracle = evaluate(FilterPredictor(instance.params, name="oracle"), instance.val)
    _banner("GENERATE COMPLETE")
    print(f"d={cfg.d}, m={cfg.m}, lambda={cfg.lam}, seed={cfg.seed}")
    print(f"Train sequences: {instance.train.n_sequences} x {cfg.t}")
    print(f"Validation sequences: {instance.val.n_sequences} x {cfg.t}")
    print(f"Oracle validation loss: {oracle:.4f} nats")
    print(f"Output: {run.out}")
    print("=" * 60)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace, run: Run) -> int:
    corpus = load_corpus(run.input("corpus", args.corpus))
    vocab = build_vocab(corpus)
    dataset = chunk(corpus, vocab, args.t, args.stride)
    train_ds, val_ds = split(dataset, args.val_fraction, args.seed)

    write_dataset(run.output("train.seq"), train_ds)
    write_dataset(run.output("val.seq"), val_ds)
    write_vocab(run.output("vocab.json"), vocab)

    _banner("INGEST COMPLETE")
    print(f"Characters: {len(corpus)}, vocabulary m={vocab.m}")
    print(f"Chunks: {dataset.n_sequences} ({train_ds.n_sequences} train / {val_ds.n_sequences} val)")
    print(f"Random baseline perplexity: {vocab.m}")
    print(f"Output: {run.out}")
    print("=" * 60)
    return EXIT_OK


def _default_iters(args: argparse.Namespace) -> int:
    """Iteration budget when --iters is not given."""
    if args.method == "baumwelch":
        return EM_ITERS
    # ingest leaves a vocab.json next to text splits
    if args.data and (Path(args.data) / "vocab.json").exists():
        return BELIEFNET_TEXT_ITERS
    return BELIEFNET_ITERS


def _train_beliefnet(args, run, train_ds, val_ds) -> float:
    cfg = TrainConfig(
        batch_size=args.batch,
        max_iters=_default_iters(args) if args.iters is None else args.iters,
        lr=args.lr,
        dropout=args.dropout,
        val_every=args.val_every,
        seed=args.seed,
        weight_decay=args.weight_decay,
        schedule=args.schedule,
        patience=args.patience,
    )
    if args.grid:
        grid = GridSpec(lrs=tuple(args.lrs), dropouts=tuple(args.dropouts))
        outcome = grid_search(train_ds, args.d, grid, val_ds, base=cfg)
        params, result = outcome.params, outcome.result
        write_csv(run.output("grid.csv"), pd.DataFrame(outcome.table, columns=["lr", "dropout", "loss"]))
        print(f"Grid selected lr={outcome.config.lr}, dropout={outcome.config.dropout}")
    else:
        params, result = train(train_ds, args.d, cfg, val_ds)

    write_model(run.output("model.json"), params)
    write_logits(run.output("logits.json"), result.logits)
    write_curve(run.output("training_loss.csv"), result.training_curve)
    write_curve(run.output("validation_loss.csv"), result.validation_curve)
    return evaluate(FilterPredictor(params, name="beliefnet"), val_ds)


def _train_baumwelch(args, run, train_ds, val_ds) -> float:
    cfg = EmConfig(
        max_iters=_default_iters(args) if args.iters is None else args.iters,
        restarts=args.restarts,
        seed=args.seed,
        ll_tolerance=args.tol,
    )
    params, report = fit(train_ds, args.d, cfg, val_ds)
    trajectory = report.trajectories[report.selected_restart]
    n_tokens = train_ds.n_tokens

    write_model(run.output("model.json"), params)
    write_csv(run.output("em_trajectory.csv"), report.to_frame())
    write_json(run.output("fit_summary.json"), report.summary())
    # loglik i is that of the parameters entering iteration i+1
    write_curve(
        run.output("training_loss.csv"),
        [(i + 1, -loglik / n_tokens) for i, loglik in enumerate(trajectory)],
    )
    write_curve(run.output("validation_loss.csv"), [(len(trajectory), report.validation_loss)])
    return report.validation_loss


def _train_spectral(args, run, train_ds, val_ds) -> float:
    if args.max_d is not None:
        model, table = select_rank(train_ds, val_ds, args.max_d)
        write_csv(run.output("rank_selection.csv"), pd.DataFrame(table, columns=["d", "loss"]))
        print(f"Selected rank d={model.d}")
    else:
        model = fit_spectral(train_ds, args.d)
    write_spectral(run.output("spectral_model.json"), model)
    write_rank_report(run.output("rank_report.csv"), model.rank_report)
    return evaluate(SpectralPredictor(model), val_ds)


TRAINERS = {
    "beliefnet": _train_beliefnet,
    "baumwelch": _train_baumwelch,
    "spectral": _train_spectral,
}


def cmd_train(args: argparse.Namespace, run: Run) -> int:
    if args.d is None and not (args.method == "spectral" and args.max_d is not None):
        raise ValueError("--d is required (spectral also accepts --max-d)")
    train_ds, val_ds = _resolve_datasets(args, run)
    logger.info(f"[CLI] Training {args.method} on {train_ds.n_sequences} sequences (m={train_ds.m})")

    val_loss = TRAINERS[args.method](args, run, train_ds, val_ds)

    _banner("TRAIN COMPLETE")
    print(f"Method: {args.method}")
    print(f"Validation loss: {val_loss:.4f} nats (perplexity {perplexity(val_loss):.3f})")
    print(f"Output: {run.out}")
    print("=" * 60)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, run: Run) -> int:
    dataset = read_dataset(run.input("data", args.data))
    if args.model == "uniform":
        predictor = UniformPredictor(dataset.m)
    else:
        predictor = load_predictor(run.input("model", args.model))

    result = metrics(predictor, dataset)
    write_json(run.output("metrics.json"), result)

    _banner("EVALUATION")
    print(f"Model: {args.model}")
    print(f"Sequences: {result.n_sequences}, m={result.m}")
    print(f"Loss: {result.loss:.4f} nats")
    print(f"Perplexity: {result.perplexity:.3f}")
    print("=" * 60)
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace, run: Run) -> int:
    predictor = load_predictor(run.input("model", args.model))
    params = getattr(predictor, "params", None)
    if params is None:
        raise ValueError(f"{args.model}: spectral models have no per-state emission rows")
    labels = None
    if args.vocab:
        vocab = read_vocab(run.input("vocab", args.vocab))
        if vocab.m != params.m:
            raise VocabularyMismatchError(f"model has m={params.m} but {args.vocab} lists {vocab.m} glyphs")
        labels = vocab.metadata()

    report = emission_report(params, labels, args.top_k)
    write_csv(run.output("emissions.csv"), report)

    _banner("EMISSIONS")
    for state, rows in report.groupby("state", sort=True):
        listed = ", ".join(f"{glyph!r} {p:.3f}" for glyph, p in zip(rows["glyph"], rows["probability"]))
        print(f"State {state}: {listed}")
    print("=" * 60)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, run: Run) -> int:
    train_ds, val_ds = _resolve_datasets(args, run)
    truth_path = args.truth
    if truth_path is None and args.data and (Path(args.data) / "generator.json").exists():
        truth_path = Path(args.data) / "generator.json"
    truth = read_model(run.input("truth", truth_path)) if truth_path else None

    train_config = TrainConfig(
        batch_size=args.batch,
        max_iters=args.iters,
        lr=args.lr,
        dropout=args.dropout,
        val_every=args.val_every,
    )
    em_config = EmConfig(max_iters=args.em_iters, restarts=args.restarts)
    grid = GridSpec(lrs=tuple(args.lrs), dropouts=tuple(args.dropouts)) if args.grid else None
    jobs = args.jobs if args.jobs is not None else get_config().runtime.jobs

    report = sweep(
        train_ds,
        val_ds,
        args.methods,
        args.dims,
        args.seed,
        truth=truth,
        jobs=jobs,
        train_config=train_config,
        em_config=em_config,
        grid=grid,
    )
    report.write_csv(run.output("sweep.csv"))
    summary = report.summary_table()
    summary_path = run.output("sweep_summary.txt")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(summary + "\n")

    _banner("SWEEP COMPLETE")
    print(summary)
    print("=" * 60)
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    manifest = read_json(args.manifest, RunManifest)
    if manifest.command == "replay":
        raise ValueError("a replay manifest cannot be replayed")
    out = args.out or manifest.config.get("out")
    replay_argv = list(manifest.argv) + ["--out", str(out)]
    if manifest.seed is not None:
        replay_argv += ["--seed", str(manifest.seed)]
    logger.info(f"[CLI] Replaying {manifest.command} into {out}")
    return main(replay_argv)


def build_parser() -> argparse.ArgumentParser:
    runs_dir = Path(get_config().output.runs_dir)
    parser = argparse.ArgumentParser(
        prog="hmmforge",
        description="Learn HMM parameters by Belief Net, Baum-Welch or spectral moments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None, help="Random seed (default: HMMFORGE_SEED)")

    def add_out(p, command):
        p.add_argument("--out", type=Path, default=runs_dir / command, help="Output directory")

    def add_data(p):
        p.add_argument("--data", type=str, default=None, help="Directory holding train.seq and val.seq")
        p.add_argument("--train", type=str, default=None, help="Training dataset file")
        p.add_argument("--val", type=str, default=None, help="Validation dataset file")

    def add_beliefnet(p):
        p.add_argument("--lr", type=float, default=0.01, help="AdamW learning rate")
        p.add_argument("--batch", type=int, default=10, help="Mini-batch size")
        p.add_argument("--dropout", type=float, default=0.0, help="Posterior dropout rate")
        p.add_argument("--val-every", type=int, default=50, help="Validation interval (iterations)")
        p.add_argument("--grid", action="store_true", help="Grid search over --lrs x --dropouts")
        p.add_argument("--lrs", type=_float_list, default=[0.01, 0.1], help="Grid learning rates")
        p.add_argument("--dropouts", type=_float_list, default=[0.0, 0.1], help="Grid dropout rates")

    p = sub.add_parser("generate", help="Sample a synthetic HMM instance")
    p.add_argument("--d", type=int, required=True, help="Hidden states")
    p.add_argument("--m", type=int, required=True, help="Observation symbols")
    p.add_argument("--n", type=int, required=True, help="Training sequences")
    p.add_argument("--t", type=int, default=256, help="Sequence length")
    p.add_argument("--lambda", dest="lam", type=_lambda_value, default=0.9,
                   help=f"Cyclic weight in [0, 1] or a preset {sorted(LAMBDA_PRESETS)}")
    p.add_argument("--temp-a", type=float, default=0.1, help="Transition softmax temperature")
    p.add_argument("--temp-c", type=float, default=0.01, help="Emission softmax temperature")
    p.add_argument("--val-fraction", type=float, default=0.10, help="Validation size as a fraction of --n")
    add_seed(p)
    add_out(p, "generate")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("ingest", help="Cut a character corpus into sequences")
    p.add_argument("--corpus", type=str, required=True, help="UTF-8 file or directory of .txt files")
    p.add_argument("--t", type=int, default=256, help="Chunk length")
    p.add_argument("--stride", type=int, default=None, help="Chunk stride (default: --t)")
    p.add_argument("--val-fraction", type=float, default=0.10, help="Validation fraction")
    add_seed(p)
    add_out(p, "ingest")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("train", help="Fit a model")
    p.add_argument("--method", choices=sorted(TRAINERS), required=True)
    p.add_argument("--d", type=int, default=None, help="Candidate hidden dimension")
    p.add_argument("--iters", type=int, default=None,
                   help="Iterations (default: beliefnet 2000, or 4000 when --data holds a vocab.json; baumwelch 20)")
    add_beliefnet(p)
    p.add_argument("--weight-decay", type=float, default=0.01, help="AdamW decoupled weight decay")
    p.add_argument("--schedule", choices=["constant", "cosine"], default="constant")
    p.add_argument("--patience", type=int, default=None, help="Early-stop after this many stale validations")
    p.add_argument("--restarts", type=int, default=5, help="EM random restarts")
    p.add_argument("--tol", type=float, default=0.0, help="EM log-likelihood improvement tolerance")
    p.add_argument("--max-d", type=int, default=None, help="Spectral: pick the best rank in 1..max-d")
    add_data(p)
    add_seed(p)
    add_out(p, "train")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Validation loss and perplexity")
    p.add_argument("--model", type=str, required=True, help="Model, logits or spectral JSON, or 'uniform'")
    p.add_argument("--data", type=str, required=True, help="Dataset file")
    add_out(p, "eval")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("inspect", help="Most probable glyphs of every hidden state")
    p.add_argument("--model", type=str, required=True, help="Model or logits JSON")
    p.add_argument("--vocab", type=str, default=None, help="vocab.json written by ingest (default: symbol ids)")
    p.add_argument("--top-k", type=int, default=5, help="Symbols listed per state")
    add_out(p, "inspect")
    p.set_defaults(handler=cmd_inspect)

    p = sub.add_parser("sweep", help="Candidate-dimension sweep")
    p.add_argument("--dims", type=_int_list, required=True, help="Comma-separated candidate dimensions")
    p.add_argument("--methods", type=_str_list, default=["beliefnet", "baumwelch", "spectral", "random"],
                   help=f"Comma-separated subset of {list(METHODS)}")
    p.add_argument("--truth", type=str, default=None, help="Generator JSON for the oracle baseline")
    p.add_argument("--iters", type=int, default=2000, help="Belief Net iterations")
    add_beliefnet(p)
    p.add_argument("--em-iters", type=int, default=20, help="EM iterations")
    p.add_argument("--restarts", type=int, default=5, help="EM random restarts")
    p.add_argument("--jobs", type=int, default=None, help="Parallel workers (default: HMMFORGE_JOBS)")
    add_data(p)
    add_seed(p)
    add_out(p, "sweep")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("replay", help="Re-run a command from its manifest")
    p.add_argument("manifest", type=str, help="Path to manifest.json")
    p.add_argument("--out", type=Path, default=None, help="Output directory (default: the recorded one)")
    p.set_defaults(handler=cmd_replay)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parses argv, runs one command, and maps failures to exit codes.

    Args:
        argv: Command line without the program name (default: sys.argv[1:])

    Returns:
        0 on success, 2 for bad arguments or input, 3 for spectral rank
        deficiency, 4 for numeric failure
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config = get_config()
    except ValueError as e:
        print(f"\n[ERROR] Configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    _configure_logging()
    validate_config(config)

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if hasattr(args, "seed") and args.seed is None:
        args.seed = config.runtime.default_seed

    try:
        if args.command == "replay":
            return cmd_replay(args)
        run = Run(args, argv)
        try:
            return args.handler(args, run)
        finally:
            run.finish()
    except RankDeficiencyError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_RANK_DEFICIENCY
    except (GradientOverflowError, StationaryDistributionError, ArithmeticError) as e:
        print(f"[ERROR] numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HmmForgeError, ValueError, OSError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
