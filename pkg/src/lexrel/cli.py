"""Command-line front door.

Subcommands: split, gen-dataset, train, self-train, run, report. Every
stochastic command requires an explicit ``--seed``. Exit codes: 0 on
success, 2 for configuration problems (also used by argparse itself),
3 for malformed input files, 4 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ExperimentConfig
from .data import (
    SplitBundle,
    filter_by_vocabulary,
    lexical_split,
    load_embeddings,
    load_pairs,
    partition_train,
    pairs_sha256,
    save_pairs,
    write_split_manifest,
)
from .errors import ConfigError, FormatError, LexrelError
from .experiment import (
    RECORDS_FILE,
    RunAudit,
    derive_seed,
    record_line,
    run_cell,
    run_experiment,
    task_bundles_from_bundle,
)
from .multitask import save_checkpoint
from .report import build_report, load_records, render_text, write_report_json
from .taxonomy import SampleSpec, load_taxonomy, sample_pairs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_RUNTIME = 4

PART_FILES = ("train", "validation", "unlabeled", "test")


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {p}")
    return p


def cmd_split(args: argparse.Namespace) -> int:
    pairs = load_pairs(_require_file(args.pairs, "pairs"))
    dropped_oov = 0
    if args.embeddings:
        table = load_embeddings(_require_file(args.embeddings, "embeddings"))
        pairs, dropped_oov = filter_by_vocabulary(pairs, table)
    split = lexical_split(pairs, args.test_vocab_fraction, seed=args.seed)
    bundle = partition_train(split.train_side, args.unlabeled_fraction,
                             args.validation_fraction,
                             seed=derive_seed(args.seed, "partition"),
                             stratified=not args.no_stratify)
    bundle = bundle.with_test(split.test)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for part in PART_FILES:
        save_pairs(getattr(bundle, part), out / f"{part}.tsv")
    write_split_manifest(out / "manifest.json", bundle, seed=args.seed,
                         test_vocab_fraction=args.test_vocab_fraction,
                         unlabeled_fraction=args.unlabeled_fraction,
                         validation_fraction=args.validation_fraction,
                         discarded=split.discarded, dropped_oov=dropped_oov)
    print(f"split written to {out} "
          f"(train={len(bundle.train)} validation={len(bundle.validation)} "
          f"unlabeled={len(bundle.unlabeled)} test={len(bundle.test)} "
          f"discarded={split.discarded} oov_dropped={dropped_oov})")
    return EXIT_OK


def cmd_gen_dataset(args: argparse.Namespace) -> int:
    graph = load_taxonomy(_require_file(args.taxonomy, "taxonomy"))
    counts = {rel: getattr(args, rel) for rel in ("hypernym", "synonym", "cohyponym", "random")
              if getattr(args, rel) > 0}
    if not counts:
        raise ConfigError("request at least one pair (--hypernym/--synonym/--cohyponym/--random)")
    spec = SampleSpec(counts=counts, min_random_distance=args.min_random_distance,
                      seed=args.seed)
    result = sample_pairs(graph, spec)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_pairs(result.pairs, out)
    produced: dict[str, int] = {}
    for p in result.pairs:
        produced[p.label] = produced.get(p.label, 0) + 1
    manifest = {
        "version": 1,
        "seed": args.seed,
        "min_random_distance": args.min_random_distance,
        "requested": counts,
        "produced": produced,
        "shortfall": result.shortfall,
        "sha256": pairs_sha256(result.pairs),
    }
    with open(out.with_suffix(out.suffix + ".manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"wrote {len(result.pairs)} pairs to {out}")
    if result.shortfall:
        detail = ", ".join(f"{r}: {n}" for r, n in sorted(result.shortfall.items()))
        print(f"shortfall: {detail}", file=sys.stderr)
        if args.strict:
            raise LexrelError("generation shortfall with --strict set")
    return EXIT_OK


def _load_split_dir(split_dir: str) -> SplitBundle:
    base = Path(split_dir)
    if not base.is_dir():
        raise ConfigError(f"split directory not found: {base}")
    parts = {}
    for part in PART_FILES:
        parts[part] = load_pairs(_require_file(str(base / f"{part}.tsv"), f"{part} part"))
    return SplitBundle(**parts)


def _config_for_split_dir(args: argparse.Namespace, regimes: tuple[str, ...]) -> ExperimentConfig:
    base = Path(args.split_dir)
    return ExperimentConfig(
        dataset=str(base / "train.tsv"),
        embeddings=args.embeddings,
        tasks=tuple(t.strip() for t in args.tasks.split(",") if t.strip()),
        regimes=regimes,
        seeds=(args.seed,),
        dataset_name=base.name,
        random_label=args.random_label,
        out_dir=args.out_dir,
        hidden_layers=tuple(int(w) for w in args.hidden_layers.split(",") if w.strip()),
        batch_size=args.batch_size,
        epochs=args.epochs,
        patience=args.patience,
        learning_rate=args.learning_rate,
        rho=args.rho,
        selflearn_n=args.selflearn_n if getattr(args, "selflearn_n", 0) else None,
        selflearn_max_iterations=getattr(args, "selflearn_max_iterations", 1000),
        retrain_mode=getattr(args, "retrain_mode", "warm_start"),
    )


def _run_single_regime(args: argparse.Namespace, regime_for: dict[int, str]) -> int:
    bundle = _load_split_dir(args.split_dir)
    table = load_embeddings(_require_file(args.embeddings, "embeddings"))
    n_tasks = len([t for t in args.tasks.split(",") if t.strip()])
    regime = regime_for[min(n_tasks, 2)]
    cfg = _config_for_split_dir(args, regimes=(regime,))

    tasks = task_bundles_from_bundle(bundle, table, cfg.tasks, cfg.random_label)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    audit = RunAudit()
    records, models = run_cell(cfg, regime, args.seed, tasks, table, audit, out)
    audit.verify_test_isolation()
    audit.write(out / "audit.log")

    with open(out / RECORDS_FILE, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_line(rec) + "\n")
    if args.checkpoint:
        for name, model in models:
            save_checkpoint(model, out / f"model_{name}.npz")

    for rec in records:
        print(f"{rec['regime']} task={rec['task']} "
              f"accuracy={rec['accuracy']:.3f} macro_f1={rec['macro_f1']:.3f}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    return _run_single_regime(args, {1: "nn_single", 2: "multitask"})


def cmd_self_train(args: argparse.Namespace) -> int:
    return _run_single_regime(args, {1: "self_learning", 2: "multitask_self_learning"})


def cmd_run(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_file(_require_file(args.config, "config"))
    if args.out_dir:
        cfg.out_dir = args.out_dir
    records_path = run_experiment(cfg)
    print(f"records written to {records_path}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    records = load_records(args.records)
    report = build_report(records)
    if args.json:
        write_report_json(report, args.json)
    sys.stdout.write(render_text(report))
    return EXIT_OK


def _add_training_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden-layers", default="50,50",
                   help="comma-separated trunk widths (default: 50,50)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--rho", type=float, default=0.9)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexrel",
        description="Train and evaluate semantic-relation classifiers "
                    "(multi-task and self-learning) over word-embedding pair features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="lexically split a pair file and partition the train side")
    p.add_argument("--pairs", required=True, help="input pair TSV")
    p.add_argument("--embeddings", help="optional embedding file: drop out-of-vocabulary pairs first")
    p.add_argument("--test-vocab-fraction", type=float, default=0.4)
    p.add_argument("--unlabeled-fraction", type=float, default=0.6)
    p.add_argument("--validation-fraction", type=float, default=0.3)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("gen-dataset", help="sample relation pairs from a taxonomy export")
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--hypernym", type=int, default=0)
    p.add_argument("--synonym", type=int, default=0)
    p.add_argument("--cohyponym", type=int, default=0)
    p.add_argument("--random", type=int, default=0)
    p.add_argument("--min-random-distance", type=int, default=7)
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero if any relation count falls short")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output pair TSV path")
    p.set_defaults(func=cmd_gen_dataset)

    for name, func, blurb in (
        ("train", cmd_train, "supervised training (single-task or multi-task)"),
        ("self-train", cmd_self_train, "self-learning training (single- or multi-task)"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--split-dir", required=True, help="directory written by `lexrel split`")
        p.add_argument("--embeddings", required=True)
        p.add_argument("--tasks", required=True,
                       help="comma-separated relation labels, each classified against the random class")
        p.add_argument("--random-label", default="random")
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--checkpoint", action="store_true", help="also save model checkpoint(s)")
        _add_training_options(p)
        if name == "self-train":
            p.add_argument("--selflearn-n", type=int, default=0,
                           help="pseudo-labels added per iteration (0 = auto)")
            p.add_argument("--selflearn-max-iterations", type=int, default=1000)
            p.add_argument("--retrain-mode", choices=("warm_start", "from_scratch"),
                           default="warm_start")
        p.set_defaults(func=func)

    p = sub.add_parser("run", help="run the full regime x seed grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", help="override the config's out_dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render comparison tables from records files")
    p.add_argument("records", nargs="+", help="records.jsonl or report.json files")
    p.add_argument("--json", help="also write the machine-readable report here")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (LexrelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
