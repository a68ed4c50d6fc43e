"""Command-line interface.

Subcommands
-----------
train
    Fit a model on TSV corpus files and save the best checkpoint.
eval
    Score a corpus file with a saved checkpoint and report MAP/MRR.
sweep
    Cartesian grid search over architecture/optimizer settings;
    resumable (finished runs are skipped) with a ranked summary CSV.
ablate
    Train every requested variant over several seeds and print a
    comparison table with parameter and FLOP counts.
inspect-entropy
    Rank a corpus split's n-grams by the entanglement entropy of their
    states under a trained model.
inspect-neighbors
    Nearest neighbors of a word or n-gram by state fidelity.

Every training run writes a ``manifest.json`` capturing the fully
resolved configuration before any computation starts.

Configuration files are flat ``key = value`` text (``#`` comments);
command-line flags override file values.  Exit codes: 0 success, 1
numerical failure during a run, 2 usage/data errors.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, accounting, evaluation, interpret
from .checkpoint import CheckpointError, load_checkpoint
from .data import (
    CorpusFormatError,
    QACorpus,
    encode,
    load_corpus,
    load_split,
    tokenize,
)
from .linalg import NumericalError
from .model import ModelConfig
from .training import TrainConfig, TrainingDivergedError, fit

_CONFIG_KEYS = {
    "variant": str,
    "dim": int,
    "measurements": int,
    "gram_sizes": "int_list",
    "ee_hidden": "int_list",
    "learning_rate": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "optimizer": str,
    "seed": int,
    "train": str,
    "dev": str,
    "test": str,
    "format": str,
    "out_dir": str,
}


class UsageError(ValueError):
    pass


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in str(text).split(",") if p.strip() != "")
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


def load_config_file(path) -> dict:
    """Parse a flat ``key = value`` configuration file."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            kind = _CONFIG_KEYS.get(key)
            if kind is None:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            if kind == "int_list":
                values[key] = _parse_int_list(raw)
            else:
                try:
                    values[key] = kind(raw)
                except ValueError as exc:
                    raise UsageError(
                        f"{path}:{lineno}: bad value for {key}: {raw!r}"
                    ) from exc
    return values


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults <- config file <- explicit flags."""
    settings: dict = {
        "variant": "ee",
        "dim": 8,
        "measurements": 16,
        "gram_sizes": (2,),
        "ee_hidden": (),
        "learning_rate": 0.1,
        "batch_size": 32,
        "max_epochs": 50,
        "patience": 10,
        "optimizer": "sgd",
        "seed": 0,
        "train": None,
        "dev": None,
        "test": None,
        "format": "tsv",
        "out_dir": None,
    }
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            if _CONFIG_KEYS[key] == "int_list" and isinstance(flag, str):
                flag = _parse_int_list(flag)
            settings[key] = flag
    return settings


def _model_config(settings: dict) -> ModelConfig:
    ee_hidden = settings["ee_hidden"]
    if settings["variant"] not in ("ee", "ee-real"):
        ee_hidden = ()
    return ModelConfig(
        dim=settings["dim"],
        measurements=settings["measurements"],
        gram_sizes=tuple(settings["gram_sizes"]),
        variant=settings["variant"],
        ee_hidden=tuple(ee_hidden),
    )


def _train_config(settings: dict, seed=None) -> TrainConfig:
    return TrainConfig(
        learning_rate=settings["learning_rate"],
        batch_size=settings["batch_size"],
        max_epochs=settings["max_epochs"],
        patience=settings["patience"],
        optimizer=settings["optimizer"],
        seed=settings["seed"] if seed is None else seed,
    )


def _load_corpus(settings: dict) -> QACorpus:
    if not settings["train"]:
        raise UsageError("a training corpus is required (--train or config)")
    return load_corpus(
        settings["train"],
        dev_path=settings["dev"],
        test_path=settings["test"],
        fmt=settings["format"],
    )


def _write_manifest(out_dir: Path, command: str, settings: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "settings": {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in settings.items()
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--variant", choices=("ee", "se", "me", "ee-real"))
    p.add_argument("--dim", type=int)
    p.add_argument("--measurements", type=int)
    p.add_argument("--gram-sizes", dest="gram_sizes", help="e.g. 1,2")
    p.add_argument("--ee-hidden", dest="ee_hidden", help="e.g. 128")
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--optimizer", choices=("sgd", "adagrad"))
    p.add_argument("--seed", type=int)
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--format", choices=("tsv",))
    p.add_argument("--out-dir", dest="out_dir")


def _run_fit(settings: dict, out_dir, seed=None, quiet=False):
    corpus = _load_corpus(settings)
    model_config = _model_config(settings)
    train_config = _train_config(settings, seed=seed)
    log = None if quiet else (lambda line: print(line, file=sys.stderr))
    result = fit(corpus, model_config, train_config, out_dir=out_dir, log=log)
    return corpus, model_config, train_config, result


def _cmd_train(args) -> int:
    settings = _resolve(args)
    out_dir = Path(settings["out_dir"]) if settings["out_dir"] else None
    if out_dir is not None:
        _write_manifest(out_dir, "train", settings)
    corpus, model_config, _, result = _run_fit(settings, out_dir)
    monitor = "dev" if corpus.dev else "train"
    metrics = {
        "best_epoch": result.best_epoch,
        "monitor": monitor,
        f"{monitor}_map": result.best_metric,
        "epochs_run": len(result.history),
        "parameters": accounting.parameter_count(
            model_config, len(corpus.vocab)
        ),
    }
    if corpus.test:
        test_result = evaluation.evaluate(result.params, corpus.test)
        metrics["test_map"] = test_result.mean_average_precision
        metrics["test_mrr"] = test_result.mean_reciprocal_rank
    if out_dir is not None:
        with open(out_dir / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2)
            fh.write("\n")
    print(json.dumps(metrics, indent=2))
    if result.checkpoint_path is not None:
        print(f"checkpoint: {result.checkpoint_path}", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    params, vocab_list, _ = load_checkpoint(args.checkpoint)
    vocab = {tok: i for i, tok in enumerate(vocab_list)}
    records = load_split(args.data, vocab)
    result = evaluation.evaluate(params, records)
    print(f"MAP {result.mean_average_precision:.4f}")
    print(f"MRR {result.mean_reciprocal_rank:.4f}")
    print(
        f"questions {len(result.per_question)}"
        + (f" (skipped {result.num_skipped} without positives)"
           if result.num_skipped else "")
    )
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["qid", "average_precision", "reciprocal_rank"])
            for q in result.per_question:
                writer.writerow(
                    [q.qid, f"{q.average_precision:.6f}", f"{q.reciprocal_rank:.6f}"]
                )
        print(f"report: {args.report}", file=sys.stderr)
    return 0


def _grid_values(args, settings) -> list[dict]:
    axes: list[tuple[str, list]] = []
    if args.grid_dim:
        axes.append(("dim", [int(v) for v in args.grid_dim.split(",")]))
    if args.grid_measurements:
        axes.append(
            ("measurements", [int(v) for v in args.grid_measurements.split(",")])
        )
    if args.grid_gram_sizes:
        axes.append(
            (
                "gram_sizes",
                [_parse_int_list(part) for part in args.grid_gram_sizes.split("|")],
            )
        )
    if args.grid_lr:
        axes.append(
            ("learning_rate", [float(v) for v in args.grid_lr.split(",")])
        )
    if args.grid_batch_size:
        axes.append(
            ("batch_size", [int(v) for v in args.grid_batch_size.split(",")])
        )
    if not axes:
        raise UsageError("sweep needs at least one --grid-* axis")
    names = [name for name, _ in axes]
    points = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        point = dict(settings)
        point.update(dict(zip(names, combo)))
        points.append(point)
    return points


def _slug(point: dict) -> str:
    grams = "".join(str(n) for n in point["gram_sizes"])
    return (
        f"{point['variant']}_d{point['dim']}_m{point['measurements']}"
        f"_n{grams}_lr{point['learning_rate']}_b{point['batch_size']}"
    )


def _cmd_sweep(args) -> int:
    settings = _resolve(args)
    if not settings["out_dir"]:
        raise UsageError("sweep requires --out-dir")
    out_dir = Path(settings["out_dir"])
    points = _grid_values(args, settings)
    _write_manifest(out_dir, "sweep", settings)
    rows = []
    for i, point in enumerate(points):
        run_dir = out_dir / f"run_{i:03d}_{_slug(point)}"
        metrics_path = run_dir / "metrics.json"
        if metrics_path.exists():
            with open(metrics_path, encoding="utf-8") as fh:
                saved = json.load(fh)
            rows.append(saved)
            print(f"[{i + 1}/{len(points)}] {run_dir.name}: cached", file=sys.stderr)
            continue
        _write_manifest(run_dir, "sweep-run", point)
        started = time.perf_counter()
        corpus, model_config, _, result = _run_fit(point, run_dir, quiet=True)
        monitor = "dev" if corpus.dev else "train"
        saved = {
            "run": run_dir.name,
            "dim": point["dim"],
            "measurements": point["measurements"],
            "gram_sizes": ",".join(str(n) for n in point["gram_sizes"]),
            "learning_rate": point["learning_rate"],
            "batch_size": point["batch_size"],
            "monitor": monitor,
            "map": result.best_metric,
            "best_epoch": result.best_epoch,
            "parameters": accounting.parameter_count(
                model_config, len(corpus.vocab)
            ),
            "seconds": round(time.perf_counter() - started, 3),
        }
        with open(metrics_path, "w", encoding="utf-8") as fh:
            json.dump(saved, fh, indent=2)
            fh.write("\n")
        rows.append(saved)
        print(
            f"[{i + 1}/{len(points)}] {run_dir.name}: MAP {result.best_metric:.4f}",
            file=sys.stderr,
        )
    rows.sort(key=lambda r: -r["map"])
    summary_path = out_dir / "summary.csv"
    fields = [
        "run", "dim", "measurements", "gram_sizes", "learning_rate",
        "batch_size", "monitor", "map", "best_epoch", "parameters", "seconds",
    ]
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    for r in rows:
        print(f"{r['map']:.4f}  {r['run']}")
    print(f"summary: {summary_path}", file=sys.stderr)
    return 0


def _cmd_ablate(args) -> int:
    settings = _resolve(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = Path(settings["out_dir"]) if settings["out_dir"] else None
    if out_dir is not None:
        _write_manifest(out_dir, "ablate", settings)
    table = []
    failed = False
    for variant in variants:
        point = dict(settings)
        point["variant"] = variant
        maps, mrrs = [], []
        corpus = None
        model_config = None
        error = None
        for seed in seeds:
            run_dir = (
                out_dir / f"{variant.replace('-', '_')}_seed{seed}"
                if out_dir is not None
                else None
            )
            try:
                corpus, model_config, _, result = _run_fit(
                    point, run_dir, seed=seed, quiet=True
                )
            except (ValueError, TrainingDivergedError, NumericalError) as exc:
                error = f"{type(exc).__name__}: {exc}"
                break
            monitor = corpus.dev if corpus.dev else corpus.train
            best = evaluation.evaluate(result.params, monitor)
            maps.append(best.mean_average_precision)
            mrrs.append(best.mean_reciprocal_rank)
        if error is not None:
            table.append({"variant": variant, "error": error})
            failed = True
            continue
        table.append(
            {
                "variant": variant,
                "seeds": len(seeds),
                "map_mean": float(np.mean(maps)),
                "map_std": float(np.std(maps)),
                "mrr_mean": float(np.mean(mrrs)),
                "mrr_std": float(np.std(mrrs)),
                "parameters": accounting.parameter_count(
                    model_config, len(corpus.vocab)
                ),
                "pair_flops": accounting.pair_flops(model_config),
            }
        )
    header = (
        f"{'variant':<9} {'MAP':>14} {'MRR':>14} {'params':>10} {'flops':>12}"
    )
    print(header)
    for row in table:
        if "error" in row:
            print(f"{row['variant']:<9} FAILED: {row['error']}")
            continue
        print(
            f"{row['variant']:<9} "
            f"{row['map_mean']:.4f}±{row['map_std']:.4f} "
            f"{row['mrr_mean']:.4f}±{row['mrr_std']:.4f} "
            f"{row['parameters']:>10d} {row['pair_flops']:>12d}"
        )
    if out_dir is not None:
        with open(out_dir / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
            fields = [
                "variant", "seeds", "map_mean", "map_std", "mrr_mean",
                "mrr_std", "parameters", "pair_flops", "error",
            ]
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in table:
                writer.writerow({k: row.get(k, "") for k in fields})
    return 1 if failed else 0


def _cmd_inspect_entropy(args) -> int:
    params, vocab_list, _ = load_checkpoint(args.checkpoint)
    vocab = {tok: i for i, tok in enumerate(vocab_list)}
    records = load_split(args.data, vocab)
    corpus = QACorpus(vocab=vocab, id_to_token=vocab_list, train=records)
    top, bottom = interpret.rank_grams_by_entropy(
        params,
        corpus,
        n=args.n,
        split="train",
        section=args.section,
        top=args.top,
        bottom=args.bottom,
    )
    print(f"top {len(top)} by entanglement entropy:")
    for e in top:
        print(f"  {e.entropy:.4f}  {' '.join(e.tokens)}  (x{e.count})")
    print(f"bottom {len(bottom)}:")
    for e in bottom:
        print(f"  {e.entropy:.4f}  {' '.join(e.tokens)}  (x{e.count})")
    if args.out:
        rows = [(e, "top") for e in top] + [(e, "bottom") for e in bottom]
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "tokens", "entropy", "count"])
            for e, group in rows:
                writer.writerow(
                    [group, " ".join(e.tokens), f"{e.entropy:.6f}", e.count]
                )
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_inspect_neighbors(args) -> int:
    params, vocab_list, _ = load_checkpoint(args.checkpoint)
    vocab = {tok: i for i, tok in enumerate(vocab_list)}
    query_ids = encode(tokenize(args.query), vocab)
    phrases: list[str] = []
    if args.candidates:
        phrases.extend(p.strip() for p in args.candidates.split(",") if p.strip())
    if args.candidates_file:
        with open(args.candidates_file, encoding="utf-8") as fh:
            phrases.extend(line.strip() for line in fh if line.strip())
    if not phrases:
        raise UsageError(
            "inspect-neighbors needs --candidates or --candidates-file"
        )
    candidate_ids = [encode(tokenize(p), vocab) for p in phrases]
    neighbors = interpret.nearest_by_fidelity(
        params, query_ids, candidate_ids, vocab_list, k=args.k
    )
    for e in neighbors:
        print(f"{e.fidelity:.4f}  {' '.join(e.tokens)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrank",
        description="complex-state answer ranking: training and inspection",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a model on TSV corpora")
    _add_common_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="score a corpus with a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True, help="TSV file to score")
    p_eval.add_argument("--report", help="per-question CSV output path")
    p_eval.set_defaults(func=_cmd_eval)

    p_sweep = sub.add_parser("sweep", help="grid search (resumable)")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--grid-dim")
    p_sweep.add_argument("--grid-measurements")
    p_sweep.add_argument("--grid-gram-sizes", help="'|'-separated, e.g. 1|2|1,2")
    p_sweep.add_argument("--grid-lr")
    p_sweep.add_argument("--grid-batch-size")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_ablate = sub.add_parser("ablate", help="compare variants across seeds")
    _add_common_flags(p_ablate)
    p_ablate.add_argument("--variants", default="ee,se,me,ee-real")
    p_ablate.add_argument("--seeds", default="0,1,2")
    p_ablate.set_defaults(func=_cmd_ablate)

    p_ent = sub.add_parser(
        "inspect-entropy", help="rank corpus n-grams by entanglement"
    )
    p_ent.add_argument("--checkpoint", required=True)
    p_ent.add_argument("--data", required=True, help="TSV file supplying the grams")
    p_ent.add_argument("--n", type=int, default=2, choices=(2, 3))
    p_ent.add_argument(
        "--section", default="answers", choices=("questions", "answers", "both")
    )
    p_ent.add_argument("--top", type=int, default=20)
    p_ent.add_argument("--bottom", type=int, default=20)
    p_ent.add_argument("--out", help="CSV output path")
    p_ent.set_defaults(func=_cmd_inspect_entropy)

    p_nn = sub.add_parser(
        "inspect-neighbors", help="nearest states by fidelity"
    )
    p_nn.add_argument("--checkpoint", required=True)
    p_nn.add_argument("--query", required=True, help="word or phrase")
    p_nn.add_argument("--candidates", help="comma-separated phrases")
    p_nn.add_argument("--candidates-file", help="one phrase per line")
    p_nn.add_argument("--k", type=int, default=10)
    p_nn.set_defaults(func=_cmd_inspect_neighbors)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TrainingDivergedError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        UsageError,
        CorpusFormatError,
        CheckpointError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
