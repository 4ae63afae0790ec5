"""Command-line entry point: ``relstance <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every subcommand
writes ``run-manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import __version__
from .data_io import (
    InteractionSet,
    Kind,
    ParseError,
    Split,
    load_word_vectors,
    parse_edges,
    parse_tweets,
    read_embedding,
    write_embedding,
)
from .evaluation import ConfusionMatrix, FoldMode, GridSpec, f1_favor_against, format_table, grid_search
from .relemb import Mode, TrainConfig, TrainingError, build_corpus, train
from .synth import PRESETS, generate, preset, write_dataset
from .systems import DEFAULT_C, DEFAULT_GAMMA, SYSTEMS, fit_system, parse_system
from .viz import emit_scatter, pca_fit, user_labels, write_coordinates

logger = logging.getLogger("relstance")

MANIFEST = "run-manifest.json"


class UsageError(Exception):
    """Bad flag combination detected after argument parsing (exit code 2)."""


# --------------------------------------------------------------------------
# file helpers


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir: str | os.PathLike, subcommand: str, config: dict, inputs: list[str],
                   seed: int | None, outputs: list[str]) -> Path:
    manifest = {
        "subcommand": subcommand,
        "tool": "relstance",
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {p: sha256_file(p) for p in inputs},
        # relative names keep the manifest independent of where the run was placed
        "outputs": sorted(os.path.relpath(o, out_dir) for o in outputs),
    }
    path = Path(out_dir) / MANIFEST
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _edge_spec(value: str) -> tuple[str, Kind]:
    path, sep, kind = value.rpartition(":")
    if not sep or kind.lower() not in ("retweet", "retweets", "friend", "friends"):
        # no kind suffix: the whole value is the path
        return value, Kind.RETWEET
    return path, Kind.FRIEND if kind.lower().startswith("friend") else Kind.RETWEET


def load_edges(specs: list[tuple[str, Kind]]) -> tuple[InteractionSet, InteractionSet]:
    retweets, friends = InteractionSet(), InteractionSet()
    for path, kind in specs:
        for p in parse_edges(_read_text(path), kind):
            (friends if p.kind is Kind.FRIEND else retweets).pairs.append(p)
    return retweets, friends


# --------------------------------------------------------------------------
# subcommands


_TRAIN_FLAGS = {
    "dim": "dim", "epochs": "epochs", "neg": "negatives_k", "subsample": "subsample_t",
    "subsample_unit": "subsample_unit", "lr": "initial_lr", "min_lr": "min_lr",
    "seed": "seed", "threads": "threads",
}


def resolve_train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    overrides = {field: getattr(args, flag) for flag, field in _TRAIN_FLAGS.items()
                 if getattr(args, flag) is not None}
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def cmd_train_emb(args) -> int:
    cfg = resolve_train_config(args)
    specs = [_edge_spec(e) for e in args.edges]
    retweets, friends = load_edges(specs)
    corpus = build_corpus(retweets, friends, args.mode)
    logger.info("training %s embedding on %d pairs", args.mode, len(corpus))
    emb = train(corpus, cfg)
    buf = io.StringIO()
    write_embedding(emb, buf)
    atomic_write(args.out, buf.getvalue())
    config = {"mode": Mode(args.mode.upper()).value, "edges": [f"{p}:{k.value}" for p, k in specs],
              "train": cfg.to_dict(), "out": args.out}
    write_manifest(Path(args.out).parent, "train-emb", config, [p for p, _ in specs], cfg.seed, [args.out])
    return 0


def cmd_pipeline(args) -> int:
    spec = parse_system(args.system)
    if spec.needs_embedding and not args.emb:
        raise UsageError(f"--system {spec.name} requires --emb")
    if spec.needs_wordvecs and not args.wordvecs:
        raise UsageError(f"--system {spec.name} requires --wordvecs")
    tweets = parse_tweets(_read_text(args.tweets))
    emb = read_embedding(_read_text(args.emb)) if spec.needs_embedding else None
    wordvecs = load_word_vectors(_read_text(args.wordvecs)) if spec.needs_wordvecs else None
    train_set, test_set = tweets.train, tweets.test
    if not train_set or not test_set:
        raise ValueError("the tweet file needs both TRAIN and TEST rows")

    model = fit_system(spec, train_set, emb=emb, wordvecs=wordvecs, C=args.C, gamma=args.gamma,
                       max_features=args.max_features, similarity=args.similarity)
    preds = model.predict(test_set)
    report = f1_favor_against([t.stance for t in test_set], [p.label for p in preds])
    cm = ConfusionMatrix.from_labels([t.stance for t in test_set], [p.label for p in preds])
    logger.info("%s f1_avg %.4f on %d test tweets", spec.name, report.f1_avg, report.n)

    out = Path(args.out_dir)
    paths = {"predictions": out / "predictions.tsv", "report": out / "report.json",
             "confusion": out / "confusion.tsv"}
    lines = "".join(f"{t.tweet_id}\t{p.label.value}\t{p.source.value}\n" for t, p in zip(test_set, preds))
    atomic_write(paths["predictions"], "tweet_id\tlabel\tsource\n" + lines)
    atomic_write(paths["report"], report.to_json())
    atomic_write(paths["confusion"], cm.to_tsv())
    config = {"system": spec.name, "C": args.C, "gamma": args.gamma, "max_features": args.max_features,
              "similarity": args.similarity, "tweets": args.tweets, "emb": args.emb,
              "wordvecs": args.wordvecs, "out_dir": args.out_dir}
    inputs = [p for p in (args.tweets, args.emb if spec.needs_embedding else None,
                          args.wordvecs if spec.needs_wordvecs else None) if p]
    write_manifest(out, "pipeline", config, inputs, None, [str(p) for p in paths.values()])
    print(f"f1_avg\t{report.f1_avg:.4f}")
    return 0


def parse_grid(tokens: list[str]) -> dict[str, list]:
    """``["dims=10,20", "C=1,10", "gamma=0.1,1"]`` -> lists keyed by name."""
    names = {"dims": ("dims", int), "dim": ("dims", int), "c": ("Cs", float), "gamma": ("gammas", float),
             "modes": ("modes", lambda s: Mode(s.upper())), "mode": ("modes", lambda s: Mode(s.upper()))}
    out: dict[str, list] = {}
    for tok in tokens:
        key, sep, values = tok.partition("=")
        if not sep or key.lower() not in names:
            raise UsageError(f"bad grid entry {tok!r}; expected dims=.., C=.., gamma=.. or modes=..")
        field, conv = names[key.lower()]
        try:
            out[field] = [conv(v) for v in values.split(",") if v]
        except ValueError as err:
            raise UsageError(f"bad grid entry {tok!r}: {err}") from None
    return out


def cmd_cv(args) -> int:
    spec = parse_system(args.system)
    if spec.needs_embedding and not args.edges:
        raise UsageError(f"--system {spec.name} requires --edges")
    if spec.needs_wordvecs and not args.wordvecs:
        raise UsageError(f"--system {spec.name} requires --wordvecs")
    grid = GridSpec(folds=args.folds, seed=args.seed, fold_mode=FoldMode(args.fold_mode.upper()),
                    **parse_grid(args.grid or []))
    tweets = parse_tweets(_read_text(args.tweets))
    specs = [_edge_spec(e) for e in args.edges or []]
    retweets, friends = load_edges(specs)
    wordvecs = load_word_vectors(_read_text(args.wordvecs)) if spec.needs_wordvecs else None
    train_cfg = replace(TrainConfig(), epochs=args.epochs) if args.epochs else TrainConfig()
    # only the TRAIN split takes part in model selection
    result = grid_search(tweets.train, retweets, friends, grid, spec.name, train_cfg, wordvecs)

    out = Path(args.out_dir)
    paths = [out / "cv.json", out / "cv.tsv"]
    atomic_write(paths[0], result.to_json())
    atomic_write(paths[1], format_table(result.table))
    config = {"system": spec.name, "dims": grid.dims, "Cs": grid.Cs, "gammas": grid.gammas,
              "modes": [Mode(m).value for m in grid.modes], "folds": grid.folds,
              "fold_mode": grid.fold_mode.value, "train": train_cfg.to_dict(), "tweets": args.tweets,
              "edges": [f"{p}:{k.value}" for p, k in specs], "wordvecs": args.wordvecs}
    inputs = [args.tweets, *(p for p, _ in specs)] + ([args.wordvecs] if wordvecs is not None else [])
    write_manifest(out, "cv", config, inputs, args.seed, [str(p) for p in paths])
    sys.stdout.write(format_table(result.table))
    b = result.best
    print(f"best\tmode={b.mode}\tdim={b.dim}\tC={b.C:g}\tgamma={b.gamma:g}\tmean_f1={b.mean_f1:.4f}")
    return 0


def cmd_viz(args) -> int:
    emb = read_embedding(_read_text(args.emb))
    tweets = parse_tweets(_read_text(args.tweets))
    source = list(tweets) if args.all_users else tweets.train
    labels = user_labels(source)
    users = [u for u in emb.users if u in labels]
    if len(users) < 2:
        raise ValueError(f"only {len(users)} labeled users have vectors; PCA needs at least 2")
    model = pca_fit(emb.lookup_many(users), k=2)
    points = model.transform(emb.lookup_many(users))
    svg, coords = io.StringIO(), io.StringIO()
    emit_scatter(points, [labels[u] for u in users], svg, title=args.title)
    write_coordinates(users, points, [labels[u] for u in users], coords)
    coords_path = args.coords or str(Path(args.out).with_suffix(".tsv"))
    atomic_write(args.out, svg.getvalue())
    atomic_write(coords_path, coords.getvalue())
    config = {"emb": args.emb, "tweets": args.tweets, "all_users": args.all_users, "title": args.title,
              "out": args.out, "coords": coords_path,
              "explained_variance": [float(v) for v in model.explained_variance]}
    write_manifest(Path(args.out).parent, "viz", config, [args.emb, args.tweets], None, [args.out, coords_path])
    return 0


def _parse_override(tok: str) -> tuple[str, object]:
    key, sep, raw = tok.partition("=")
    if not sep or not key:
        raise UsageError(f"bad override {tok!r}; expected key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def cmd_synth(args) -> int:
    overrides = dict(_parse_override(t) for t in args.set or [])
    try:
        cfg = preset(args.preset, seed=args.seed, **overrides)
    except ValueError as err:
        raise UsageError(str(err)) from None
    data = generate(cfg)
    paths = write_dataset(data, args.out_dir)
    config = {"preset": args.preset, "overrides": overrides, "synth": cfg.to_dict()}
    write_manifest(args.out_dir, "synth", config, [], args.seed, [str(p) for p in paths.values()])
    return 0


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relstance", description="Stance detection with relational embeddings.")
    parser.add_argument("--version", action="version", version=f"relstance {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("train-emb", help="train user embeddings from interaction pairs",
                       description="Train relational user embeddings. With --threads > 1 workers update "
                                   "shared matrices without locks and output is NOT reproducible.")
    p.add_argument("--edges", action="append", required=True, metavar="PATH[:KIND]",
                   help="edge file, KIND is retweet or friends (repeatable)")
    p.add_argument("--mode", type=str.upper, choices=[m.value for m in Mode], default="RETWEET")
    p.add_argument("--dim", type=int, help="embedding size (default 20; 10 suits small datasets)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--neg", type=int, help="negatives per pair")
    p.add_argument("--subsample", type=float, help="subsampling threshold")
    p.add_argument("--subsample-unit", choices=["target", "pair"])
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--min-lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--config", help="JSON file of training settings; flags take precedence")
    p.add_argument("--out", required=True, help="embedding output path")
    p.set_defaults(func=cmd_train_emb)

    p = sub.add_parser("pipeline", help="fit a stance system on TRAIN tweets and evaluate on TEST")
    p.add_argument("--system", required=True, choices=SYSTEMS)
    p.add_argument("--tweets", required=True)
    p.add_argument("--emb")
    p.add_argument("--wordvecs")
    p.add_argument("--C", type=float, default=DEFAULT_C)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--max-features", type=int)
    p.add_argument("--similarity", choices=["cosine", "negative-euclidean"], default="cosine",
                   help="class-distance similarity used by backoff systems")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("cv", help="k-fold grid search on the TRAIN split")
    p.add_argument("--system", default="relemb-svm", choices=SYSTEMS)
    p.add_argument("--tweets", required=True)
    p.add_argument("--edges", action="append", metavar="PATH[:KIND]")
    p.add_argument("--wordvecs")
    p.add_argument("--grid", nargs="+", metavar="NAME=V1,V2", help="e.g. dims=10,20 C=1,10 gamma=0.1,1")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--fold-mode", choices=["by_tweet", "by_user", "BY_TWEET", "BY_USER"], default="BY_TWEET")
    p.add_argument("--epochs", type=int, help="embedding epochs (default: training default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("viz", help="2D PCA scatter of user vectors colored by stance")
    p.add_argument("--emb", required=True)
    p.add_argument("--tweets", required=True)
    p.add_argument("--out", required=True, help="SVG path")
    p.add_argument("--coords", help="coordinate TSV path (default: SVG path with .tsv)")
    p.add_argument("--all-users", action="store_true", help="plot TEST authors too (default: TRAIN only)")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset")
    p.add_argument("--preset", choices=PRESETS, default="clean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (JSON value)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"relstance {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (OSError, ParseError, ValueError, TrainingError) as err:
        print(f"relstance {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
