"""Command-line pipeline: prepare data, train, evaluate, predict.

Every command exits 0 on success and 1 with a one-line diagnostic on
failure.  The ISSR_LOG environment variable (error, info, debug) controls
logging verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from issr.data import chronological_split, load_split, parse_interactions, save_split
from issr.graphs import (
    build_bipartite,
    build_cooccurrence,
    load_bipartite,
    load_cooccurrence,
    save_bipartite,
    save_cooccurrence,
)
from issr.metrics import build_eval_report
from issr.model import forward_interest, select_variant
from issr.trainer import Checkpoint, TrainConfig, train

log = logging.getLogger(__name__)

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

SPLIT_FILE = "split.txt"
BIPARTITE_FILE = "bipartite.txt"
COOC_FILE = "cooc.txt"
USERS_FILE = "users.txt"
ITEMS_FILE = "items.txt"


def _configure_logging():
    name = os.environ.get("ISSR_LOG", "error").lower()
    if name not in _LOG_LEVELS:
        raise ValueError(
            f"ISSR_LOG must be one of {sorted(_LOG_LEVELS)}, got {name!r}"
        )
    logging.basicConfig(level=_LOG_LEVELS[name], format="%(name)s: %(message)s")


def _write_labels(path, labels):
    with open(path, "w", encoding="utf-8") as f:
        for label in labels:
            f.write(f"{label}\n")


def _read_labels(path):
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def _load_data_dir(data_dir):
    data_dir = Path(data_dir)
    split = load_split(data_dir / SPLIT_FILE)
    bipartite = load_bipartite(data_dir / BIPARTITE_FILE)
    cooc = load_cooccurrence(data_dir / COOC_FILE)
    user_labels = _read_labels(data_dir / USERS_FILE)
    item_labels = _read_labels(data_dir / ITEMS_FILE)
    return split, bipartite, cooc, user_labels, item_labels


def cmd_prepare(args):
    ratios = tuple(part.strip() for part in args.ratios.split(","))
    if len(ratios) != 3:
        raise ValueError(f"--ratios needs three comma-separated values, got {args.ratios!r}")
    interactions = parse_interactions(args.input, fmt=args.format)
    split = chronological_split(interactions, ratios)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_split(out / SPLIT_FILE, split)
    save_bipartite(out / BIPARTITE_FILE, build_bipartite(split))
    save_cooccurrence(out / COOC_FILE, build_cooccurrence(split))
    _write_labels(out / USERS_FILE, interactions.user_labels)
    _write_labels(out / ITEMS_FILE, interactions.item_labels)
    print(
        f"{interactions.num_users} users / {interactions.num_items} items / "
        f"{interactions.num_interactions} interactions -> {out}"
    )
    return 0


def cmd_train(args):
    config = TrainConfig.from_file(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed).validate()
    split, bipartite, cooc, _users, _items = _load_data_dir(args.data)
    result = train(
        config, split, graphs=(bipartite, cooc), on_epoch=lambda s: print(s.line())
    )
    result.checkpoint.save(args.out)
    ck = result.checkpoint
    print(
        f"checkpoint -> {args.out} (epoch {ck.epoch}, best epoch {ck.best_epoch}, "
        f"val recall@10 {max(ck.best_metric, 0.0):.6f})"
    )
    return 0


def cmd_eval(args):
    checkpoint = Checkpoint.load(args.ckpt)
    split, bipartite, cooc, _users, _items = _load_data_dir(args.data)
    config = checkpoint.config
    report = build_eval_report(
        checkpoint.best_params, select_variant(config.variant), config.settings(),
        split, args.segment, bipartite, cooc, args.seed,
        context_len=config.context_len, num_targets=config.num_targets,
    )
    print(report.as_text())
    print()
    print(report.as_key_values())
    return 0


def cmd_predict(args):
    checkpoint = Checkpoint.load(args.ckpt)
    split, bipartite, cooc, user_labels, item_labels = _load_data_dir(args.data)
    config = checkpoint.config
    try:
        dense_user = user_labels.index(args.user)
    except ValueError:
        raise ValueError(f"unknown user id {args.user!r}") from None
    seq = split.full_sequence(dense_user)
    if not seq:
        raise ValueError(f"user {args.user!r} has no interaction history")
    context = seq[-config.context_len :]
    params = checkpoint.best_params
    rng = np.random.default_rng([args.seed, 3])
    s_u = forward_interest(
        params, select_variant(config.variant), np.array([context]),
        np.array([dense_user]), bipartite, cooc, config.settings(), rng,
    )
    scores = np.asarray(s_u.data[0] @ params.embeddings.items.data.T)
    seen = split.user_item_set(dense_user)
    mask = np.ones(split.num_items, dtype=bool)
    mask[list(seen)] = False
    cand = np.flatnonzero(mask)
    if len(cand) < args.k:
        raise ValueError(
            f"user {args.user!r} has only {len(cand)} unseen items, cannot rank top-{args.k}"
        )
    order = np.lexsort((cand, -scores[cand]))
    for item in cand[order[: args.k]]:
        print(f"{item_labels[item]}\t{scores[item]:.6f}")
    return 0


def _add_common(parser, seed_default=42):
    parser.add_argument("--seed", type=int, default=seed_default,
                        help="master random seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker bound (current implementation is single-threaded)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="issr",
        description="Sequential recommender: dual-graph encoders over user-item "
        "and co-occurrence graphs plus a GRU/attention sequence model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse a log, split it, and build graphs")
    p.add_argument("--input", required=True, help="interaction file (tsv/csv/:: )")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ratios", default="0.7,0.1,0.2", help="train,val,test fractions")
    p.add_argument("--format", default="auto",
                   choices=["auto", "tsv", "csv", "movielens-dat"])
    _add_common(p)
    p.set_defaults(handler=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared directory")
    p.add_argument("--data", required=True, help="directory written by prepare")
    p.add_argument("--config", required=True, help="key=value config file")
    p.add_argument("--out", required=True, help="checkpoint output path")
    _add_common(p, seed_default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on val or test")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--segment", default="test", choices=["val", "test"])
    _add_common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="print top-k items for one user")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--user", required=True, help="user id as in the input file")
    p.add_argument("--k", type=int, default=10)
    _add_common(p)
    p.set_defaults(handler=cmd_predict)
    return parser


def main(argv=None):
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except BrokenPipeError:
        return 0
    except SystemExit as exc:
        raise exc
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
