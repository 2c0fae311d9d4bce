"""Interaction-log ingestion, chronological splitting, and window extraction.

The raw input is a delimiter-separated text file with ``user, item, rating,
timestamp`` records.  Ratings are ignored (implicit feedback); the timestamp
is only a sort key.  Users and items are remapped to dense 0-based indices in
first-appearance order, which keeps every downstream artifact deterministic
for a given input file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil

import numpy as np

log = logging.getLogger("issr.data")

_DELIMITERS = {"tsv": "\t", "csv": ",", "movielens-dat": "::"}


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Interaction:
    """One (user, item) event.  Timestamps are opaque sort keys."""

    user_id: int
    item_id: int
    timestamp: int


@dataclass
class InteractionLog:
    """Per-user chronological item sequences over dense vocabularies."""

    num_users: int
    num_items: int
    sequences: list  # sequences[u] = [item_id, ...] in chronological order
    user_labels: list  # dense id -> original token from the input file
    item_labels: list

    @property
    def num_interactions(self):
        return sum(len(s) for s in self.sequences)


def _detect_delimiter(line):
    if "::" in line:
        return "::"
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    raise ParseError("could not detect delimiter (expected tab, comma, or '::')")


def log_from_records(records, source="records"):
    """Assemble an :class:`InteractionLog` from (user, item, timestamp)
    triples.

    User and item tokens may be any hashable values; dense ids are assigned
    in first-appearance order.  Within a user, events are ordered by
    (timestamp, input order), keeping ties stable.
    """
    user_index = {}
    item_index = {}
    events = []  # (user, item, timestamp, input order)
    for user_tok, item_tok, ts in records:
        uid = user_index.setdefault(user_tok, len(user_index))
        iid = item_index.setdefault(item_tok, len(item_index))
        events.append((uid, iid, ts, len(events)))
    if not events:
        raise ParseError(f"{source}: no interactions found")

    sequences = [[] for _ in range(len(user_index))]
    events.sort(key=lambda e: (e[0], e[2], e[3]))
    for uid, iid, _ts, _order in events:
        sequences[uid].append(iid)

    logrec = InteractionLog(
        num_users=len(user_index),
        num_items=len(item_index),
        sequences=sequences,
        user_labels=list(user_index),
        item_labels=list(item_index),
    )
    log.info(
        "parsed %s: %d users, %d items, %d interactions",
        source, logrec.num_users, logrec.num_items, logrec.num_interactions,
    )
    return logrec


def parse_interactions(path, fmt="auto"):
    """Read an interaction file into an :class:`InteractionLog`.

    ``fmt`` is one of ``tsv``, ``csv``, ``movielens-dat``, or ``auto`` to
    detect the delimiter from the first data line.  Within a user, events are
    ordered by (timestamp, original file order).
    """
    if fmt != "auto" and fmt not in _DELIMITERS:
        raise ParseError(f"unknown format {fmt!r}; expected tsv, csv, or movielens-dat")
    delimiter = _DELIMITERS.get(fmt)

    records = []
    with open(path, "r", encoding="latin-1") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if delimiter is None:
                delimiter = _detect_delimiter(line)
            parts = line.split(delimiter)
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            user_tok, item_tok, _rating, ts_tok = (p.strip() for p in parts)
            try:
                ts = int(ts_tok)
            except ValueError:
                raise ParseError(f"line {lineno}: bad timestamp {ts_tok!r}") from None
            records.append((user_tok, item_tok, ts))
    return log_from_records(records, source=str(path))


@dataclass
class SplitDataset:
    """Per-user chronological prefix split into train/val/test segments."""

    num_users: int
    num_items: int
    train: list
    val: list
    test: list

    def full_sequence(self, user_id):
        return self.train[user_id] + self.val[user_id] + self.test[user_id]

    def user_item_set(self, user_id):
        """Every item the user interacted with, in any segment."""
        return set(self.full_sequence(user_id))

    def users_below_min_train(self, min_len):
        """Users whose train segment is too short to produce any window."""
        return [u for u in range(self.num_users) if len(self.train[u]) < min_len]


def _exact_ratios(ratios):
    fracs = tuple(r if isinstance(r, Fraction) else Fraction(str(r)) for r in ratios)
    if len(fracs) != 3 or any(f < 0 for f in fracs):
        raise ValueError(f"need three nonnegative ratios, got {ratios!r}")
    if sum(fracs) != 1:
        raise ValueError(f"ratios must sum to 1, got {ratios!r}")
    return fracs


def chronological_split(interactions, ratios=(0.7, 0.1, 0.2)):
    """Split each user's sequence into prefix train / val / test segments.

    Boundaries use ceilings of the cumulative ratios, evaluated in exact
    rational arithmetic so e.g. 0.7 of 10 items is exactly 7.
    """
    r1, r2, _r3 = _exact_ratios(ratios)
    train, val, test = [], [], []
    for seq in interactions.sequences:
        n = len(seq)
        cut1 = ceil(r1 * n)
        cut2 = ceil((r1 + r2) * n)
        train.append(seq[:cut1])
        val.append(seq[cut1:cut2])
        test.append(seq[cut2:])
    return SplitDataset(
        num_users=interactions.num_users,
        num_items=interactions.num_items,
        train=train,
        val=val,
        test=test,
    )


@dataclass(frozen=True)
class TrainingInstance:
    """A context window, its following target items, and (optionally) sampled
    negatives."""

    user_id: int
    context: tuple
    positives: tuple
    negatives: tuple = ()


def build_training_instances(split, context_len=5, num_targets=3):
    """Slide a window over each user's train segment.

    A train segment of length m yields max(0, m - L - T + 1) instances, one
    per start position, ordered by (user, start).
    """
    if context_len < 1 or num_targets < 1:
        raise ValueError("context_len and num_targets must be >= 1")
    instances = []
    span = context_len + num_targets
    for user, seq in enumerate(split.train):
        for start in range(len(seq) - span + 1):
            instances.append(
                TrainingInstance(
                    user_id=user,
                    context=tuple(seq[start : start + context_len]),
                    positives=tuple(seq[start + context_len : start + span]),
                )
            )
    return instances


def build_eval_instances(split, segment, context_len=5, num_targets=3):
    """Windows over the full sequence whose targets all fall in ``segment``.

    The context may reach back into earlier segments, so every evaluated
    target has a full-length history.  ``segment`` is ``val`` or ``test``.
    """
    if segment not in ("val", "test"):
        raise ValueError(f"segment must be 'val' or 'test', got {segment!r}")
    if context_len < 1 or num_targets < 1:
        raise ValueError("context_len and num_targets must be >= 1")
    instances = []
    for user in range(split.num_users):
        n_train = len(split.train[user])
        n_val = len(split.val[user])
        if segment == "val":
            seg_start, seg_end = n_train, n_train + n_val
        else:
            seg_start = n_train + n_val
            seg_end = seg_start + len(split.test[user])
        seq = split.full_sequence(user)
        for start in range(len(seq) - context_len - num_targets + 1):
            t0 = start + context_len
            t1 = t0 + num_targets
            if t0 >= seg_start and t1 <= seg_end:
                instances.append(
                    TrainingInstance(
                        user_id=user,
                        context=tuple(seq[start:t0]),
                        positives=tuple(seq[t0:t1]),
                    )
                )
    return instances


def sample_negatives(instance, user_items, num_items, num_neg, rng):
    """Attach ``num_neg`` distinct items the user never interacted with.

    Uniform over the eligible set and deterministic under a fixed generator.
    Rejection-samples when the catalogue is mostly eligible, otherwise draws
    from the materialized eligible list.
    """
    eligible = num_items - len(user_items)
    if eligible < num_neg:
        raise ValueError(
            f"user {instance.user_id}: only {eligible} items outside the "
            f"interaction set, cannot draw {num_neg} distinct negatives"
        )
    if eligible <= 2 * num_neg or len(user_items) * 2 > num_items:
        pool = np.array(sorted(set(range(num_items)) - set(user_items)))
        chosen = rng.choice(pool, size=num_neg, replace=False)
    else:
        seen = set()
        chosen = []
        while len(chosen) < num_neg:
            cand = int(rng.integers(num_items))
            if cand in user_items or cand in seen:
                continue
            seen.add(cand)
            chosen.append(cand)
    return TrainingInstance(
        user_id=instance.user_id,
        context=instance.context,
        positives=instance.positives,
        negatives=tuple(int(c) for c in chosen),
    )


def format_instance(instance):
    """Debug dump line: ``user <TAB> ctx,.. <TAB> pos,.. <TAB> neg,..``."""
    return "\t".join(
        [
            str(instance.user_id),
            ",".join(map(str, instance.context)),
            ",".join(map(str, instance.positives)),
            ",".join(map(str, instance.negatives)),
        ]
    )


def write_instances(path, instances):
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(format_instance(inst) + "\n")


# --- split serialization (used by the CLI's prepare/train handoff) ---

def save_split(path, split):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# splits num_users={split.num_users} num_items={split.num_items}\n")
        for u in range(split.num_users):
            f.write(
                "\t".join(
                    [
                        str(u),
                        ",".join(map(str, split.train[u])),
                        ",".join(map(str, split.val[u])),
                        ",".join(map(str, split.test[u])),
                    ]
                )
                + "\n"
            )


def load_split(path):
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("# splits"):
            raise ParseError(f"{path}: missing split header")
        meta = dict(kv.split("=") for kv in header.split()[2:])
        num_users = int(meta["num_users"])
        num_items = int(meta["num_items"])
        train = [[] for _ in range(num_users)]
        val = [[] for _ in range(num_users)]
        test = [[] for _ in range(num_users)]
        for line in f:
            u, tr, va, te = line.rstrip("\n").split("\t")
            u = int(u)
            train[u] = [int(x) for x in tr.split(",")] if tr else []
            val[u] = [int(x) for x in va.split(",")] if va else []
            test[u] = [int(x) for x in te.split(",")] if te else []
    return SplitDataset(num_users=num_users, num_items=num_items, train=train, val=val, test=test)
