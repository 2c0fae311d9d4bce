"""Top-k ranking metrics over full-catalogue scores.

Each evaluation instance ranks every item except its exclusion set by raw
score, descending, with ties broken by ascending item id so results are
exactly reproducible.  Reported values are macro-averages over instances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from issr import numerics as nm
from issr.data import build_eval_instances
from issr.model import forward_interest

log = logging.getLogger(__name__)

METRIC_NAMES = ("recall", "ndcg", "hr", "mrr")
DEFAULT_KS = (5, 10)
_EVAL_STREAM = 2  # rng stream tag separating evaluation from training draws


def metrics_from_scores(scores, targets, exclusions, k):
    """(recall, ndcg, hr, mrr) at cutoff k for one precomputed score vector.

    ``scores`` covers the whole catalogue; ``exclusions`` are item ids removed
    from the ranking entirely.  Targets are treated as a set.
    """
    goal = set(int(t) for t in targets)
    if not goal:
        raise ValueError("empty target set")
    overlap = goal & set(int(e) for e in exclusions)
    if overlap:
        raise ValueError(f"targets {sorted(overlap)} appear in the exclusion set")
    scores = np.asarray(scores)
    mask = np.ones(scores.shape[0], dtype=bool)
    if len(exclusions):
        mask[np.fromiter(exclusions, dtype=np.int64)] = False
    cand_ids = np.flatnonzero(mask)
    cand_scores = scores[cand_ids]
    # lexsort uses the last key as primary: score descending, then id ascending
    order = np.lexsort((cand_ids, -cand_scores))
    top = cand_ids[order[:k]]
    hit_positions = [i for i, item in enumerate(top, start=1) if int(item) in goal]
    hits = len(hit_positions)
    recall = hits / len(goal)
    hr = 1.0 if hits else 0.0
    mrr = 1.0 / hit_positions[0] if hits else 0.0
    dcg = sum(1.0 / np.log2(i + 1) for i in hit_positions)
    ideal = sum(1.0 / np.log2(i + 1) for i in range(1, min(len(goal), k) + 1))
    return recall, dcg / ideal, hr, mrr


def rank_and_score(s_u, targets, exclusions, tables, k):
    """Metric tuple for one interest vector against the full catalogue."""
    vec = s_u.data if isinstance(s_u, nm.Tensor) else np.asarray(s_u)
    scores = tables.items.data @ vec
    return metrics_from_scores(scores, targets, exclusions, k)


def exclusion_sets(split, instances, segment):
    """Per-instance exclusions: items from the segments strictly before the
    evaluated one, minus the instance's own targets (targets must stay
    rankable even when the user interacted with them before)."""
    if segment not in ("val", "test"):
        raise ValueError(f"segment must be 'val' or 'test', got {segment!r}")
    out = []
    for inst in instances:
        prior = set(split.train[inst.user_id])
        if segment == "test":
            prior.update(split.val[inst.user_id])
        out.append(prior - set(inst.positives))
    return out


@dataclass
class MetricsReport:
    """Macro-averaged metrics keyed by (metric name, cutoff)."""

    values: dict
    num_instances: int
    num_skipped: int = 0
    ks: tuple = DEFAULT_KS

    def __getitem__(self, key):
        return self.values[key]

    def lines(self):
        header = ["metric"] + [f"@{k}" for k in self.ks]
        rows = [header]
        for name in METRIC_NAMES:
            rows.append([name] + [f"{self.values[(name, k)]:.6f}" for k in self.ks])
        return ["\t".join(r) for r in rows] + [f"instances\t{self.num_instances}"]

    def as_text(self):
        return "\n".join(self.lines())

    def as_key_values(self):
        parts = [
            f"{name}@{k}={self.values[(name, k)]:.6f}"
            for name in METRIC_NAMES
            for k in self.ks
        ]
        parts.append(f"instances={self.num_instances}")
        return "\n".join(parts)


def aggregate_scored(score_rows, instances, exclusions, ks=DEFAULT_KS):
    """Macro-average metrics when scores are already computed per instance."""
    sums = {(name, k): 0.0 for name in METRIC_NAMES for k in ks}
    counted = 0
    skipped = 0
    for row, inst, excl in zip(score_rows, instances, exclusions):
        if not inst.positives:
            skipped += 1
            log.warning("skipping instance for user %d: empty target set", inst.user_id)
            continue
        for k in ks:
            recall, ndcg, hr, mrr = metrics_from_scores(row, inst.positives, excl, k)
            sums[("recall", k)] += recall
            sums[("ndcg", k)] += ndcg
            sums[("hr", k)] += hr
            sums[("mrr", k)] += mrr
        counted += 1
    if counted == 0:
        raise ValueError("no evaluation instances with targets")
    values = {key: total / counted for key, total in sums.items()}
    return MetricsReport(values=values, num_instances=counted, num_skipped=skipped, ks=ks)


def evaluate(params, wiring, settings, instances, exclusions, bipartite_graph,
             cooc_graph, seed, ks=DEFAULT_KS, batch_size=256):
    """Run the model over evaluation instances and macro-average the metrics.

    Neighborhood sampling inside the GCN forward is pinned to ``seed``, so
    repeated evaluations of the same parameters give identical reports.
    """
    if not instances:
        raise ValueError("no evaluation instances")
    rng = np.random.default_rng([seed, _EVAL_STREAM])
    item_table = params.embeddings.items.data
    rows = []
    for start in range(0, len(instances), batch_size):
        chunk = instances[start : start + batch_size]
        contexts = np.array([inst.context for inst in chunk], dtype=np.int64)
        users = np.array([inst.user_id for inst in chunk], dtype=np.int64)
        s_u = forward_interest(params, wiring, contexts, users, bipartite_graph,
                               cooc_graph, settings, rng)
        rows.extend(np.asarray(s_u.data @ item_table.T))
    return aggregate_scored(rows, instances, exclusions, ks)


def build_eval_report(params, wiring, settings, split, segment, bipartite_graph,
                      cooc_graph, seed, context_len=5, num_targets=3,
                      ks=DEFAULT_KS, batch_size=256):
    """Window extraction, exclusion sets, and evaluation for one segment."""
    instances = build_eval_instances(split, segment, context_len, num_targets)
    exclusions = exclusion_sets(split, instances, segment)
    return evaluate(params, wiring, settings, instances, exclusions,
                    bipartite_graph, cooc_graph, seed, ks, batch_size)


def popularity_scores(split, num_items):
    """Train-split interaction counts, usable as a global score vector."""
    counts = np.zeros(num_items, dtype=np.float64)
    for seq in split.train:
        for item in seq:
            counts[item] += 1.0
    return counts
