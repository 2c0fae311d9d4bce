"""Candidate scoring and the sampled cross-entropy training loss.

Scores are inner products between the interest vector and raw item
embeddings, normalized by a softmax over the candidate pool.  The loss is
binary cross-entropy over those per-candidate probabilities with mean
reduction, so its magnitude does not depend on pool or batch size.
Ranking by probability equals ranking by raw score, so evaluation ranks the
raw scores directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from issr import numerics as nm

PROB_EPS = 1e-7


@dataclass
class ScoredCandidates:
    item_ids: np.ndarray  # (C,) or (B, C)
    scores: nm.Tensor  # raw inner products, same shape
    probs: nm.Tensor  # softmax over the candidate axis


def score_candidates(s_u, candidates, tables):
    """Score candidate items against one interest vector or a batch.

    ``candidates`` is a sequence of item ids (with a (d,) interest vector) or
    a (B, C) id array (with a (B, d) batch).  Probabilities are softmaxed
    over each row's candidate pool.
    """
    ids = np.asarray(candidates, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty candidate set")
    if s_u.data.ndim == 1:
        if ids.ndim != 1:
            raise ValueError("single interest vector needs a flat candidate list")
        emb = nm.take(tables.items, ids)  # (C, d)
        scores = nm.reshape(nm.matmul(emb, nm.reshape(s_u, (s_u.data.shape[0], 1))),
                            (ids.shape[0],))
    else:
        if ids.ndim != 2 or ids.shape[0] != s_u.data.shape[0]:
            raise ValueError("candidate array must be (batch, pool) matching s_u")
        batch, pool = ids.shape
        d = s_u.data.shape[1]
        emb = nm.reshape(nm.take(tables.items, ids.reshape(-1)), (batch, pool, d))
        scores = nm.tensor_sum(nm.mul(nm.reshape(s_u, (batch, 1, d)), emb), axis=2)
    return ScoredCandidates(item_ids=ids, scores=scores, probs=nm.softmax(scores, axis=-1))


def bce_loss(labels, probs):
    """Mean binary cross-entropy of probabilities against 0/1 labels.

    Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before the logs,
    so the loss is always finite; the clamp blocks gradients only at the
    saturated entries themselves.
    """
    y = np.asarray(labels, dtype=probs.data.dtype)
    if y.shape != probs.data.shape:
        raise ValueError(f"labels shape {y.shape} != probs shape {probs.data.shape}")
    p = nm.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    one_minus_p = nm.add(nm.mul(p, -1.0), 1.0)
    term = nm.add(nm.mul(nm.log(p), y), nm.mul(nm.log(one_minus_p), 1.0 - y))
    return nm.mul(nm.tensor_mean(term), -1.0)
