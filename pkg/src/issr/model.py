"""Full model assembly: parameter container, ablation wiring, and the
forward pass from a context batch to interest vectors and training loss.

Variants toggle branches of the architecture:

==============  =========  ====  ========  =========  ==================
variant         bipartite  cooc  residual  attention  extra
==============  =========  ====  ========  =========  ==================
issr            yes        yes   yes       yes
only-intra      no         no    yes       yes        residual starts at
                                                      identity
mf-intra        no         no    no        yes        auxiliary loss on
                                                      user-item dot
co-intra        no         yes   yes       yes
bi-intra        yes        no    yes       yes
inter-gru4rec   yes        yes   yes       no         interest = last
                                                      hidden state
==============  =========  ====  ========  =========  ==================
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from issr import numerics as nm
from issr.decoder_loss import bce_loss, score_candidates
from issr.inter_encoder import (
    BipartiteGcnParams,
    CoocGcnParams,
    EmbeddingTables,
    ResidualParams,
    bipartite_gcn_embed,
    cooc_gcn_embed,
    fuse,
    mf_inter_embed,
    residual_embed,
)
from issr.intra_encoder import (
    AttentionParams,
    GruParams,
    InterestCombineParams,
    attention_weights,
    gru_forward,
    interest,
)

VARIANTS = ("issr", "only-intra", "mf-intra", "co-intra", "bi-intra", "inter-gru4rec")


@dataclass(frozen=True)
class VariantWiring:
    """Which branches a variant instantiates and how they are combined."""

    use_bipartite: bool
    use_cooc: bool
    use_residual: bool
    use_attention: bool
    mf_auxiliary: bool = False
    identity_residual: bool = False


_WIRINGS = {
    "issr": VariantWiring(True, True, True, True),
    "only-intra": VariantWiring(False, False, True, True, identity_residual=True),
    "mf-intra": VariantWiring(False, False, False, True, mf_auxiliary=True),
    "co-intra": VariantWiring(False, True, True, True),
    "bi-intra": VariantWiring(True, False, True, True),
    "inter-gru4rec": VariantWiring(True, True, True, False),
}


def select_variant(name):
    try:
        return _WIRINGS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}") from None


def _map_tensors(obj, fn):
    """Rebuild a params structure by applying fn to every leaf tensor.

    Traversal order matches the declared dataclass field order, which is the
    canonical parameter order used for checkpoints."""
    if isinstance(obj, nm.Tensor):
        return fn(obj)
    if isinstance(obj, list):
        return [_map_tensors(o, fn) for o in obj]
    if dataclasses.is_dataclass(obj):
        rebuilt = {
            f.name: _map_tensors(getattr(obj, f.name), fn) for f in dataclasses.fields(obj)
        }
        return type(obj)(**rebuilt)
    return obj


@dataclass
class ModelParams:
    """All trainable tensors; optional branches are None when the variant
    does not instantiate them.  Field order defines the canonical parameter
    order for checkpoints."""

    embeddings: EmbeddingTables
    bipartite: BipartiteGcnParams | None
    cooc: CoocGcnParams | None
    residual: ResidualParams | None
    gru: GruParams
    attention: AttentionParams | None
    combine: InterestCombineParams | None

    @classmethod
    def init(cls, num_users, num_items, d, wiring, k_bipartite, k_cooc, rng,
             dtype=np.float32):
        return cls(
            embeddings=EmbeddingTables.init(num_users, num_items, d, rng, dtype),
            bipartite=(
                BipartiteGcnParams.init(d, k_bipartite, rng, dtype)
                if wiring.use_bipartite
                else None
            ),
            cooc=CoocGcnParams.init(d, k_cooc, rng, dtype) if wiring.use_cooc else None,
            residual=(
                ResidualParams.init(d, rng, dtype, identity=wiring.identity_residual)
                if wiring.use_residual
                else None
            ),
            gru=GruParams.init(d, rng, dtype),
            attention=AttentionParams.init(d, rng, dtype) if wiring.use_attention else None,
            combine=(
                InterestCombineParams.init(d, rng, dtype) if wiring.use_attention else None
            ),
        )

    @property
    def dim(self):
        return self.embeddings.dim

    def named(self):
        """Canonical name -> tensor mapping; iteration order is the
        checkpoint serialization order."""
        out = {}
        out.update(self.embeddings.named())
        if self.bipartite is not None:
            out.update(self.bipartite.named())
        if self.cooc is not None:
            out.update(self.cooc.named())
        if self.residual is not None:
            out.update(self.residual.named())
        out.update(self.gru.named())
        if self.attention is not None:
            out.update(self.attention.named())
        if self.combine is not None:
            out.update(self.combine.named())
        return out

    def tensors(self):
        return list(self.named().values())

    def clone_with(self, tensors):
        """New ModelParams with the same structure over the given tensors,
        consumed in canonical order."""
        it = iter(tensors)
        rebuilt = _map_tensors(self, lambda _t: next(it))
        leftovers = sum(1 for _ in it)
        if leftovers:
            raise ValueError(f"{leftovers} extra tensors beyond the parameter count")
        return rebuilt

    def cast(self, dtype):
        return _map_tensors(
            self, lambda t: nm.Tensor(t.data.astype(dtype), requires_grad=t.requires_grad)
        )

    def copy(self):
        return _map_tensors(
            self, lambda t: nm.Tensor(t.data.copy(), requires_grad=t.requires_grad)
        )


@dataclass(frozen=True)
class ForwardSettings:
    """Structural knobs the forward pass needs beyond the parameters."""

    k_bipartite: int = 2
    k_cooc: int = 1
    num_samples: int = 10
    gcn_activation: str = "relu"
    residual_activation: str = "relu"
    attention_activation: str = "tanh"


def encode_items(params, wiring, item_ids, bipartite_graph, cooc_graph, settings, rng):
    """Fused inter-sequence representations for a flat batch of item ids."""
    g = c = r = None
    if wiring.use_bipartite:
        g = bipartite_gcn_embed(item_ids, bipartite_graph, params.embeddings,
                                params.bipartite, settings.k_bipartite,
                                settings.num_samples, rng, settings.gcn_activation)
    if wiring.use_cooc:
        c = cooc_gcn_embed(item_ids, cooc_graph, params.embeddings, params.cooc,
                           settings.k_cooc, settings.num_samples, rng,
                           settings.gcn_activation)
    if wiring.use_residual:
        r = residual_embed(item_ids, params.embeddings, params.residual,
                           settings.residual_activation)
    if g is None and c is None and r is None:
        return mf_inter_embed(item_ids, params.embeddings)
    return fuse(g, c, r)


def forward_interest(params, wiring, contexts, user_ids, bipartite_graph, cooc_graph,
                     settings, rng):
    """Interest vectors for a batch: contexts is a (B, L) int array of context
    item ids, user_ids a (B,) int array.  Returns a (B, d) tensor."""
    contexts = np.asarray(contexts, dtype=np.int64)
    user_ids = np.asarray(user_ids, dtype=np.int64)
    if contexts.ndim != 2:
        raise ValueError("contexts must be a (batch, context_len) array")
    batch, ctx_len = contexts.shape
    x = encode_items(params, wiring, contexts.reshape(-1), bipartite_graph, cooc_graph,
                     settings, rng)
    step_rows = np.arange(batch, dtype=np.int64) * ctx_len
    xs = [nm.take(x, step_rows + t) for t in range(ctx_len)]
    hs = gru_forward(xs, params.gru)
    if not wiring.use_attention:
        return hs[-1]
    e_u = nm.take(params.embeddings.users, user_ids)
    weights = attention_weights(e_u, hs, params.attention, settings.attention_activation)
    return interest(weights, hs, params.combine)


@dataclass
class BatchLoss:
    total: nm.Tensor
    main: nm.Tensor
    auxiliary: nm.Tensor | None


def loss_on_batch(params, wiring, contexts, user_ids, candidate_ids, labels,
                  bipartite_graph, cooc_graph, settings, rng):
    """Training loss for one minibatch.

    candidate_ids is (B, C) with each row an instance's positives followed by
    its sampled negatives; labels is the matching 0/1 array.  The auxiliary
    matrix-factorization term scores the same pairs by sigmoid of the raw
    user-item embedding dot product.
    """
    s_u = forward_interest(params, wiring, contexts, user_ids, bipartite_graph,
                           cooc_graph, settings, rng)
    scored = score_candidates(s_u, candidate_ids, params.embeddings)
    main = bce_loss(labels, scored.probs)
    if not wiring.mf_auxiliary:
        return BatchLoss(total=main, main=main, auxiliary=None)
    ids = np.asarray(candidate_ids, dtype=np.int64)
    batch, pool = ids.shape
    d = params.dim
    e_u = nm.take(params.embeddings.users, np.asarray(user_ids, dtype=np.int64))
    cand_emb = nm.reshape(nm.take(params.embeddings.items, ids.reshape(-1)),
                          (batch, pool, d))
    dots = nm.tensor_sum(nm.mul(nm.reshape(e_u, (batch, 1, d)), cand_emb), axis=2)
    auxiliary = bce_loss(labels, nm.sigmoid(dots))
    return BatchLoss(total=nm.add(main, auxiliary), main=main, auxiliary=auxiliary)
