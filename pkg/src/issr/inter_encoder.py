"""Inter-sequence item representations.

Three branches produce a d-dimensional vector per item: a two-hop sampled
GCN over the user-item bipartite graph, a one-hop sampled GCN over the
item-item co-occurrence graph, and a learned residual transform of the raw
embedding.  Element-wise sum fuses whichever branches a variant enables.

Each GCN layer first pools sampled neighbor representations through a shared
affine aggregator and activation, then concatenates the pooled neighborhood
with the node's own previous-layer representation and applies an affine
transform.  The transform therefore maps 2d -> d.  Isolated nodes contribute
an exactly zero neighborhood vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from issr import numerics as nm
from issr.graphs import sample_neighbors_importance, sample_neighbors_uniform


def _uniform_init(rng, shape, d, dtype):
    bound = 1.0 / np.sqrt(d)
    return nm.parameter(rng.uniform(-bound, bound, size=shape).astype(dtype))


@dataclass
class EmbeddingTables:
    """Trainable item and user embedding tables."""

    items: nm.Tensor  # (num_items, d)
    users: nm.Tensor  # (num_users, d)

    @classmethod
    def init(cls, num_users, num_items, d, rng, dtype=np.float32):
        return cls(
            items=_uniform_init(rng, (num_items, d), d, dtype),
            users=_uniform_init(rng, (num_users, d), d, dtype),
        )

    @property
    def dim(self):
        return self.items.data.shape[1]

    def named(self, prefix="embeddings"):
        return {f"{prefix}/items": self.items, f"{prefix}/users": self.users}


@dataclass
class GcnLayerParams:
    """Aggregator (d->d) and transform (2d->d) for one node type at one layer."""

    agg_weight: nm.Tensor
    agg_bias: nm.Tensor
    trans_weight: nm.Tensor
    trans_bias: nm.Tensor

    @classmethod
    def init(cls, d, rng, dtype=np.float32):
        return cls(
            agg_weight=_uniform_init(rng, (d, d), d, dtype),
            agg_bias=nm.parameter(np.zeros(d, dtype=dtype)),
            trans_weight=_uniform_init(rng, (d, 2 * d), d, dtype),
            trans_bias=nm.parameter(np.zeros(d, dtype=dtype)),
        )

    def named(self, prefix):
        return {
            f"{prefix}/agg_weight": self.agg_weight,
            f"{prefix}/agg_bias": self.agg_bias,
            f"{prefix}/trans_weight": self.trans_weight,
            f"{prefix}/trans_bias": self.trans_bias,
        }


@dataclass
class BipartiteGcnParams:
    """Separate per-layer aggregators and transforms for item and user nodes."""

    item_layers: list
    user_layers: list

    @classmethod
    def init(cls, d, num_layers, rng, dtype=np.float32):
        return cls(
            item_layers=[GcnLayerParams.init(d, rng, dtype) for _ in range(num_layers)],
            user_layers=[GcnLayerParams.init(d, rng, dtype) for _ in range(num_layers)],
        )

    @property
    def num_layers(self):
        return len(self.item_layers)

    def named(self, prefix="bipartite_gcn"):
        out = {}
        for k, layer in enumerate(self.item_layers, start=1):
            out.update(layer.named(f"{prefix}/item_layer{k}"))
        for k, layer in enumerate(self.user_layers, start=1):
            out.update(layer.named(f"{prefix}/user_layer{k}"))
        return out


@dataclass
class CoocGcnParams:
    """Single node type, so one aggregator/transform pair per layer."""

    layers: list

    @classmethod
    def init(cls, d, num_layers, rng, dtype=np.float32):
        return cls(layers=[GcnLayerParams.init(d, rng, dtype) for _ in range(num_layers)])

    @property
    def num_layers(self):
        return len(self.layers)

    def named(self, prefix="cooc_gcn"):
        out = {}
        for k, layer in enumerate(self.layers, start=1):
            out.update(layer.named(f"{prefix}/layer{k}"))
        return out


@dataclass
class ResidualParams:
    """Affine transform preserving the original item representation."""

    weight: nm.Tensor
    bias: nm.Tensor

    @classmethod
    def init(cls, d, rng, dtype=np.float32, identity=False):
        if identity:
            weight = nm.parameter(np.eye(d, dtype=dtype))
        else:
            weight = _uniform_init(rng, (d, d), d, dtype)
        return cls(weight=weight, bias=nm.parameter(np.zeros(d, dtype=dtype)))

    def named(self, prefix="residual"):
        return {f"{prefix}/weight": self.weight, f"{prefix}/bias": self.bias}


def _expand_level(parents, n, rng, sampler):
    """Sample n children per parent node; isolated parents get placeholder
    children (id 0) and a 0 mask so their neighborhood vector is zeroed."""
    children = np.zeros(len(parents) * n, dtype=np.int64)
    mask = np.ones(len(parents), dtype=np.float64)
    for i, node in enumerate(parents):
        sampled = sampler(node, rng)
        if sampled is None:
            mask[i] = 0.0
        else:
            children[i * n : (i + 1) * n] = sampled
    return children, mask


def _gcn_layers(levels, masks, level_tables, layer_params_at, n, activation, dtype):
    """Run the layered aggregate-and-transform recurrence bottom up.

    ``levels[d]`` holds node ids at tree depth d (depth 0 = the requested
    nodes); ``layer_params_at(depth, layer)`` returns the GcnLayerParams for
    the node type at that depth.  Returns the top-layer representations of
    depth-0 nodes.
    """
    num_hops = len(levels) - 1
    reps = [nm.take(level_tables[d], levels[d]) for d in range(len(levels))]
    d_model = reps[0].data.shape[1]
    for layer in range(1, num_hops + 1):
        new_reps = []
        for depth in range(num_hops - layer + 1):
            params = layer_params_at(depth, layer)
            count = len(levels[depth])
            grouped = nm.reshape(reps[depth + 1], (count, n, d_model))
            pooled = nm.tensor_mean(grouped, axis=1)
            # Pooling and the affine aggregator commute (mean of affines =
            # affine of mean), so transform once after pooling.
            z = nm.activation(nm.affine(params.agg_weight, pooled, params.agg_bias), activation)
            mask_col = nm.Tensor(masks[depth].reshape(-1, 1).astype(dtype))
            z = nm.mul(z, mask_col)
            combined = nm.concat([reps[depth], z], axis=-1)
            new_reps.append(
                nm.activation(
                    nm.affine(params.trans_weight, combined, params.trans_bias), activation
                )
            )
        reps = new_reps
    return reps[0]


def bipartite_gcn_embed(item_ids, graph, tables, params, num_hops, num_samples, rng,
                        activation="relu"):
    """Layer-K bipartite-GCN representations for a batch of items.

    Builds the sampled neighborhood tree (items alternate with users), then
    applies the aggregate/transform recurrence.  Deterministic for a fixed
    generator; gradients flow to every touched embedding and weight.
    """
    item_ids = np.asarray(item_ids, dtype=np.int64)
    if num_hops == 0:
        return nm.take(tables.items, item_ids)

    def sampler_for(depth):
        node_type = "item" if depth % 2 == 0 else "user"
        adj = graph.item_adj if node_type == "item" else graph.user_adj

        def sampler(node, r):
            if len(adj[node]) == 0:
                return None
            return sample_neighbors_uniform(graph, node, num_samples, r, node_type=node_type)

        return sampler

    levels = [item_ids]
    masks = []
    for depth in range(num_hops):
        children, mask = _expand_level(levels[depth], num_samples, rng, sampler_for(depth))
        levels.append(children)
        masks.append(mask)

    level_tables = [tables.items if d % 2 == 0 else tables.users for d in range(len(levels))]

    def layer_params_at(depth, layer):
        layers = params.item_layers if depth % 2 == 0 else params.user_layers
        return layers[layer - 1]

    return _gcn_layers(levels, masks, level_tables, layer_params_at, num_samples,
                       activation, tables.items.data.dtype)


def cooc_gcn_embed(item_ids, graph, tables, params, num_hops, num_samples, rng,
                   activation="relu"):
    """Layer-K co-occurrence-GCN representations for a batch of items, using
    weight-proportional neighbor sampling."""
    item_ids = np.asarray(item_ids, dtype=np.int64)
    if num_hops == 0:
        return nm.take(tables.items, item_ids)

    def sampler(node, r):
        if len(graph.neighbors[node]) == 0:
            return None
        return sample_neighbors_importance(graph, node, num_samples, r)

    levels = [item_ids]
    masks = []
    for depth in range(num_hops):
        children, mask = _expand_level(levels[depth], num_samples, rng, sampler)
        levels.append(children)
        masks.append(mask)

    level_tables = [tables.items] * len(levels)

    def layer_params_at(_depth, layer):
        return params.layers[layer - 1]

    return _gcn_layers(levels, masks, level_tables, layer_params_at, num_samples,
                       activation, tables.items.data.dtype)


def residual_embed(item_ids, tables, params, activation="relu"):
    """Transformed copy of the raw item embeddings."""
    e = nm.take(tables.items, np.asarray(item_ids, dtype=np.int64))
    return nm.activation(nm.affine(params.weight, e, params.bias), activation)


def fuse(bipartite_out, cooc_out, residual_out):
    """Element-wise sum of the enabled branch outputs (None = disabled)."""
    branches = [b for b in (bipartite_out, cooc_out, residual_out) if b is not None]
    if not branches:
        raise ValueError("fuse() needs at least one enabled branch")
    shape = branches[0].data.shape
    for b in branches[1:]:
        if b.data.shape != shape:
            raise ValueError(f"fuse shape mismatch: {shape} vs {b.data.shape}")
    out = branches[0]
    for b in branches[1:]:
        out = nm.add(out, b)
    return out


def mf_inter_embed(item_ids, tables):
    """Raw embedding lookup; the low-order stand-in for the graph branches.

    The accompanying matrix-factorization objective on user-item pairs is
    added by the trainer for the variant that uses this encoder.
    """
    return nm.take(tables.items, np.asarray(item_ids, dtype=np.int64))
