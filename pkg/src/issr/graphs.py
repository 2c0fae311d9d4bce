"""User-item bipartite and item-item co-occurrence graphs plus the two
neighbor-sampling strategies the graph encoders rely on.

Both graphs are built from the train split only and are immutable after
construction.  Uniform sampling serves the bipartite encoder; weighted
(importance) sampling serves the co-occurrence encoder.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np


class IsolatedNodeError(ValueError):
    """Raised when sampling neighbors of a node that has none; encoders fall
    back to a zero neighborhood vector instead of calling the sampler."""


@dataclass
class BipartiteGraph:
    """Deduplicated user-item interaction edges, adjacency in both directions."""

    user_adj: list  # user_adj[u] = sorted distinct item ids
    item_adj: list  # item_adj[v] = sorted distinct user ids

    @property
    def num_users(self):
        return len(self.user_adj)

    @property
    def num_items(self):
        return len(self.item_adj)


@dataclass
class CoocGraph:
    """Symmetric weighted adjacency counting adjacent item pairs in train
    sequences."""

    neighbors: list  # neighbors[v] = sorted item ids
    weights: list  # weights[v][i] = count for neighbors[v][i]
    _cumweights: list = field(default=None, repr=False)

    @property
    def num_items(self):
        return len(self.neighbors)

    def weight(self, a, b):
        row = self.neighbors[a]
        idx = np.searchsorted(row, b) if len(row) else 0
        if idx < len(row) and row[idx] == b:
            return self.weights[a][idx]
        return 0

    def _cum(self, item):
        if self._cumweights is None:
            self._cumweights = [None] * self.num_items
        if self._cumweights[item] is None:
            self._cumweights[item] = np.cumsum(self.weights[item], dtype=np.float64)
        return self._cumweights[item]


def build_bipartite(split):
    """Edges from the train split; an edge exists iff the user interacted
    with the item, regardless of how many times."""
    user_adj = [sorted(set(seq)) for seq in split.train]
    item_sets = [set() for _ in range(split.num_items)]
    for u, seq in enumerate(split.train):
        for v in set(seq):
            item_sets[v].add(u)
    item_adj = [sorted(s) for s in item_sets]
    return BipartiteGraph(user_adj=user_adj, item_adj=item_adj)


def build_cooccurrence(split):
    """Edge weight = number of positions where two items sit next to each
    other in some user's train sequence.  Consecutive repeats of one item
    become self-edges."""
    counts = Counter()
    for seq in split.train:
        for a, b in zip(seq, seq[1:]):
            counts[(min(a, b), max(a, b))] += 1
    adj = [{} for _ in range(split.num_items)]
    for (a, b), w in counts.items():
        adj[a][b] = w
        if a != b:
            adj[b][a] = w
    neighbors = []
    weights = []
    for row in adj:
        nbrs = sorted(row)
        neighbors.append(np.array(nbrs, dtype=np.int64))
        weights.append(np.array([row[n] for n in nbrs], dtype=np.int64))
    return CoocGraph(neighbors=neighbors, weights=weights)


def sample_neighbors_uniform(graph, node, n, rng, node_type="item"):
    """Draw ``n`` neighbors of a bipartite-graph node uniformly at random.

    Without replacement when the degree covers the request (lower variance),
    with replacement otherwise so the output width is always ``n``.
    """
    adj = graph.item_adj if node_type == "item" else graph.user_adj
    neighbors = adj[node]
    degree = len(neighbors)
    if degree == 0:
        raise IsolatedNodeError(f"{node_type} {node} has no neighbors")
    if degree >= n:
        idx = rng.choice(degree, size=n, replace=False)
    else:
        idx = rng.integers(0, degree, size=n)
    return [neighbors[i] for i in idx]


def sample_neighbors_importance(graph, item, n, rng):
    """Draw ``n`` neighbors of a co-occurrence node with probability
    proportional to edge weight, always with replacement."""
    neighbors = graph.neighbors[item]
    if len(neighbors) == 0:
        raise IsolatedNodeError(f"item {item} has no co-occurrence neighbors")
    cum = graph._cum(item)
    total = cum[-1]
    draws = np.searchsorted(cum, rng.random(n) * total, side="right")
    return [int(neighbors[i]) for i in draws]


# --- line-oriented adjacency text format: "node: nbr[:weight],..." ---

def save_bipartite(path, graph):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# bipartite num_users={graph.num_users} num_items={graph.num_items}\n")
        for u, nbrs in enumerate(graph.user_adj):
            f.write(f"u{u}: {','.join(map(str, nbrs))}\n")
        for v, nbrs in enumerate(graph.item_adj):
            f.write(f"v{v}: {','.join(map(str, nbrs))}\n")


def load_bipartite(path):
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("# bipartite"):
            raise ValueError(f"{path}: missing bipartite header")
        meta = dict(kv.split("=") for kv in header.split()[2:])
        user_adj = [[] for _ in range(int(meta["num_users"]))]
        item_adj = [[] for _ in range(int(meta["num_items"]))]
        for line in f:
            node, _, rest = line.rstrip("\n").partition(": ")
            ids = [int(x) for x in rest.split(",")] if rest else []
            if node.startswith("u"):
                user_adj[int(node[1:])] = ids
            else:
                item_adj[int(node[1:])] = ids
    return BipartiteGraph(user_adj=user_adj, item_adj=item_adj)


def save_cooccurrence(path, graph):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# cooc num_items={graph.num_items}\n")
        for v in range(graph.num_items):
            entries = ",".join(
                f"{n}:{w}" for n, w in zip(graph.neighbors[v], graph.weights[v])
            )
            f.write(f"{v}: {entries}\n")


def load_cooccurrence(path):
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("# cooc"):
            raise ValueError(f"{path}: missing cooc header")
        meta = dict(kv.split("=") for kv in header.split()[2:])
        num_items = int(meta["num_items"])
        neighbors = [np.array([], dtype=np.int64)] * num_items
        weights = [np.array([], dtype=np.int64)] * num_items
        for line in f:
            node, _, rest = line.rstrip("\n").partition(": ")
            v = int(node)
            if rest:
                pairs = [e.split(":") for e in rest.split(",")]
                neighbors[v] = np.array([int(p[0]) for p in pairs], dtype=np.int64)
                weights[v] = np.array([int(p[1]) for p in pairs], dtype=np.int64)
    return CoocGraph(neighbors=neighbors, weights=weights)
