"""Scikit-learn style wrapper around the training pipeline.

``ISSRRecommender.fit`` takes raw interaction events as a numeric array and
handles vocabulary mapping, chronological splitting, graph construction, and
training; ``recommend``/``predict`` return item ids in the caller's original
vocabulary.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from issr.data import chronological_split, log_from_records
from issr.graphs import build_bipartite, build_cooccurrence
from issr.metrics import build_eval_report
from issr.model import forward_interest, select_variant
from issr.trainer import TrainConfig, train


class ISSRRecommender(BaseEstimator):
    """Sequential recommender over dual-graph and recurrent encoders.

    Parameters mirror :class:`issr.trainer.TrainConfig`; ``split_ratios``
    controls the internal chronological train/val/test split.

    Examples
    --------
    >>> events = [[1, 10, 100], [1, 11, 101], [2, 10, 103]]
    >>> model = ISSRRecommender(epochs=1).fit(events)  # doctest: +SKIP
    >>> model.recommend([1], k=5)  # doctest: +SKIP
    """

    def __init__(self, d=64, context_len=5, num_targets=3, k_bipartite=2, k_cooc=1,
                 num_samples=10, num_negatives=3, batch_size=256, epochs=10,
                 learning_rate=1e-3, seed=42, variant="issr", gcn_activation="relu",
                 residual_activation="relu", attention_activation="tanh", patience=5,
                 split_ratios=(0.7, 0.1, 0.2)):
        self.d = d
        self.context_len = context_len
        self.num_targets = num_targets
        self.k_bipartite = k_bipartite
        self.k_cooc = k_cooc
        self.num_samples = num_samples
        self.num_negatives = num_negatives
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed
        self.variant = variant
        self.gcn_activation = gcn_activation
        self.residual_activation = residual_activation
        self.attention_activation = attention_activation
        self.patience = patience
        self.split_ratios = split_ratios

    def _config(self):
        return TrainConfig(
            d=self.d,
            context_len=self.context_len,
            num_targets=self.num_targets,
            k_bipartite=self.k_bipartite,
            k_cooc=self.k_cooc,
            num_samples=self.num_samples,
            num_negatives=self.num_negatives,
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
            variant=self.variant,
            gcn_activation=self.gcn_activation,
            residual_activation=self.residual_activation,
            attention_activation=self.attention_activation,
            patience=self.patience,
        ).validate()

    def fit(self, X, y=None):
        """Train on an (n_events, 3) array of (user, item, timestamp) rows.

        A fourth column (ratings, as in MovieLens dumps ordered user, item,
        rating, timestamp) is accepted and ignored.  Ids may be arbitrary
        integers; they are mapped to dense indices internally.
        """
        X = check_array(X, dtype="numeric", ensure_2d=True)
        if X.shape[1] not in (3, 4):
            raise ValueError(
                f"X must have 3 (user, item, timestamp) or 4 (user, item, rating, "
                f"timestamp) columns, got {X.shape[1]}"
            )
        config = self._config()
        records = [
            (int(u), int(i), int(t)) for u, i, t in zip(X[:, 0], X[:, 1], X[:, -1])
        ]
        log = log_from_records(records, source="X")
        self.interactions_ = log
        self.split_ = chronological_split(log, self.split_ratios)
        self.graphs_ = (build_bipartite(self.split_), build_cooccurrence(self.split_))
        result = train(config, self.split_, graphs=self.graphs_)
        self.checkpoint_ = result.checkpoint
        self.history_ = result.history
        self.n_users_ = log.num_users
        self.n_items_ = log.num_items
        self.user_index_ = {label: idx for idx, label in enumerate(log.user_labels)}
        self.item_labels_ = np.asarray(log.item_labels)
        return self

    def _serving_params(self):
        return self.checkpoint_.best_params

    def _user_scores(self, dense_user, rng):
        """Full-catalogue scores from the user's most recent context window."""
        seq = self.split_.full_sequence(dense_user)
        if not seq:
            raise ValueError(f"user {self.interactions_.user_labels[dense_user]} has no history")
        context = seq[-self.context_len :]
        params = self._serving_params()
        wiring = select_variant(self.variant)
        s_u = forward_interest(
            params, wiring, np.array([context]), np.array([dense_user]),
            self.graphs_[0], self.graphs_[1], self._config().settings(), rng,
        )
        return np.asarray(s_u.data[0] @ params.embeddings.items.data.T)

    def recommend(self, users, k=10):
        """Top-k unseen items per user, as original item ids, best first."""
        check_is_fitted(self, "checkpoint_")
        rng = np.random.default_rng([self.seed, 3])
        out = []
        for user in users:
            if user not in self.user_index_:
                raise ValueError(f"unknown user id {user!r}")
            dense = self.user_index_[user]
            scores = self._user_scores(dense, rng)
            seen = self.split_.user_item_set(dense)
            if self.n_items_ - len(seen) < k:
                raise ValueError(
                    f"user {user!r} has interacted with all but "
                    f"{self.n_items_ - len(seen)} items, cannot return top-{k}"
                )
            mask = np.ones(self.n_items_, dtype=bool)
            mask[list(seen)] = False
            cand = np.flatnonzero(mask)
            order = np.lexsort((cand, -scores[cand]))
            out.append(self.item_labels_[cand[order[:k]]])
        return np.asarray(out)

    def predict(self, X):
        """Most likely next unseen item for each user id in X."""
        X = check_array(X, dtype="numeric", ensure_2d=False)
        users = np.asarray(X).ravel()
        return self.recommend([int(u) for u in users], k=1).ravel()

    def evaluate(self, segment="test"):
        """Ranking metrics of the best checkpoint on the internal split."""
        check_is_fitted(self, "checkpoint_")
        return build_eval_report(
            self._serving_params(), select_variant(self.variant),
            self._config().settings(), self.split_, segment,
            self.graphs_[0], self.graphs_[1], self.seed,
            context_len=self.context_len, num_targets=self.num_targets,
        )

    def score(self, X=None, y=None):
        """Test-segment Recall@10 of the internal split (higher is better)."""
        return self.evaluate("test")[("recall", 10)]
