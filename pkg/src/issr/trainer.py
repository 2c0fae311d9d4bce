"""Training orchestration: minibatch loop, Adam updates, validation-based
early stopping, and bitwise-reproducible checkpoints.

Determinism contract: every random draw derives from the config seed.  Epoch
e uses a generator seeded with (seed, TRAIN_STREAM, e) for shuffling,
negative sampling, and GCN neighbor sampling, so resuming from an epoch
checkpoint replays exactly what a continuous run would have done.
Evaluation draws from a separate (seed, eval) stream.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import struct
from dataclasses import dataclass

import numpy as np

from issr import numerics as nm
from issr.data import build_eval_instances, build_training_instances, sample_negatives
from issr.graphs import build_bipartite, build_cooccurrence
from issr.metrics import evaluate, exclusion_sets
from issr.model import (
    VARIANTS,
    ForwardSettings,
    ModelParams,
    loss_on_batch,
    select_variant,
)

log = logging.getLogger(__name__)

_INIT_STREAM = 0
_TRAIN_STREAM = 1

_CKPT_MAGIC = b"ISCK"
_CKPT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """All hyperparameters; serializes to flat key=value lines."""

    d: int = 64
    context_len: int = 5
    num_targets: int = 3
    k_bipartite: int = 2
    k_cooc: int = 1
    num_samples: int = 10
    num_negatives: int = 3
    batch_size: int = 256
    epochs: int = 10
    learning_rate: float = 1e-3
    seed: int = 42
    variant: str = "issr"
    gcn_activation: str = "relu"
    residual_activation: str = "relu"
    attention_activation: str = "tanh"
    patience: int = 5

    def validate(self):
        positive = (
            "d", "context_len", "num_targets", "num_samples", "num_negatives",
            "batch_size", "epochs", "patience",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"config field {name} must be >= 1")
        for name in ("k_bipartite", "k_cooc"):
            if getattr(self, name) < 0:
                raise ValueError(f"config field {name} must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        select_variant(self.variant)
        for name in ("gcn_activation", "residual_activation", "attention_activation"):
            if getattr(self, name) not in nm.ACTIVATIONS:
                raise ValueError(f"config field {name}: unknown activation {getattr(self, name)!r}")
        return self

    def settings(self):
        return ForwardSettings(
            k_bipartite=self.k_bipartite,
            k_cooc=self.k_cooc,
            num_samples=self.num_samples,
            gcn_activation=self.gcn_activation,
            residual_activation=self.residual_activation,
            attention_activation=self.attention_activation,
        )

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        field_types = {f.name: f.type for f in dataclasses.fields(cls)}
        seen = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in field_types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            if key in seen:
                raise ValueError(f"config line {lineno}: duplicate key {key!r}")
            caster = {"int": int, "float": float, "str": str}[field_types[key]]
            try:
                seen[key] = caster(value)
            except ValueError:
                raise ValueError(
                    f"config line {lineno}: cannot parse {value!r} as {field_types[key]}"
                ) from None
        missing = sorted(set(field_types) - set(seen))
        if missing:
            raise ValueError(f"config missing keys: {', '.join(missing)}")
        return cls(**seen).validate()

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_text())

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read())

    def hash(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


@dataclass
class EpochStats:
    epoch: int
    loss: float
    recall10: float
    ndcg10: float

    def line(self):
        return f"{self.epoch}\t{self.loss:.6f}\t{self.recall10:.6f}\t{self.ndcg10:.6f}"


@dataclass
class Checkpoint:
    """Everything needed to resume training bitwise-identically from the end
    of ``epoch``, plus the best-so-far parameters for serving."""

    config: TrainConfig
    epoch: int
    params: ModelParams
    best_params: ModelParams
    best_metric: float
    best_epoch: int
    adam_state: nm.AdamState
    num_users: int
    num_items: int

    def save(self, path):
        names = list(self.params.named())
        current = self.params.named()
        best = self.best_params.named()
        config_text = self.config.to_text().encode("utf-8")
        with open(path, "wb") as f:
            f.write(_CKPT_MAGIC)
            f.write(struct.pack("<B", _CKPT_VERSION))
            f.write(struct.pack("<I", len(config_text)))
            f.write(config_text)
            f.write(struct.pack("<IIdII", self.epoch, self.best_epoch,
                                self.best_metric, self.num_users, self.num_items))
            f.write(struct.pack("<I", len(names)))
            for name in names:
                encoded = name.encode("utf-8")
                f.write(struct.pack("<H", len(encoded)))
                f.write(encoded)
                nm.write_array(f, current[name].data)
                nm.write_array(f, best[name].data)
            st = self.adam_state
            f.write(struct.pack("<Qdddd", st.step_count, st.learning_rate,
                                st.beta1, st.beta2, st.epsilon))
            for m, v in zip(st.first_moment, st.second_moment):
                nm.write_array(f, m)
                nm.write_array(f, v)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            if f.read(4) != _CKPT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint file")
            (version,) = struct.unpack("<B", f.read(1))
            if version != _CKPT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {version}")
            (config_len,) = struct.unpack("<I", f.read(4))
            config = TrainConfig.from_text(f.read(config_len).decode("utf-8"))
            epoch, best_epoch, best_metric, num_users, num_items = struct.unpack(
                "<IIdII", f.read(24)
            )
            (num_params,) = struct.unpack("<I", f.read(4))
            names = []
            current_arrays = []
            best_arrays = []
            for _ in range(num_params):
                (name_len,) = struct.unpack("<H", f.read(2))
                names.append(f.read(name_len).decode("utf-8"))
                current_arrays.append(nm.read_array(f))
                best_arrays.append(nm.read_array(f))
            step_count, lr, beta1, beta2, epsilon = struct.unpack("<Qdddd", f.read(40))
            first, second = [], []
            for _ in range(num_params):
                first.append(nm.read_array(f))
                second.append(nm.read_array(f))
        wiring = select_variant(config.variant)
        template = ModelParams.init(
            num_users, num_items, config.d, wiring, config.k_bipartite, config.k_cooc,
            np.random.default_rng(0),
        )
        expected = list(template.named())
        if names != expected:
            raise ValueError(f"{path}: parameter names do not match the config's variant")
        params = template.clone_with([nm.parameter(a) for a in current_arrays])
        best_params = template.clone_with([nm.parameter(a) for a in best_arrays])
        adam_state = nm.AdamState(
            first_moment=first,
            second_moment=second,
            step_count=step_count,
            learning_rate=lr,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )
        return cls(
            config=config,
            epoch=epoch,
            params=params,
            best_params=best_params,
            best_metric=best_metric,
            best_epoch=best_epoch,
            adam_state=adam_state,
            num_users=num_users,
            num_items=num_items,
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list
    first_batch_loss: float
    stopped_early: bool


def _epoch_batches(instances, user_items, num_items, config, rng):
    """Shuffle instances and yield (batch_index, contexts, users, candidates,
    labels) with negatives freshly drawn from this epoch's generator."""
    order = rng.permutation(len(instances))
    pool = config.num_targets + config.num_negatives
    for batch_idx, start in enumerate(range(0, len(order), config.batch_size)):
        chosen = order[start : start + config.batch_size]
        rows = []
        for i in chosen:
            inst = sample_negatives(
                instances[i], user_items[instances[i].user_id], num_items,
                config.num_negatives, rng,
            )
            rows.append(inst)
        contexts = np.array([r.context for r in rows], dtype=np.int64)
        users = np.array([r.user_id for r in rows], dtype=np.int64)
        cands = np.array(
            [list(r.positives) + list(r.negatives) for r in rows], dtype=np.int64
        )
        labels = np.zeros((len(rows), pool), dtype=np.float64)
        labels[:, : config.num_targets] = 1.0
        yield batch_idx, contexts, users, cands, labels


def train(config, split, graphs=None, resume_from=None, dtype=np.float32,
          on_epoch=None):
    """Run (or resume) training on a split; returns the final checkpoint and
    the per-epoch `epoch loss recall@10 ndcg@10` history.  ``on_epoch`` is
    called with each EpochStats as it completes."""
    config.validate()
    wiring = select_variant(config.variant)
    settings = config.settings()
    if graphs is None:
        graphs = (build_bipartite(split), build_cooccurrence(split))
    bipartite_graph, cooc_graph = graphs

    instances = build_training_instances(split, config.context_len, config.num_targets)
    if not instances:
        raise TrainingError(
            f"no training windows: every user has fewer than "
            f"{config.context_len + config.num_targets} train interactions"
        )
    user_items = {
        u: split.user_item_set(u) for u in sorted({i.user_id for i in instances})
    }
    val_instances = build_eval_instances(
        split, "val", config.context_len, config.num_targets
    )
    val_exclusions = exclusion_sets(split, val_instances, "val")

    if resume_from is None:
        init_rng = np.random.default_rng([config.seed, _INIT_STREAM])
        params = ModelParams.init(
            split.num_users, split.num_items, config.d, wiring,
            config.k_bipartite, config.k_cooc, init_rng, dtype,
        )
        checkpoint = Checkpoint(
            config=config,
            epoch=0,
            params=params,
            best_params=params.copy(),
            best_metric=float("-inf"),
            best_epoch=0,
            adam_state=nm.AdamState.initial(
                [t.data for t in params.tensors()], config.learning_rate
            ),
            num_users=split.num_users,
            num_items=split.num_items,
        )
    else:
        checkpoint = resume_from
        # the epoch budget may be extended on resume; everything else must match
        ours = dataclasses.replace(config, epochs=1).hash()
        theirs = dataclasses.replace(checkpoint.config, epochs=1).hash()
        if ours != theirs:
            raise TrainingError("resume config does not match the checkpoint's config")
        checkpoint.config = config
        params = checkpoint.params

    optimizer = nm.AdamOptimizer(params.named(), config.learning_rate)
    optimizer.state = checkpoint.adam_state

    history = []
    first_batch_loss = float("nan")
    stopped_early = False
    epoch = checkpoint.epoch
    while epoch < config.epochs:
        epoch += 1
        rng = np.random.default_rng([config.seed, _TRAIN_STREAM, epoch])
        loss_sum = 0.0
        count = 0
        for batch_idx, contexts, users, cands, labels in _epoch_batches(
            instances, user_items, split.num_items, config, rng
        ):
            optimizer.zero_grad()
            batch = loss_on_batch(
                params, wiring, contexts, users, cands, labels,
                bipartite_graph, cooc_graph, settings, rng,
            )
            loss_value = float(batch.total.data)
            if not np.isfinite(loss_value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}"
                )
            if epoch == checkpoint.epoch + 1 and batch_idx == 0 and resume_from is None:
                first_batch_loss = loss_value
            batch.total.backward()
            optimizer.step()
            loss_sum += loss_value * len(contexts)
            count += len(contexts)

        mean_loss = loss_sum / count
        if val_instances:
            report = evaluate(
                params, wiring, settings, val_instances, val_exclusions,
                bipartite_graph, cooc_graph, config.seed,
            )
            recall10 = report[("recall", 10)]
            ndcg10 = report[("ndcg", 10)]
        else:
            recall10 = ndcg10 = 0.0
        stats = EpochStats(epoch=epoch, loss=mean_loss, recall10=recall10, ndcg10=ndcg10)
        history.append(stats)
        log.info("%s", stats.line())
        if on_epoch is not None:
            on_epoch(stats)

        checkpoint.epoch = epoch
        if recall10 > checkpoint.best_metric:
            checkpoint.best_metric = recall10
            checkpoint.best_epoch = epoch
            checkpoint.best_params = params.copy()
        elif epoch - checkpoint.best_epoch >= config.patience:
            stopped_early = True
            log.info("early stop at epoch %d (best epoch %d)", epoch, checkpoint.best_epoch)
            break

    return TrainResult(
        checkpoint=checkpoint,
        history=history,
        first_batch_loss=first_batch_loss,
        stopped_early=stopped_early,
    )
