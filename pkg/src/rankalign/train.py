"""Fine-tunes combination weights on ranking pairs with a margin hinge loss.

The optimizer is plain Adam with bias correction, followed by an
elementwise clamp at zero after every step so weights stay non-negative.
Training is deterministic for a fixed (seed, config, data) triple within a
given compute backend: epoch shuffles draw from per-epoch PCG64 streams
and batches reduce in a fixed order.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from rankalign import kernels
from rankalign.dataset import PairTuple, RankedSet, SplitPlan, build_pairs
from rankalign.errors import (NumericalError, SchemaMismatchError,
                              UndefinedStatisticError, ValidationError)
from rankalign.model import LayerSchema, WeightHead, distance
from rankalign.stats import as_tensor_index, fractional_ranks, spearman_rho


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 0.03
    learning_rate: float = 4e-4
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if self.margin < 0:
            raise ValidationError(f"margin must be >= 0, got {self.margin}")
        if self.learning_rate <= 0:
            raise ValidationError(
                f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValidationError(
                f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ValidationError(
                f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")
        for name in ("adam_beta1", "adam_beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie in (0,1), got {v}")
        if self.adam_epsilon <= 0:
            raise ValidationError(
                f"adam_epsilon must be > 0, got {self.adam_epsilon}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_rho: float
    weight_l1: float


@dataclass(frozen=True)
class TrainTrace:
    records: tuple[EpochRecord, ...]
    best_epoch: int | None
    head: WeightHead
    per_layer: bool = False


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def hinge_loss(d_pos: float, d_neg: float, m: float) -> float:
    """max(0, d_pos - d_neg + m): zero once pos beats neg by the margin."""
    if m < 0:
        raise ValidationError(f"margin must be >= 0, got {m}")
    return max(0.0, d_pos - d_neg + m)


def _delta_rows(archive, tuples: list[PairTuple]) -> np.ndarray:
    """Per-pair difference vectors flat(pos) - flat(neg), one row per tuple."""
    lookup = as_tensor_index(archive)
    rows = []
    for p in tuples:
        pos = lookup.get((p.set_id, p.pos_id))
        if pos is None:
            raise ValidationError(
                f"missing distance tensor for {(p.set_id, p.pos_id)!r}")
        neg = lookup.get((p.set_id, p.neg_id))
        if neg is None:
            raise ValidationError(
                f"missing distance tensor for {(p.set_id, p.neg_id)!r}")
        rows.append(pos.flat() - neg.flat())
    return np.stack(rows)


def batch_loss_and_grad(head: WeightHead, archive, tuples: list[PairTuple],
                        m: float) -> tuple[float, np.ndarray]:
    """Mean hinge loss over the tuples and its gradient in the weights.

    The gradient sums (flat_pos - flat_neg) over tuples with a strictly
    positive hinge and divides by the total tuple count, i.e. it is the
    exact gradient of the mean loss, with subgradient 0 at the hinge
    corner.
    """
    if m < 0:
        raise ValidationError(f"margin must be >= 0, got {m}")
    if not tuples:
        raise ValidationError("cannot average a loss over zero tuples")
    delta = _delta_rows(archive, tuples)
    return kernels.hinge_loss_grad(delta, head.flat, m)


def adam_step(weights: np.ndarray, state: AdamState, gradient: np.ndarray,
              config: TrainConfig) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update, then project onto weights >= 0."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if not np.all(np.isfinite(gradient)):
        raise NumericalError("non-finite gradient passed to the optimizer")
    w2, m2, v2 = kernels.adam_update(
        np.asarray(weights, dtype=np.float64), gradient, state.m, state.v,
        state.step + 1, config.learning_rate, config.adam_beta1,
        config.adam_beta2, config.adam_epsilon)
    return w2, AdamState(m2, v2, state.step + 1)


def _layer_collapse(delta: np.ndarray, schema: LayerSchema) -> np.ndarray:
    """Sum columns within each layer: ties the weights to one scalar per layer."""
    return np.stack([delta[:, s].sum(axis=1) for s in schema.slices()], axis=1)


def _expand_per_layer(schema: LayerSchema, per_layer: np.ndarray) -> np.ndarray:
    return np.concatenate([
        np.full(c, per_layer[i]) for i, c in enumerate(schema.channel_counts)])


def validation_rho(head: WeightHead, lookup: dict,
                   val_sets: list[RankedSet]) -> float:
    """Merged-aggregate Spearman rho on the validation sets; NaN if undefined."""
    human_parts, metric_parts = [], []
    for rset in val_sets:
        dists = []
        for image_id in rset.human_order:
            t = lookup.get((rset.set_id, image_id))
            if t is None:
                raise ValidationError(
                    f"missing distance tensor for {(rset.set_id, image_id)!r}")
            dists.append(distance(head, t))
        human_parts.append(np.arange(1, len(dists) + 1, dtype=np.float64))
        metric_parts.append(fractional_ranks(dists))
    try:
        return spearman_rho(np.concatenate(human_parts),
                            np.concatenate(metric_parts))
    except UndefinedStatisticError:
        return math.nan


def fit(schema: LayerSchema, archive, ranked_sets: list[RankedSet],
        split: SplitPlan, config: TrainConfig, init: WeightHead | None = None,
        pair_scheme: str = "all_pairs", per_layer: bool = False) -> TrainTrace:
    """Run the full fine-tuning loop and return the best-validation head.

    Epochs shuffle the training pairs with a stream seeded by
    (config.seed, epoch), walk them in batches of config.batch_size, and
    stop early after config.patience epochs without a new best validation
    rho.  The returned head is the snapshot from the best epoch (the
    initialization when no epoch finished or none improved).
    """
    lookup = as_tensor_index(archive)
    sets_by_id = {s.set_id: s for s in ranked_sets}
    for sid in (*split.train_set_ids, *split.val_set_ids):
        if sid not in sets_by_id:
            raise ValidationError(f"split references unknown set {sid!r}")
    train_sets = [sets_by_id[sid] for sid in split.train_set_ids]
    val_sets = [sets_by_id[sid] for sid in split.val_set_ids]
    if not train_sets:
        raise ValidationError("empty training partition")
    if not val_sets:
        raise ValidationError("empty validation partition")

    if init is None:
        init = WeightHead.ones(schema)
    elif init.schema != schema:
        raise SchemaMismatchError(
            "initialization head does not match the archive schema")

    pairs = []
    for s in train_sets:
        pairs.extend(build_pairs(s, pair_scheme))
    if not pairs:
        raise ValidationError("no training pairs")
    delta = _delta_rows(lookup, pairs)
    if per_layer:
        delta = _layer_collapse(delta, schema)
        w = np.array([init.weights[i].mean()
                      for i in range(len(schema.layers))])
    else:
        w = init.flat.copy()

    def as_head(vec: np.ndarray) -> WeightHead:
        flat = _expand_per_layer(schema, vec) if per_layer else vec
        return WeightHead.from_flat(schema, flat)

    n_pairs = delta.shape[0]
    state = AdamState.fresh(w.shape[0])
    records: list[EpochRecord] = []
    best_epoch: int | None = None
    best_rho = -math.inf
    best_w = w.copy()
    epochs_since_best = 0

    for epoch in range(config.max_epochs):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, epoch)))
        perm = rng.permutation(n_pairs)
        hinge_total = 0.0
        for start in range(0, n_pairs, config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss, grad = kernels.hinge_loss_grad(delta[idx], w, config.margin)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            w, state = adam_step(w, state, grad, config)
            hinge_total += loss * idx.shape[0]
        if np.any(w < 0):
            raise NumericalError(
                f"projection invariant violated at epoch {epoch}")
        head_now = as_head(w)
        val = validation_rho(head_now, lookup, val_sets)
        records.append(EpochRecord(
            epoch=epoch,
            train_loss=hinge_total / n_pairs,
            val_rho=val,
            weight_l1=float(np.sum(np.abs(head_now.flat))),
        ))
        if not math.isnan(val) and val > best_rho:
            best_rho = val
            best_epoch = epoch
            best_w = w.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                break

    head = as_head(best_w) if best_epoch is not None else init
    return TrainTrace(records=tuple(records), best_epoch=best_epoch,
                      head=head, per_layer=per_layer)


def save_trace(trace: TrainTrace, path) -> None:
    doc = {
        "best_epoch": trace.best_epoch,
        "per_layer": trace.per_layer,
        "epochs": [
            {"epoch": r.epoch, "train_loss": r.train_loss,
             "val_rho": None if math.isnan(r.val_rho) else r.val_rho,
             "weight_l1": r.weight_l1}
            for r in trace.records
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
