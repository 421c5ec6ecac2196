"""Paired bootstrap over ranked sets for comparing two weight heads.

Each resample draws sets with replacement and evaluates the pooled
two-rater ICC of both heads on the identical resample, so the difference
distribution reflects only the heads, not sampling noise.  Per-resample
RNG streams are derived from (seed, resample index), which makes results
independent of execution order.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from rankalign import kernels
from rankalign.errors import (NumericalError, SchemaMismatchError,
                              ValidationError)
from rankalign.model import WeightHead, distance
from rankalign.stats import as_tensor_index, fractional_ranks

_MAX_REDRAWS_PER_RESAMPLE = 1000


@dataclass(frozen=True)
class BootstrapResult:
    delta_icc_mean: float
    ci_low: float
    ci_high: float
    p_value: float
    resamples: int
    seed: int
    confidence: float
    redraws: int
    per_resample_delta: np.ndarray

    def to_dict(self) -> dict:
        return {
            "delta_icc_mean": self.delta_icc_mean,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "p_value": self.p_value,
            "resamples": self.resamples,
            "seed": self.seed,
            "confidence": self.confidence,
            "redraws": self.redraws,
        }


def _rank_blocks(head: WeightHead, lookup: dict, sets):
    """Concatenated within-set metric ranks plus per-set offsets."""
    parts = []
    for rset in sets:
        dists = []
        for image_id in rset.human_order:
            t = lookup.get((rset.set_id, image_id))
            if t is None:
                raise ValidationError(
                    f"missing distance tensor for {(rset.set_id, image_id)!r}")
            dists.append(distance(head, t))
        parts.append(fractional_ranks(dists))
    return parts


def paired_bootstrap(archive, sets, head_a: WeightHead, head_b: WeightHead,
                     resamples: int = 10_000, seed: int = 0,
                     confidence: float = 0.95) -> BootstrapResult:
    """Bootstrap the pooled-ICC difference (head_a minus head_b).

    Returns percentile confidence bounds and a two-sided p-value
    2 * min(frac(delta <= 0), frac(delta >= 0)) clamped to
    [2/resamples, 1].  Resamples with a degenerate ICC denominator are
    redrawn from the same per-resample stream; the redraw count is
    reported.
    """
    if resamples < 100:
        raise ValidationError(f"need at least 100 resamples, got {resamples}")
    if not 0.0 < confidence < 1.0:
        raise ValidationError(f"confidence must lie in (0,1), got {confidence}")
    if not sets:
        raise ValidationError("no ranked sets to resample")
    if head_a.schema != head_b.schema:
        raise SchemaMismatchError("heads disagree on the layer schema")
    lookup = as_tensor_index(archive)

    human_parts = [np.arange(1, len(s.human_order) + 1, dtype=np.float64)
                   for s in sets]
    blocks_a = _rank_blocks(head_a, lookup, sets)
    blocks_b = _rank_blocks(head_b, lookup, sets)
    h = np.concatenate(human_parts)
    ga = np.concatenate(blocks_a)
    gb = np.concatenate(blocks_b)
    lengths = np.array([p.shape[0] for p in human_parts], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
    n_sets = len(sets)

    deltas = np.empty(resamples, dtype=np.float64)
    redraws = 0
    for i in range(resamples):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        for _ in range(_MAX_REDRAWS_PER_RESAMPLE):
            sample = rng.integers(0, n_sets, size=n_sets).astype(np.int64)
            icc_a, ok_a = kernels.pooled_icc_resample(h, ga, offsets, sample)
            if not ok_a:
                redraws += 1
                continue
            icc_b, ok_b = kernels.pooled_icc_resample(h, gb, offsets, sample)
            if not ok_b:
                redraws += 1
                continue
            deltas[i] = icc_a - icc_b
            break
        else:
            raise NumericalError(
                f"resample {i} stayed degenerate after "
                f"{_MAX_REDRAWS_PER_RESAMPLE} redraws")

    tail = 100.0 * (1.0 - confidence) / 2.0
    ci_low, ci_high = np.percentile(deltas, [tail, 100.0 - tail])
    frac_le = float(np.mean(deltas <= 0.0))
    frac_ge = float(np.mean(deltas >= 0.0))
    p = 2.0 * min(frac_le, frac_ge)
    p = min(1.0, max(p, 2.0 / resamples))
    return BootstrapResult(
        delta_icc_mean=float(np.mean(deltas)),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        p_value=p,
        resamples=resamples,
        seed=int(seed),
        confidence=float(confidence),
        redraws=redraws,
        per_resample_delta=deltas,
    )


def save_bootstrap(result: BootstrapResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=1)
        fh.write("\n")


def save_deltas_csv(result: BootstrapResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["resample", "delta_icc"])
        for i, d in enumerate(result.per_resample_delta):
            w.writerow([i, repr(float(d))])
