"""Planted-model synthetic data for end-to-end verification.

A hidden weight head is drawn at random, distance tensors are drawn
uniform non-negative, and each set's "human" ordering is the ranking the
hidden head induces, optionally corrupted by a number of uniformly random
adjacent transpositions.  Everything is a pure function of the seed, so a
trained head can be checked against known ground truth.
"""

from dataclasses import dataclass

import numpy as np

from rankalign.dataset import RankedSet
from rankalign.errors import ValidationError
from rankalign.model import DistanceTensor, LayerSchema, WeightHead, distance


@dataclass(frozen=True)
class SynthConfig:
    set_count: int
    schema: LayerSchema
    images_per_set: int = 10
    noise_swaps: int = 0
    seed: int = 0
    value_scale: float = 1.0

    def __post_init__(self):
        if self.set_count < 1:
            raise ValidationError(f"set_count must be >= 1, got {self.set_count}")
        if self.images_per_set < 2:
            raise ValidationError(
                f"images_per_set must be >= 2, got {self.images_per_set}")
        if self.noise_swaps < 0:
            raise ValidationError(
                f"noise_swaps must be >= 0, got {self.noise_swaps}")
        if not self.value_scale > 0:
            raise ValidationError(
                f"value_scale must be > 0, got {self.value_scale}")


def generate(config: SynthConfig) -> tuple[WeightHead, list[DistanceTensor], list[RankedSet]]:
    """Draw (hidden head, tensors, ranked sets) from one seeded stream.

    Draw order is fixed: hidden weights first, then per set the tensor
    values image by image, then the noise swap positions.  human_order is
    ascending hidden-head distance before noise is applied.
    """
    rng = np.random.default_rng(np.random.SeedSequence((config.seed,)))
    schema = config.schema
    hidden = WeightHead(schema, tuple(
        rng.random(c) for c in schema.channel_counts))

    tensors: list[DistanceTensor] = []
    sets: list[RankedSet] = []
    width = max(4, len(str(config.set_count - 1)))
    for si in range(config.set_count):
        set_id = f"set{si:0{width}d}"
        images = tuple(f"img{j:02d}" for j in range(config.images_per_set))
        dists = []
        for image_id in images:
            values = tuple(
                (rng.random(c) * config.value_scale).astype(np.float32)
                for c in schema.channel_counts)
            t = DistanceTensor(set_id, image_id, values)
            tensors.append(t)
            dists.append(distance(hidden, t))
        order = list(np.argsort(np.asarray(dists), kind="stable"))
        for _ in range(config.noise_swaps):
            pos = int(rng.integers(0, config.images_per_set - 1))
            order[pos], order[pos + 1] = order[pos + 1], order[pos]
        sets.append(RankedSet(
            set_id=set_id,
            target_id=f"tgt{si:0{width}d}",
            images=images,
            human_order=tuple(images[i] for i in order),
        ))
    return hidden, tensors, sets
