"""Ranked image sets, pairwise training tuples, and set-level splits.

Rankings arrive as line-delimited JSON records, one set per line.  Each
human ordering is a strict total order (most similar first); ties are
rejected at load time.  Splits shuffle set ids with a seeded PCG64
generator so identical seeds reproduce identical plans everywhere.
"""

import json
from dataclasses import dataclass

import numpy as np

from rankalign.errors import FormatError, ValidationError

PAIR_SCHEMES = ("all_pairs", "adjacent")


@dataclass(frozen=True)
class RankedSet:
    """One target image, its candidates, and the human's total ordering."""

    set_id: str
    target_id: str
    images: tuple[str, ...]
    human_order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(str(i) for i in self.images))
        object.__setattr__(self, "human_order",
                           tuple(str(i) for i in self.human_order))
        if len(self.images) < 2:
            raise ValidationError(
                f"set {self.set_id!r} needs at least 2 images, has {len(self.images)}")
        if len(set(self.images)) != len(self.images):
            raise ValidationError(f"set {self.set_id!r} has duplicate image ids")
        if sorted(self.human_order) != sorted(self.images):
            raise ValidationError(
                f"set {self.set_id!r}: human_order is not a permutation of images")

    def human_rank(self) -> dict[str, int]:
        """Map image id to its 1-based human rank (1 = most similar)."""
        return {img: i + 1 for i, img in enumerate(self.human_order)}


@dataclass(frozen=True)
class PairTuple:
    """A (more similar, less similar) supervision pair within one set."""

    set_id: str
    pos_id: str
    neg_id: str

    def __post_init__(self):
        if self.pos_id == self.neg_id:
            raise ValidationError(
                f"set {self.set_id!r}: pair has identical ids {self.pos_id!r}")


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic set-level train/validation partition."""

    train_set_ids: tuple[str, ...]
    val_set_ids: tuple[str, ...]
    seed: int
    train_fraction: float

    def __post_init__(self):
        object.__setattr__(self, "train_set_ids", tuple(self.train_set_ids))
        object.__setattr__(self, "val_set_ids", tuple(self.val_set_ids))
        overlap = set(self.train_set_ids) & set(self.val_set_ids)
        if overlap:
            raise ValidationError(f"split partitions overlap: {sorted(overlap)}")
        if not self.train_set_ids or not self.val_set_ids:
            raise ValidationError("split has an empty partition")


def load_rankings(path) -> list[RankedSet]:
    """Parse a rankings file; every error cites the failing line."""
    sets = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid record: {exc.msg}",
                                  path=path, line=lineno) from exc
            if not isinstance(rec, dict):
                raise FormatError("record must be an object", path=path, line=lineno)
            missing = {"set_id", "target_id", "images", "human_order"} - rec.keys()
            if missing:
                raise FormatError(f"record missing keys {sorted(missing)}",
                                  path=path, line=lineno)
            try:
                rset = RankedSet(str(rec["set_id"]), str(rec["target_id"]),
                                 tuple(rec["images"]), tuple(rec["human_order"]))
            except (ValidationError, TypeError) as exc:
                raise FormatError(str(exc), path=path, line=lineno) from exc
            if rset.set_id in seen:
                raise FormatError(f"duplicate set_id {rset.set_id!r}",
                                  path=path, line=lineno)
            seen.add(rset.set_id)
            sets.append(rset)
    return sets


def save_rankings(sets: list[RankedSet], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sets:
            fh.write(json.dumps({
                "set_id": s.set_id,
                "target_id": s.target_id,
                "images": list(s.images),
                "human_order": list(s.human_order),
            }, ensure_ascii=False) + "\n")


def build_pairs(rset: RankedSet, scheme: str = "all_pairs") -> list[PairTuple]:
    """Turn one ranking into supervision pairs.

    ``all_pairs`` yields every unordered pair with the better-ranked member
    as pos, in (rank_pos, rank_neg) lexicographic order: n(n-1)/2 tuples.
    ``adjacent`` yields the n-1 consecutive-rank pairs.
    """
    if scheme not in PAIR_SCHEMES:
        raise ValidationError(f"unknown pair scheme {scheme!r}; "
                              f"choose one of {PAIR_SCHEMES}")
    order = rset.human_order
    pairs = []
    if scheme == "all_pairs":
        for i in range(len(order)):
            for j in range(i + 1, len(order)):
                pairs.append(PairTuple(rset.set_id, order[i], order[j]))
    else:
        for i in range(len(order) - 1):
            pairs.append(PairTuple(rset.set_id, order[i], order[i + 1]))
    return pairs


def build_all_pairs(sets: list[RankedSet], scheme: str = "all_pairs") -> list[PairTuple]:
    out = []
    for s in sets:
        out.extend(build_pairs(s, scheme))
    return out


def save_pairs(pairs: list[PairTuple], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({
                "set_id": p.set_id, "pos_id": p.pos_id, "neg_id": p.neg_id,
            }, ensure_ascii=False) + "\n")


def load_pairs(path) -> list[PairTuple]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
                pairs.append(PairTuple(str(rec["set_id"]), str(rec["pos_id"]),
                                       str(rec["neg_id"])))
            except (json.JSONDecodeError, KeyError, TypeError,
                    ValidationError) as exc:
                raise FormatError(f"invalid pair record: {exc}",
                                  path=path, line=lineno) from exc
    return pairs


def split_sets(sets: list[RankedSet], train_fraction: float, seed: int) -> SplitPlan:
    """Shuffle set ids (PCG64, sorted first for input-order stability) and cut.

    The cut point is round(train_fraction * n) with banker's rounding.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(
            f"train_fraction must lie in (0, 1), got {train_fraction}")
    ids = sorted(s.set_id for s in sets)
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate set ids in split input")
    if len(ids) < 2:
        raise ValidationError("need at least 2 sets to split")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    cut = round(train_fraction * len(ids))
    train, val = shuffled[:cut], shuffled[cut:]
    if not train or not val:
        raise ValidationError(
            f"train_fraction {train_fraction} leaves an empty partition "
            f"for {len(ids)} sets")
    return SplitPlan(tuple(train), tuple(val), int(seed), float(train_fraction))


def save_split(plan: SplitPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "seed": plan.seed,
            "train_fraction": plan.train_fraction,
            "train_set_ids": list(plan.train_set_ids),
            "val_set_ids": list(plan.val_set_ids),
        }, fh, indent=1)
        fh.write("\n")


def load_split(path) -> SplitPlan:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return SplitPlan(tuple(doc["train_set_ids"]), tuple(doc["val_set_ids"]),
                         int(doc["seed"]), float(doc["train_fraction"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid split document: {exc}", path=path) from exc
