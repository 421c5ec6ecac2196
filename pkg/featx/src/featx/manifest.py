"""Pair manifest: which images to compare against which targets.

CSV with a header row and columns set_id, target_path, image_id,
image_path. Every row of a set must name the same target; image ids are
unique within their set. Extra columns are ignored.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

from featx.errors import ManifestError

REQUIRED_COLUMNS = ("set_id", "target_path", "image_id", "image_path")


@dataclass(frozen=True)
class PairRow:
    set_id: str
    target_path: str
    image_id: str
    image_path: str


def load_manifest(path) -> list[PairRow]:
    rows: list[PairRow] = []
    targets: dict[str, str] = {}
    seen_ids: set[tuple[str, str]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ManifestError(f"{path}: header missing columns {missing}")
        for lineno, rec in enumerate(reader, start=2):
            values = {}
            for col in REQUIRED_COLUMNS:
                raw = (rec.get(col) or "").strip()
                if not raw:
                    raise ManifestError(f"{path}: line {lineno}: empty {col}")
                values[col] = raw
            row = PairRow(**values)
            prior = targets.setdefault(row.set_id, row.target_path)
            if prior != row.target_path:
                raise ManifestError(
                    f"{path}: line {lineno}: set {row.set_id!r} names two "
                    f"targets ({prior!r} and {row.target_path!r})")
            key = (row.set_id, row.image_id)
            if key in seen_ids:
                raise ManifestError(
                    f"{path}: line {lineno}: duplicate image id {key!r}")
            seen_ids.add(key)
            for col in ("target_path", "image_path"):
                if not Path(values[col]).is_file():
                    raise ManifestError(
                        f"{path}: line {lineno}: {col} does not exist: "
                        f"{values[col]}")
            rows.append(row)
    if not rows:
        raise ManifestError(f"{path}: manifest has no rows")
    return rows
