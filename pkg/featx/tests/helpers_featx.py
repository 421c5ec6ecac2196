"""Small helpers shared by the extractor test modules."""

import csv

CHANNELS = (64, 192, 384, 256, 256)


def write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set_id", "target_path", "image_id", "image_path"])
        writer.writerows(rows)
    return str(path)
