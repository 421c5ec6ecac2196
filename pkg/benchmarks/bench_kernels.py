#!/usr/bin/env python3
"""Times the four hot kernels under the numpy and numba backends.

The backend is fixed at import time, so each lane runs in a child
process with RANKALIGN_BACKEND set; the parent collects the per-call
times and prints a comparison table.  Sizes mirror the intended working
point: batches of 256 pairs over 56 channels and bootstrap resampling
over 200 ranked sets of 10 images.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np


def best_per_call(fn, *args, repeat=5, number=50):
    fn(*args)  # warm-up; triggers JIT compilation on the numba lane
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / number)
    return best


def run_lane():
    from rankalign import kernels

    rng = np.random.default_rng(42)
    delta = rng.normal(size=(256, 56))
    w = np.abs(rng.normal(size=56))
    grad = rng.normal(size=56)
    m = rng.random(56)
    v = rng.random(56)

    sets, images = 200, 10
    h = rng.random(sets * images)
    g = rng.random(sets * images)
    offsets = np.arange(0, sets * images + 1, images, dtype=np.int64)
    sample = rng.integers(0, sets, size=sets).astype(np.int64)

    results = {
        "backend": kernels.BACKEND,
        "hinge_loss_grad": best_per_call(
            kernels.hinge_loss_grad, delta, w, 0.03),
        "adam_update": best_per_call(
            kernels.adam_update, w, grad, m, v, 7, 4e-4, 0.9, 0.999, 1e-8),
        "pooled_icc_two_raters": best_per_call(
            kernels.pooled_icc_two_raters, h, g),
        "pooled_icc_resample": best_per_call(
            kernels.pooled_icc_resample, h, g, offsets, sample, number=200),
    }
    print(json.dumps(results))


def main():
    lanes = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, RANKALIGN_BACKEND=backend)
        proc = subprocess.run([sys.executable, __file__, "--lane"],
                              env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"{backend}: unavailable ({proc.stderr.strip()})")
            continue
        doc = json.loads(proc.stdout)
        lanes[doc.pop("backend")] = doc

    if not lanes:
        return 1
    kernels_order = ["hinge_loss_grad", "adam_update",
                     "pooled_icc_two_raters", "pooled_icc_resample"]
    header = f"{'kernel':<24}" + "".join(f"{b:>12}" for b in lanes)
    if len(lanes) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in kernels_order:
        row = f"{name:<24}"
        times = [lanes[b][name] for b in lanes]
        for t in times:
            row += f"{t * 1e6:>10.1f}us"
        if len(times) == 2 and times[1] > 0:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    if "--lane" in sys.argv:
        run_lane()
    else:
        sys.exit(main())
