"""Pure-numpy implementations of the hot kernels.

Reference semantics for the numba backend; selected with
``RANKALIGN_BACKEND=numpy``.
"""

import numpy as np

NAME = "numpy"


def hinge_loss_grad(delta: np.ndarray, weights: np.ndarray, margin: float):
    """Mean margin-ranking loss over pair rows and its gradient.

    ``delta`` rows hold (more-similar minus less-similar) flattened tensors,
    so row i scores delta[i] @ weights and pays max(0, score + margin).  Rows
    sitting exactly on the hinge corner contribute zero gradient.
    """
    scores = delta @ weights
    hinge = np.maximum(scores + margin, 0.0)
    active = hinge > 0.0
    inv = 1.0 / delta.shape[0]
    loss = float(hinge.sum() * inv)
    grad = delta[active].sum(axis=0) * inv if active.any() else np.zeros(delta.shape[1])
    return loss, grad


def adam_update(weights, grad, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected Adam step followed by clamping weights at zero.

    ``step`` is the 1-based update counter (already incremented).
    Returns fresh (weights, m, v) arrays.
    """
    m2 = beta1 * m + (1.0 - beta1) * grad
    v2 = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m2 / (1.0 - beta1 ** step)
    v_hat = v2 / (1.0 - beta2 ** step)
    w2 = weights - lr * m_hat / (np.sqrt(v_hat) + eps)
    np.maximum(w2, 0.0, out=w2)
    return w2, m2, v2


def pooled_icc_two_raters(h: np.ndarray, g: np.ndarray):
    """Two-way random-effects agreement ICC for two raters over stacked items.

    Returns (icc, ok); ok is False when the value is undefined (fewer than
    two items or a vanishing denominator).
    """
    n = h.shape[0]
    if n < 2:
        return np.nan, False
    mean_h = h.mean()
    mean_g = g.mean()
    grand = 0.5 * (mean_h + mean_g)
    rows = 0.5 * (h + g)
    ss_rows = 2.0 * np.sum((rows - grand) ** 2)
    ms_rows = ss_rows / (n - 1)
    ms_cols = n * ((mean_h - grand) ** 2 + (mean_g - grand) ** 2)
    ss_total = np.sum((h - grand) ** 2) + np.sum((g - grand) ** 2)
    ms_err = (ss_total - ss_rows - ms_cols) / (n - 1)
    if ms_err < 0.0:
        ms_err = 0.0
    denom = ms_rows + (ms_cols - ms_err) / n
    if denom == 0.0 or not np.isfinite(denom):
        return np.nan, False
    return (ms_rows - ms_err) / denom, True


def pooled_icc_resample(h, g, offsets, sample):
    """Pooled two-rater ICC over a with-replacement resample of item blocks.

    ``offsets`` delimits blocks in the flat arrays; ``sample`` lists the block
    indices drawn for this resample (duplicates allowed).
    """
    starts = offsets[sample]
    lengths = offsets[sample + 1] - starts
    total = int(lengths.sum())
    if total == 0:
        return np.nan, False
    # Expand [start, start+len) for every sampled block without a Python loop.
    cum = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    idx = np.arange(total, dtype=np.int64) + np.repeat(starts - cum, lengths)
    return pooled_icc_two_raters(h[idx], g[idx])
