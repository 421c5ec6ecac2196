"""Numba-compiled hot kernels.

Same contracts as ``numpy_backend``; results may differ from it in the last
few ulps because summation order differs.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _hinge_loss_grad(delta, weights, margin):
    t_count, p = delta.shape
    grad = np.zeros(p)
    total = 0.0
    for i in range(t_count):
        s = margin
        for j in range(p):
            s += delta[i, j] * weights[j]
        if s > 0.0:
            total += s
            for j in range(p):
                grad[j] += delta[i, j]
    inv = 1.0 / t_count
    for j in range(p):
        grad[j] *= inv
    return total * inv, grad


def hinge_loss_grad(delta, weights, margin):
    loss, grad = _hinge_loss_grad(delta, weights, float(margin))
    return float(loss), grad


@njit(cache=True)
def _adam_update(weights, grad, m, v, step, lr, beta1, beta2, eps):
    p = weights.shape[0]
    m2 = np.empty(p)
    v2 = np.empty(p)
    w2 = np.empty(p)
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for j in range(p):
        m2[j] = beta1 * m[j] + (1.0 - beta1) * grad[j]
        v2[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j]
        w = weights[j] - lr * (m2[j] / c1) / (np.sqrt(v2[j] / c2) + eps)
        w2[j] = w if w > 0.0 else 0.0
    return w2, m2, v2


def adam_update(weights, grad, m, v, step, lr, beta1, beta2, eps):
    return _adam_update(weights, grad, m, v, step,
                        float(lr), float(beta1), float(beta2), float(eps))


@njit(cache=True)
def _pooled_icc_two_raters(h, g):
    n = h.shape[0]
    if n < 2:
        return np.nan, False
    sum_h = 0.0
    sum_g = 0.0
    for i in range(n):
        sum_h += h[i]
        sum_g += g[i]
    mean_h = sum_h / n
    mean_g = sum_g / n
    grand = 0.5 * (mean_h + mean_g)
    ss_rows = 0.0
    ss_total = 0.0
    for i in range(n):
        r = 0.5 * (h[i] + g[i]) - grand
        ss_rows += r * r
        dh = h[i] - grand
        dg = g[i] - grand
        ss_total += dh * dh + dg * dg
    ss_rows *= 2.0
    ms_rows = ss_rows / (n - 1)
    ms_cols = n * ((mean_h - grand) ** 2 + (mean_g - grand) ** 2)
    ms_err = (ss_total - ss_rows - ms_cols) / (n - 1)
    if ms_err < 0.0:
        ms_err = 0.0
    denom = ms_rows + (ms_cols - ms_err) / n
    if denom == 0.0 or not np.isfinite(denom):
        return np.nan, False
    return (ms_rows - ms_err) / denom, True


def pooled_icc_two_raters(h, g):
    icc, ok = _pooled_icc_two_raters(h, g)
    return float(icc), bool(ok)


@njit(cache=True)
def _pooled_icc_resample(h, g, offsets, sample):
    s_count = sample.shape[0]
    total = 0
    for s in range(s_count):
        b = sample[s]
        total += offsets[b + 1] - offsets[b]
    hs = np.empty(total)
    gs = np.empty(total)
    pos = 0
    for s in range(s_count):
        b = sample[s]
        for i in range(offsets[b], offsets[b + 1]):
            hs[pos] = h[i]
            gs[pos] = g[i]
            pos += 1
    return _pooled_icc_two_raters(hs, gs)


def pooled_icc_resample(h, g, offsets, sample):
    icc, ok = _pooled_icc_resample(h, g, offsets, sample)
    return float(icc), bool(ok)
