"""Rank-agreement statistics: Spearman correlation, two-way ANOVA, ICC(2,k).

Spearman's rho is computed on fractional (average) ranks, which reduces to
the classic 1 - 6*sum(d^2)/(n(n^2-1)) closed form whenever neither input
has ties; the tie-free path evaluates exactly that expression so results
match the textbook formula bit for bit.

The intraclass correlation follows the two-way random-effects, absolute
agreement, averaged-raters definition:

    ICC(2,k) = (MS_R - MS_E) / (MS_R + (MS_C - MS_E)/n)

with MS_R the between-item, MS_C the between-rater, and MS_E the residual
mean square.  Confidence intervals use the standard F-based interval for
the single-rater coefficient stepped up with the Spearman-Brown formula.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from rankalign.errors import UndefinedStatisticError, ValidationError
from rankalign.model import DistanceTensor, WeightHead, distance
from rankalign.special import f_ppf, f_sf, student_t_two_sided_p

EVAL_MODES = ("merged", "per_set_mean")

KOO_LI_BANDS = ((0.50, "Poor"), (0.75, "Moderate"), (0.90, "Good"))
CICCHETTI_BANDS = ((0.40, "Poor"), (0.60, "Fair"), (0.75, "Good"))


def fractional_ranks(values) -> np.ndarray:
    """1-based average ranks; tied values share the mean of their positions."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("ranks need a 1-d input")
    if not np.all(np.isfinite(x)):
        raise ValidationError("cannot rank non-finite values")
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=np.float64)
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and x[order[j + 1]] == x[order[i]]:
            j += 1
        # positions i..j (0-based) share the average of ranks i+1..j+1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rho(scores_a, scores_b) -> float:
    """Rank correlation of two score vectors (ranked internally).

    Tie-free inputs take the exact closed-form path; ties fall back to the
    Pearson correlation of fractional ranks.  Invariant under strictly
    increasing transformations of either input.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(
            f"score vectors must be 1-d and equal length, got {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise ValidationError("need at least 2 observations")
    if np.all(a == a[0]):
        raise UndefinedStatisticError("first input is constant; rho undefined")
    if np.all(b == b[0]):
        raise UndefinedStatisticError("second input is constant; rho undefined")
    ra = fractional_ranks(a)
    rb = fractional_ranks(b)
    tie_free = (np.unique(ra).shape[0] == n) and (np.unique(rb).shape[0] == n)
    if tie_free:
        d = ra - rb
        d2 = float(np.sum(d * d))
        return 1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    am = ra - ra.mean()
    bm = rb - rb.mean()
    denom = math.sqrt(float(np.sum(am * am)) * float(np.sum(bm * bm)))
    if denom == 0.0:
        raise UndefinedStatisticError("zero rank variance; rho undefined")
    rho = float(np.sum(am * bm)) / denom
    return min(1.0, max(-1.0, rho))


def spearman_p(rho: float, n: int) -> float:
    """Two-sided p for the null rho=0 via the t approximation, df = n-2."""
    if n < 4:
        raise ValidationError(f"p-value needs n >= 4, got {n}")
    if not math.isfinite(rho):
        raise ValidationError(f"rho must be finite, got {rho}")
    if abs(rho) >= 1.0:
        return 0.0
    if rho == 0.0:
        return 1.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return student_t_two_sided_p(t, n - 2)


@dataclass(frozen=True)
class AnovaTable:
    """Two-way ANOVA mean squares for an n-item, k-rater rating matrix."""

    n: int
    k: int
    ms_r: float
    ms_c: float
    ms_e: float


def anova_two_way(ratings) -> AnovaTable:
    """Decompose an n x k matrix into item, rater, and residual mean squares."""
    x = np.asarray(ratings, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("ratings must be a 2-d matrix")
    n, k = x.shape
    if n < 2 or k < 2:
        raise ValidationError(f"need at least a 2x2 matrix, got {n}x{k}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("ratings contain non-finite values")
    grand = x.mean()
    row_dev = x.mean(axis=1) - grand
    col_dev = x.mean(axis=0) - grand
    ss_r = k * float(np.sum(row_dev * row_dev))
    ss_c = n * float(np.sum(col_dev * col_dev))
    ss_total = float(np.sum((x - grand) ** 2))
    ss_e = max(ss_total - ss_r - ss_c, 0.0)
    return AnovaTable(n=n, k=k,
                      ms_r=ss_r / (n - 1),
                      ms_c=ss_c / (k - 1),
                      ms_e=ss_e / ((n - 1) * (k - 1)))


def icc2k(table: AnovaTable) -> float:
    """Averaged-raters, absolute-agreement ICC from the ANOVA table.

    Can be negative when residual disagreement exceeds the between-item
    variance.
    """
    denom = table.ms_r + (table.ms_c - table.ms_e) / table.n
    if denom == 0.0 or not math.isfinite(denom):
        raise UndefinedStatisticError(
            f"ICC denominator degenerate: MS_R={table.ms_r}, "
            f"MS_C={table.ms_c}, MS_E={table.ms_e}, n={table.n}")
    return (table.ms_r - table.ms_e) / denom


def icc_p_value(table: AnovaTable) -> float:
    """One-sided p for ICC > 0 from the F ratio MS_R / MS_E."""
    if table.ms_e == 0.0:
        return 0.0
    f = table.ms_r / table.ms_e
    if not math.isfinite(f):
        return 0.0
    return f_sf(f, table.n - 1, (table.n - 1) * (table.k - 1))


def icc_confidence_interval(table: AnovaTable,
                            confidence: float = 0.95) -> tuple[float, float]:
    """F-based confidence interval for ICC(2,k).

    Bounds follow the single-rater interval with a Satterthwaite
    denominator degrees-of-freedom approximation, stepped up to the
    averaged-raters coefficient via Spearman-Brown.  A zero residual mean
    square collapses the interval to the point estimate.
    """
    if not 0.0 < confidence < 1.0:
        raise ValidationError(f"confidence must lie in (0,1), got {confidence}")
    n, k = table.n, table.k
    msr, msc, mse = table.ms_r, table.ms_c, table.ms_e
    value = icc2k(table)
    if mse == 0.0:
        return (value, value)
    alpha = 1.0 - confidence
    single = (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)
    fj = msc / mse
    vn = (k - 1) * (n - 1) * (
        k * single * fj + n * (1 + (k - 1) * single) - k * single) ** 2
    vd = (n - 1) * k ** 2 * single ** 2 * fj ** 2 \
        + (n * (1 + (k - 1) * single) - k * single) ** 2
    if vd == 0.0 or not math.isfinite(vn / vd) or vn / vd <= 0.0:
        return (math.nan, math.nan)
    v = vn / vd
    f_upper = f_ppf(1 - alpha / 2, n - 1, v)
    f_lower = f_ppf(1 - alpha / 2, v, n - 1)
    lb1 = n * (msr - f_upper * mse) / (
        f_upper * (k * msc + (k * n - k - n) * mse) + n * msr)
    ub1 = n * (f_lower * msr - mse) / (
        k * msc + (k * n - k - n) * mse + n * f_lower * msr)
    lb = k * lb1 / (1 + (k - 1) * lb1)
    ub = k * ub1 / (1 + (k - 1) * ub1)
    return (lb, ub)


def interpret_icc(value: float, guideline: str) -> str:
    """Map an ICC value to an agreement band.

    Values on a band boundary go to the lower band (0.75 is "Moderate"
    under koo_li, 0.60 is "Fair" under cicchetti).
    """
    if guideline == "koo_li":
        bands = KOO_LI_BANDS
    elif guideline == "cicchetti":
        bands = CICCHETTI_BANDS
    else:
        raise ValidationError(f"unknown guideline {guideline!r}; "
                              "choose 'koo_li' or 'cicchetti'")
    if math.isnan(value):
        return "Undefined"
    if value < bands[0][0]:
        return bands[0][1]
    for upper, name in bands[1:]:
        if value <= upper:
            return name
    return "Excellent"


@dataclass(frozen=True)
class AlignmentReport:
    """Everything reported about one head's agreement with human rankings."""

    mode: str
    spearman_rho: float
    spearman_p: float
    icc2k: float
    icc_p: float
    icc_ci_low: float
    icc_ci_high: float
    koo_li_band: str
    cicchetti_band: str
    anova: AnovaTable
    per_set_rho: dict[str, float] = field(repr=False)
    per_set_icc: dict[str, float] = field(repr=False)
    n_items: int = 0
    raw_scores: bool = False

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "spearman_rho": self.spearman_rho,
            "spearman_p": self.spearman_p,
            "icc2k": self.icc2k,
            "icc_p": self.icc_p,
            "icc_ci_low": self.icc_ci_low,
            "icc_ci_high": self.icc_ci_high,
            "koo_li_band": self.koo_li_band,
            "cicchetti_band": self.cicchetti_band,
            "anova": {"n": self.anova.n, "k": self.anova.k,
                      "ms_r": self.anova.ms_r, "ms_c": self.anova.ms_c,
                      "ms_e": self.anova.ms_e},
            "n_items": self.n_items,
            "raw_scores": self.raw_scores,
            "per_set_rho": dict(self.per_set_rho),
            "per_set_icc": dict(self.per_set_icc),
        }


def _set_vectors(head: WeightHead, lookup: dict, rset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Human ranks (1..n), metric fractional ranks, raw distances for one set."""
    dists = []
    for image_id in rset.human_order:
        key = (rset.set_id, image_id)
        t = lookup.get(key)
        if t is None:
            raise ValidationError(f"missing distance tensor for {key!r}")
        dists.append(distance(head, t))
    raw = np.asarray(dists, dtype=np.float64)
    human = np.arange(1, raw.shape[0] + 1, dtype=np.float64)
    return human, fractional_ranks(raw), raw


def _safe_rho(human: np.ndarray, metric: np.ndarray) -> float:
    try:
        return spearman_rho(human, metric)
    except UndefinedStatisticError:
        return math.nan


def _safe_icc(matrix: np.ndarray) -> float:
    try:
        return icc2k(anova_two_way(matrix))
    except (UndefinedStatisticError, ValidationError):
        return math.nan


def as_tensor_index(archive) -> dict[tuple[str, str], DistanceTensor]:
    if isinstance(archive, dict):
        return archive
    return {(t.set_id, t.image_id): t for t in archive}


def evaluate(head: WeightHead, archive, sets, mode: str = "merged",
             raw_scores: bool = False, confidence: float = 0.95) -> AlignmentReport:
    """Score a weight head against human rankings.

    Per set, head distances are converted to within-set fractional ranks
    (closest = rank 1).  ``merged`` concatenates (human rank, metric rank)
    pairs across sets for one Spearman rho and stacks them as items of a
    two-rater matrix for the pooled ICC.  ``per_set_mean`` instead averages
    the per-set rho/ICC values (sets where a statistic is undefined are
    dropped from the mean); its p-values and confidence interval still come
    from the pooled quantities, since no distributional form is available
    for a mean of per-set statistics.  ``raw_scores`` switches only the
    merged rho to correlate raw distances pooled across sets instead of
    within-set ranks.
    """
    if mode not in EVAL_MODES:
        raise ValidationError(f"unknown mode {mode!r}; choose one of {EVAL_MODES}")
    if not sets:
        raise ValidationError("no ranked sets to evaluate")
    lookup = as_tensor_index(archive)
    human_parts, metric_parts, raw_parts = [], [], []
    per_set_rho: dict[str, float] = {}
    per_set_icc: dict[str, float] = {}
    for rset in sets:
        human, metric, raw = _set_vectors(head, lookup, rset)
        human_parts.append(human)
        metric_parts.append(metric)
        raw_parts.append(raw)
        per_set_rho[rset.set_id] = _safe_rho(human, metric)
        per_set_icc[rset.set_id] = _safe_icc(np.column_stack([human, metric]))

    human_all = np.concatenate(human_parts)
    metric_all = np.concatenate(metric_parts)
    n_items = human_all.shape[0]

    pooled = anova_two_way(np.column_stack([human_all, metric_all]))
    pooled_icc = _safe_icc(np.column_stack([human_all, metric_all]))
    merged_rho = spearman_rho(
        human_all, np.concatenate(raw_parts) if raw_scores else metric_all)

    if mode == "merged":
        rho_val, icc_val = merged_rho, pooled_icc
    else:
        rho_vals = [v for v in per_set_rho.values() if not math.isnan(v)]
        icc_vals = [v for v in per_set_icc.values() if not math.isnan(v)]
        if not rho_vals or not icc_vals:
            raise UndefinedStatisticError(
                "every per-set statistic is undefined; cannot average")
        rho_val = float(np.mean(rho_vals))
        icc_val = float(np.mean(icc_vals))

    p_rho = spearman_p(merged_rho, n_items) if n_items >= 4 else math.nan
    ci_low, ci_high = icc_confidence_interval(pooled, confidence)
    return AlignmentReport(
        mode=mode,
        spearman_rho=rho_val,
        spearman_p=p_rho,
        icc2k=icc_val,
        icc_p=icc_p_value(pooled),
        icc_ci_low=ci_low,
        icc_ci_high=ci_high,
        koo_li_band=interpret_icc(icc_val, "koo_li"),
        cicchetti_band=interpret_icc(icc_val, "cicchetti"),
        anova=pooled,
        per_set_rho=per_set_rho,
        per_set_icc=per_set_icc,
        n_items=n_items,
        raw_scores=raw_scores,
    )


def save_report(report: AlignmentReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1, allow_nan=True)
        fh.write("\n")


def save_report_csv(report: AlignmentReport, path) -> None:
    """One row per set plus a summary row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set_id", "spearman_rho", "icc2k"])
        for set_id in report.per_set_rho:
            w.writerow([set_id, repr(report.per_set_rho[set_id]),
                        repr(report.per_set_icc[set_id])])
        w.writerow(["__summary__", repr(report.spearman_rho), repr(report.icc2k)])
