"""Areas-of-Concern classification.

Per cell: yearly yields become relative anomalies against the reference
mean; tercile thresholds are fitted to the negative reference anomalies
only (so both thresholds are nonpositive and any nonnegative anomaly lands
in the above-normal class); ensemble members vote into below/normal/above
categories; a fixed rule order turns the vote shares into one decision.
The deterministic rule flags a cell when the yield drop reaches the
threshold percentage, boundary included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataDomainError, InsufficientReferenceError

Array = np.ndarray

CATEGORY_BELOW = "below"
CATEGORY_NORMAL = "normal"
CATEGORY_ABOVE = "above"

DECISION_INCONCLUSIVE = "inconclusive"
DECISION_ABOVE = "above-normal"
DECISION_NORMAL_TO_ABOVE = "normal-to-above"
DECISION_NORMAL = "normal"
DECISION_BELOW = "below-normal"

DECISIONS = (
    DECISION_INCONCLUSIVE,
    DECISION_ABOVE,
    DECISION_NORMAL_TO_ABOVE,
    DECISION_NORMAL,
    DECISION_BELOW,
)

# Probability ties are compared after rounding to this many digits so exact
# ensemble fractions like 17/51 vs 17/51 compare equal in floats.
_TIE_DIGITS = 12

DEFAULT_THRESHOLD_PCT = 5.0
DEFAULT_WINDOW_YEARS = 10


def relative_anomaly(y: float, ref_mean: float) -> float:
    """Percent change of y relative to the reference mean."""
    if ref_mean <= 0:
        raise DataDomainError(f"reference mean must be > 0, got {ref_mean}")
    return 100.0 * (y - ref_mean) / ref_mean


@dataclass(frozen=True)
class TercileThresholds:
    """33rd/66th percentiles of the negative reference anomalies (percent)."""

    t33: float
    t66: float

    def __post_init__(self) -> None:
        if not self.t33 <= self.t66 <= 0.0:
            raise DataDomainError(
                f"thresholds must satisfy t33 <= t66 <= 0, got ({self.t33}, {self.t66})"
            )


def fit_terciles(reference_anomalies) -> TercileThresholds:
    """Percentiles by linear interpolation of the order statistics, fitted
    to strictly negative anomalies only."""
    arr = np.asarray(reference_anomalies, dtype=np.float64).reshape(-1)
    neg = arr[arr < 0.0]
    if neg.size < 3:
        raise InsufficientReferenceError(
            f"need at least 3 negative reference anomalies, got {neg.size}"
        )
    t33, t66 = np.percentile(neg, [33.0, 66.0], method="linear")
    return TercileThresholds(t33=float(t33), t66=float(t66))


def classify_anomaly(a: float, th: TercileThresholds) -> str:
    """below / normal / above; since t66 <= 0, nonnegative anomalies are
    always above-normal."""
    if a > th.t66:
        return CATEGORY_ABOVE
    if a < th.t33:
        return CATEGORY_BELOW
    return CATEGORY_NORMAL


@dataclass(frozen=True)
class CategoryProbs:
    p_below: float
    p_normal: float
    p_above: float

    def __post_init__(self) -> None:
        for name in ("p_below", "p_normal", "p_above"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataDomainError(f"{name} must be in [0, 1], got {v}")
        total = self.p_below + self.p_normal + self.p_above
        if abs(total - 1.0) > 1e-9:
            raise DataDomainError(f"probabilities sum to {total}, expected 1")


def category_probabilities(member_anomalies, th: TercileThresholds) -> CategoryProbs:
    """Fraction of ensemble members falling in each category."""
    arr = np.asarray(member_anomalies, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise DataDomainError("empty ensemble")
    counts = {CATEGORY_BELOW: 0, CATEGORY_NORMAL: 0, CATEGORY_ABOVE: 0}
    for a in arr:
        counts[classify_anomaly(float(a), th)] += 1
    n = arr.size
    return CategoryProbs(
        p_below=counts[CATEGORY_BELOW] / n,
        p_normal=counts[CATEGORY_NORMAL] / n,
        p_above=counts[CATEGORY_ABOVE] / n,
    )


@dataclass(frozen=True)
class AocDecision:
    category: str
    is_aoc: bool

    def __post_init__(self) -> None:
        if self.category not in DECISIONS:
            raise DataDomainError(f"unknown category {self.category!r}")
        if self.is_aoc != (self.category == DECISION_BELOW):
            raise DataDomainError("is_aoc must hold exactly for below-normal")


def decide_category(p: CategoryProbs) -> AocDecision:
    """Assign the most probable category by the fixed rule order.

    (i) below == above tied at the top -> inconclusive; (ii) above strictly
    greatest -> above-normal; (iii) above == normal jointly greatest ->
    normal-to-above; (iv) normal strictly greatest -> normal; (v) below
    strictly greatest -> below-normal; the one remaining tie
    (below == normal > above) is conservatively inconclusive.

    Rule (i) applies only when the tied pair is not dominated by normal;
    otherwise a lone-member normal vote (0, 1, 0) could never decide
    "normal". Equality is tested on rounded values so exact ensemble
    fractions compare equal.
    """
    pb = round(p.p_below, _TIE_DIGITS)
    pn = round(p.p_normal, _TIE_DIGITS)
    pa = round(p.p_above, _TIE_DIGITS)
    if pb == pa and pb >= pn:
        category = DECISION_INCONCLUSIVE
    elif pa > pn and pa > pb:
        category = DECISION_ABOVE
    elif pa == pn and pa > pb:
        category = DECISION_NORMAL_TO_ABOVE
    elif pn > pa and pn > pb:
        category = DECISION_NORMAL
    elif pb > pa and pb > pn:
        category = DECISION_BELOW
    else:
        # Only pb == pn > pa reaches here.
        category = DECISION_INCONCLUSIVE
    return AocDecision(category=category, is_aoc=category == DECISION_BELOW)


def deterministic_aoc(
    mean_yield: float, ref_mean: float, threshold_pct: float = DEFAULT_THRESHOLD_PCT
) -> bool:
    """True when the yield drop reaches threshold_pct ('at least', inclusive)."""
    return relative_anomaly(mean_yield, ref_mean) <= -threshold_pct


def decadal_aoc(
    yearly_yields,
    ref_mean: float,
    start_year: int,
    window: int = DEFAULT_WINDOW_YEARS,
    threshold_pct: float = DEFAULT_THRESHOLD_PCT,
) -> list[tuple[int, int, bool]]:
    """Deterministic AoC per consecutive non-overlapping window of years.

    Returns (window_start_year, window_end_year, flag); the final window may
    be shorter when the record does not divide evenly.
    """
    values = np.asarray(yearly_yields, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise DataDomainError("no yearly yields to aggregate")
    if window < 1:
        raise DataDomainError(f"window must be >= 1, got {window}")
    out = []
    for start in range(0, values.size, window):
        chunk = values[start : start + window]
        flag = deterministic_aoc(float(chunk.mean()), ref_mean, threshold_pct)
        out.append((start_year + start, start_year + start + chunk.size - 1, flag))
    return out
