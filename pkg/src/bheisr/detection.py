"""Filter-bubble detection.

Feed-side metrics (diversity coverage, duplicate rate, per-window category
shares) plus population-side belief classification: per category, users more
than two standard deviations from the mean are extreme, and a user with at
least one extreme-high and one extreme-low category is bubble-affected.
Normality of each category's belief distribution is checked with a
Kolmogorov-Smirnov statistic and skewness.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple


class Exposure(enum.Enum):
    NORMAL = "Normal"
    EXTREME_HIGH = "ExtremeHigh"
    EXTREME_LOW = "ExtremeLow"


MIN_POPULATION = 8


def _items_of(feed):
    return list(getattr(feed, "items", feed))


def item_categories(item) -> set:
    """Categories an item touches: every positively weighted one."""
    cats = {c for c, w in item.category_weights.items() if w > 0.0}
    return cats or {item.category}


def diversity_coverage(feed, taxonomy) -> float:
    """Distinct categories present in the feed over total categories."""
    items = _items_of(feed)
    if not items:
        raise ValueError("empty feed")
    if not taxonomy:
        raise ValueError("empty taxonomy")
    seen = set()
    for item in items:
        seen |= item_categories(item)
    return len(seen) / len(taxonomy)


def diversity_coverage_formula(subcat_frequencies: dict) -> float:
    """Literal frequency form (1/N) * sum(1 - f_i / F).

    Degenerate by construction: equals (N-1)/N whenever every provided
    frequency is positive. Kept for audit; diversity_coverage is the
    operative metric.
    """
    if not subcat_frequencies:
        raise ValueError("no frequencies")
    total = float(sum(subcat_frequencies.values()))
    if total <= 0.0:
        raise ValueError("at least one frequency must be nonzero")
    n = len(subcat_frequencies)
    return sum(1.0 - f / total for f in subcat_frequencies.values()) / n


def diversity_duplicate(feed) -> float:
    """Share of ordered item pairs that fall in the same subcategory."""
    items = _items_of(feed)
    n = len(items)
    if n < 2:
        raise ValueError("duplicate rate needs at least two items")
    same = 0
    for i in range(n):
        for j in range(n):
            if i != j and items[i].subcategory == items[j].subcategory:
                same += 1
    return same / (n * (n - 1))


def time_evolution_report(feeds: list, window: int) -> list:
    """Weighted category shares per consecutive window of feeds.

    Returns [(window_index, {category: share})]; shares in a window sum to 1.
    A trailing partial window is included.
    """
    if window < 1:
        raise ValueError("window must be positive")
    if not feeds:
        raise ValueError("no feeds")
    report = []
    for w_idx, start in enumerate(range(0, len(feeds), window)):
        chunk = feeds[start:start + window]
        shares: dict = {}
        count = 0
        for feed in chunk:
            for item in _items_of(feed):
                count += 1
                for cat, wgt in item.category_weights.items():
                    if wgt > 0.0:
                        shares[cat] = shares.get(cat, 0.0) + wgt
        if count == 0:
            raise ValueError(f"window {w_idx} has no items")
        report.append((w_idx, {c: s / count for c, s in sorted(shares.items())}))
    return report


# ---------------------------------------------------------------------------
# normality
# ---------------------------------------------------------------------------

def normal_cdf(x: float, mu: float = 0.0, sigma: float = 1.0) -> float:
    return 0.5 * (1.0 + math.erf((x - mu) / (sigma * math.sqrt(2.0))))


def kolmogorov_p(lam: float, terms: int = 100) -> float:
    """Asymptotic Kolmogorov tail probability, clamped to [0, 1]."""
    if lam < 0.05:
        # the series needs far more than `terms` terms here, while the true
        # tail is 1.0 to double precision
        return 1.0
    total = 0.0
    for k in range(1, terms + 1):
        total += (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
    return min(1.0, max(0.0, 2.0 * total))


class KSResult(NamedTuple):
    statistic: float
    p_value: float


def ks_normality(samples, mu: float, sigma: float) -> KSResult:
    """Sup-distance between the empirical CDF and N(mu, sigma^2).

    p-value via the asymptotic series with the small-sample correction
    lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) * K.
    """
    xs = sorted(samples)
    n = len(xs)
    if n < MIN_POPULATION:
        raise ValueError(f"need at least {MIN_POPULATION} samples, got {n}")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    stat = 0.0
    for i, x in enumerate(xs, start=1):
        cdf = normal_cdf(x, mu, sigma)
        stat = max(stat, i / n - cdf, cdf - (i - 1) / n)
    sqrt_n = math.sqrt(n)
    lam = (sqrt_n + 0.12 + 0.11 / sqrt_n) * stat
    return KSResult(statistic=stat, p_value=kolmogorov_p(lam))


def skewness(samples) -> float:
    """Population third standardized moment."""
    xs = list(samples)
    n = len(xs)
    if n < 2:
        raise ValueError("skewness needs at least two samples")
    mu = sum(xs) / n
    var = sum((x - mu) ** 2 for x in xs) / n
    if var == 0.0:
        raise ValueError("zero variance")
    third = sum((x - mu) ** 3 for x in xs) / n
    return third / var ** 1.5


# ---------------------------------------------------------------------------
# population classification
# ---------------------------------------------------------------------------

@dataclass
class CategoryStats:
    mu: float
    sigma: float
    low_threshold: float
    high_threshold: float
    ks: KSResult = None
    skewness: float = None


@dataclass
class UserClassification:
    classes: dict            # user -> {category -> Exposure}
    fb_users: tuple          # sorted user ids with >=1 high and >=1 low
    stats: dict              # category -> CategoryStats


def classify_users(beliefs: dict, taxonomy) -> UserClassification:
    """Two-sigma empirical-rule classification over per-category beliefs.

    `beliefs` maps user -> {category -> belief degree} for users with nonzero
    networks (cold users are excluded upstream). A category whose belief is
    identical across users classifies everyone Normal there. The low threshold
    mu - 2*sigma is floored at zero in effect: beliefs are nonnegative, so a
    nonpositive threshold makes ExtremeLow unreachable in that category.
    """
    users = sorted(beliefs)
    if len(users) < MIN_POPULATION:
        raise ValueError(f"need at least {MIN_POPULATION} users, got {len(users)}")
    categories = tuple(sorted(taxonomy)) if not isinstance(taxonomy, tuple) else taxonomy
    classes = {u: {} for u in users}
    stats = {}
    n = len(users)
    for cat in categories:
        values = [beliefs[u].get(cat, 0.0) for u in users]
        mu = sum(values) / n
        sigma = math.sqrt(sum((v - mu) ** 2 for v in values) / n)
        low = mu - 2.0 * sigma
        high = mu + 2.0 * sigma
        ks = skew = None
        if sigma > 0.0 and n >= MIN_POPULATION:
            ks = ks_normality(values, mu, sigma)
            skew = skewness(values)
        stats[cat] = CategoryStats(mu=mu, sigma=sigma, low_threshold=low,
                                   high_threshold=high, ks=ks, skewness=skew)
        for u, v in zip(users, values):
            if sigma == 0.0:
                label = Exposure.NORMAL
            elif v > high:
                label = Exposure.EXTREME_HIGH
            elif v < low:
                label = Exposure.EXTREME_LOW
            else:
                label = Exposure.NORMAL
            classes[u][cat] = label
    fb = []
    for u in users:
        labels = classes[u].values()
        if (Exposure.EXTREME_HIGH in labels) and (Exposure.EXTREME_LOW in labels):
            fb.append(u)
    return UserClassification(classes=classes, fb_users=tuple(fb), stats=stats)


# ---------------------------------------------------------------------------
# system-level detection
# ---------------------------------------------------------------------------

@dataclass
class SystemThresholds:
    coverage_max: float = 0.15
    trend_min: float = 0.5


@dataclass
class DetectionReport:
    coverage: list                       # per-feed diversity coverage
    duplicate: list                      # per-feed duplicate rate
    evolution: list                      # time_evolution_report output
    user_classes: dict = None
    fb_users: tuple = ()
    category_stats: dict = field(default_factory=dict)
    fb_system: bool = None


def monotone_trend(series) -> float:
    """Kendall-style trend against time with ties counted as concordant.

    (#{j>i: s_j >= s_i} - #{j>i: s_j < s_i}) / C(n, 2); a constant or
    non-decreasing series scores 1.0, a strictly decreasing one -1.0.
    """
    xs = list(series)
    n = len(xs)
    if n < 2:
        raise ValueError("trend needs at least two points")
    up = down = 0
    for i in range(n):
        for j in range(i + 1, n):
            if xs[j] >= xs[i]:
                up += 1
            else:
                down += 1
    return (up - down) / (n * (n - 1) / 2)


def detect_fb_system(report: DetectionReport,
                     thresholds: SystemThresholds = None) -> bool:
    """Feed-level bubble verdict: low coverage plus a non-decreasing
    preferred-category share across windows."""
    thresholds = thresholds or SystemThresholds()
    if len(report.coverage) < 5:
        raise ValueError("need coverage for at least 5 feeds")
    if len(report.evolution) < 2:
        raise ValueError("need at least 2 evolution windows")
    mean_coverage = sum(report.coverage) / len(report.coverage)
    totals: dict = {}
    for _, shares in report.evolution:
        for cat, s in shares.items():
            totals[cat] = totals.get(cat, 0.0) + s
    preferred = max(sorted(totals), key=lambda c: totals[c])
    series = [shares.get(preferred, 0.0) for _, shares in report.evolution]
    return (mean_coverage < thresholds.coverage_max
            and monotone_trend(series) >= thresholds.trend_min)


def build_report(feeds: list, beliefs: dict, taxonomy, window: int = 5,
                 thresholds: SystemThresholds = None) -> DetectionReport:
    """Full report over one user's feed sequence and the population beliefs."""
    coverage = [diversity_coverage(f, taxonomy) for f in feeds]
    duplicate = [diversity_duplicate(f) for f in feeds if len(_items_of(f)) >= 2]
    evolution = time_evolution_report(feeds, window)
    report = DetectionReport(coverage=coverage, duplicate=duplicate,
                             evolution=evolution)
    if beliefs is not None and len(beliefs) >= MIN_POPULATION:
        result = classify_users(beliefs, taxonomy)
        report.user_classes = result.classes
        report.fb_users = result.fb_users
        report.category_stats = result.stats
    if len(coverage) >= 5 and len(evolution) >= 2:
        report.fb_system = detect_fb_system(report, thresholds)
    return report
