"""Diversity metrics, normality statistics, and the two-sigma classifier."""

import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from bheisr.corpus import Item, SynthSpec, synth_corpus
from bheisr.belief import build_all
from bheisr.detection import (
    DetectionReport,
    Exposure,
    MIN_POPULATION,
    SystemThresholds,
    build_report,
    classify_users,
    detect_fb_system,
    diversity_coverage,
    diversity_coverage_formula,
    diversity_duplicate,
    item_categories,
    kolmogorov_p,
    ks_normality,
    monotone_trend,
    normal_cdf,
    skewness,
    time_evolution_report,
)

TAXONOMY = {"a": ("a/s",), "b": ("b/s",), "c": ("c/s",), "d": ("d/s",)}


def make_item(cat, sub=None, weights=None):
    return Item(id=f"{cat}-{sub}", category=cat, subcategory=sub or f"{cat}/s",
                title="t", abstract="", category_weights=weights or {cat: 1.0})


class TestDiversityCoverage:
    def test_counts_distinct_categories(self):
        feed = [make_item("a"), make_item("a"), make_item("b")]
        assert diversity_coverage(feed, TAXONOMY) == pytest.approx(2 / 4)

    def test_weighted_items_count_every_positive_category(self):
        feed = [make_item("a", weights={"a": 0.5, "b": 0.5})]
        assert diversity_coverage(feed, TAXONOMY) == pytest.approx(2 / 4)

    def test_single_category_feed(self):
        feed = [make_item("a")] * 10
        assert diversity_coverage(feed, TAXONOMY) == pytest.approx(1 / 4)

    def test_empty_feed_rejected(self):
        with pytest.raises(ValueError):
            diversity_coverage([], TAXONOMY)

    def test_item_categories_falls_back_to_primary(self):
        item = make_item("a", weights={"a": 0.0})
        item.category_weights = {}
        assert item_categories(item) == {"a"}


class TestCoverageFormula:
    def test_degenerate_value_for_positive_frequencies(self):
        # with every frequency nonzero the sum telescopes to (n-1)/n
        assert diversity_coverage_formula({"x": 3, "y": 1}) == pytest.approx(0.5)
        assert diversity_coverage_formula({"x": 5, "y": 5, "z": 5}) == pytest.approx(2 / 3)

    def test_rejects_empty_or_zero(self):
        with pytest.raises(ValueError):
            diversity_coverage_formula({})
        with pytest.raises(ValueError):
            diversity_coverage_formula({"x": 0})


class TestDuplicateRate:
    def test_all_same_subcategory(self):
        feed = [make_item("a", "a/s")] * 3
        assert diversity_duplicate(feed) == 1.0

    def test_all_distinct(self):
        feed = [make_item("a", "a/1"), make_item("a", "a/2"), make_item("b", "b/1")]
        assert diversity_duplicate(feed) == 0.0

    def test_hand_value(self):
        feed = [make_item("a", "a/1"), make_item("a", "a/1"), make_item("b", "b/1")]
        assert diversity_duplicate(feed) == pytest.approx(2 / 6)

    def test_needs_two_items(self):
        with pytest.raises(ValueError):
            diversity_duplicate([make_item("a")])


class TestTimeEvolution:
    def test_windows_and_shares(self):
        feeds = [[make_item("a"), make_item("b")],
                 [make_item("a"), make_item("a")],
                 [make_item("b")]]
        report = time_evolution_report(feeds, window=2)
        assert len(report) == 2
        idx0, shares0 = report[0]
        assert idx0 == 0
        assert shares0 == pytest.approx({"a": 0.75, "b": 0.25})
        assert report[1][1] == pytest.approx({"b": 1.0})

    def test_shares_sum_to_one(self):
        feeds = [[make_item("a", weights={"a": 0.5, "b": 0.5}), make_item("c")]]
        _, shares = time_evolution_report(feeds, window=1)[0]
        assert sum(shares.values()) == pytest.approx(1.0)

    def test_bad_window(self):
        with pytest.raises(ValueError):
            time_evolution_report([[make_item("a")]], window=0)


class TestNormalCdf:
    def test_matches_scipy_over_grid(self):
        for x in np.linspace(-4, 4, 33):
            assert normal_cdf(x) == pytest.approx(scipy.stats.norm.cdf(x), abs=1e-12)

    def test_location_scale(self):
        assert normal_cdf(3.0, mu=3.0, sigma=2.0) == pytest.approx(0.5)
        assert normal_cdf(5.0, mu=3.0, sigma=2.0) == pytest.approx(
            scipy.stats.norm.cdf(1.0), abs=1e-12)


class TestKolmogorovP:
    def test_matches_scipy_kolmogorov(self):
        for lam in [0.3, 0.5, 0.8, 1.0, 1.36, 2.0, 3.0]:
            assert kolmogorov_p(lam) == pytest.approx(
                scipy.special.kolmogorov(lam), abs=1e-10)

    def test_limits(self):
        assert kolmogorov_p(1e-8) == 1.0
        assert kolmogorov_p(50.0) == 0.0


class TestKsNormality:
    def test_statistic_against_scipy_kstest(self):
        rng = np.random.default_rng(5)
        xs = rng.normal(2.0, 0.7, size=40)
        ours = ks_normality(xs, 2.0, 0.7)
        ref = scipy.stats.kstest(xs, lambda v: scipy.stats.norm.cdf(v, 2.0, 0.7))
        assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)

    def test_p_value_small_sample_correction(self):
        xs = list(np.random.default_rng(6).normal(size=25))
        result = ks_normality(xs, 0.0, 1.0)
        n = 25
        lam = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * result.statistic
        assert result.p_value == pytest.approx(scipy.special.kolmogorov(lam), abs=1e-10)

    def test_input_guards(self):
        with pytest.raises(ValueError):
            ks_normality([0.0] * 5, 0.0, 1.0)
        with pytest.raises(ValueError):
            ks_normality([0.0] * 10, 0.0, 0.0)


class TestSkewness:
    def test_matches_scipy_population_skew(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            xs = rng.exponential(size=rng.integers(5, 40))
            assert skewness(xs) == pytest.approx(
                scipy.stats.skew(xs, bias=True), abs=1e-10)

    def test_symmetric_is_zero(self):
        assert skewness([1.0, 2.0, 3.0]) == pytest.approx(0.0, abs=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            skewness([2.0, 2.0, 2.0])


def brute_force_classify(beliefs, categories):
    """Independent reimplementation: loops and statistics from numpy."""
    users = sorted(beliefs)
    classes = {u: {} for u in users}
    for cat in categories:
        values = np.array([beliefs[u].get(cat, 0.0) for u in users])
        mu = values.mean()
        sigma = values.std(ddof=0)
        for u, v in zip(users, values):
            if sigma == 0.0:
                classes[u][cat] = Exposure.NORMAL
            elif v > mu + 2 * sigma:
                classes[u][cat] = Exposure.EXTREME_HIGH
            elif v < mu - 2 * sigma:
                classes[u][cat] = Exposure.EXTREME_LOW
            else:
                classes[u][cat] = Exposure.NORMAL
    fb = tuple(u for u in users
               if Exposure.EXTREME_HIGH in classes[u].values()
               and Exposure.EXTREME_LOW in classes[u].values())
    return classes, fb


class TestClassifyUsers:
    def test_hand_thresholds(self):
        # eight users: seven at 1.0, one at 3.0 on category a
        beliefs = {f"u{i}": {"a": 1.0, "b": float(i)} for i in range(8)}
        beliefs["u7"]["a"] = 3.0
        result = classify_users(beliefs, ("a", "b"))
        stats = result.stats["a"]
        assert stats.mu == pytest.approx(1.25)
        assert stats.sigma == pytest.approx(math.sqrt(7 * 0.0625 + 3.0625) / math.sqrt(8))
        assert result.classes["u7"]["a"] is Exposure.EXTREME_HIGH
        assert result.classes["u0"]["a"] is Exposure.NORMAL

    def test_strict_inequality_at_threshold(self):
        # values engineered so one user sits exactly on mu + 2 sigma
        vals = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]
        beliefs = {f"u{i}": {"a": v} for i, v in enumerate(vals)}
        result = classify_users(beliefs, ("a",))
        # mu = 0.5, sigma = 0.5, high = 1.5: nobody crosses strictly
        assert all(result.classes[u]["a"] is Exposure.NORMAL for u in beliefs)

    def test_zero_sigma_category_all_normal(self):
        beliefs = {f"u{i}": {"a": 2.0} for i in range(9)}
        result = classify_users(beliefs, ("a",))
        assert result.stats["a"].sigma == 0.0
        assert all(c["a"] is Exposure.NORMAL for c in result.classes.values())
        assert result.stats["a"].ks is None

    def test_fb_requires_both_extremes(self):
        beliefs = {f"u{i}": {"a": 1.0, "b": 1.0} for i in range(11)}
        beliefs["uX"] = {"a": 9.0, "b": 1.0}       # high only: not bubble-affected
        result = classify_users(beliefs, ("a", "b"))
        assert result.classes["uX"]["a"] is Exposure.EXTREME_HIGH
        assert result.fb_users == ()
        beliefs["uX"]["b"] = 0.0                   # now low on b as well
        result = classify_users(beliefs, ("a", "b"))
        assert result.classes["uX"]["b"] is Exposure.EXTREME_LOW
        assert result.fb_users == ("uX",)

    def test_population_floor(self):
        beliefs = {f"u{i}": {"a": float(i)} for i in range(MIN_POPULATION - 1)}
        with pytest.raises(ValueError, match="at least"):
            classify_users(beliefs, ("a",))

    def test_matches_brute_force_on_random_populations(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n_users = int(rng.integers(MIN_POPULATION, 31))
            n_cats = int(rng.integers(1, 6))
            cats = tuple(f"c{k}" for k in range(n_cats))
            beliefs = {
                f"u{i:02d}": {c: float(np.round(rng.gamma(2.0, 0.5), 3))
                              for c in cats if rng.random() < 0.9}
                for i in range(n_users)
            }
            ours = classify_users(beliefs, cats)
            ref_classes, ref_fb = brute_force_classify(beliefs, cats)
            assert ours.classes == ref_classes
            assert ours.fb_users == ref_fb

    def test_synth_fixture_flags_exactly_the_biased_users(self):
        corpus = synth_corpus(SynthSpec())
        corpus2 = synth_corpus(SynthSpec(bias_profile=10))
        networks = build_all(corpus2)
        beliefs = {u: dict(net.belief) for u, net in networks.items()
                   if net.total_mass() > 0}
        result = classify_users(beliefs, corpus2.categories())
        assert result.fb_users == tuple(f"u{i:04d}" for i in range(10))
        # unbiased default corpus flags nobody
        networks0 = build_all(corpus)
        beliefs0 = {u: dict(net.belief) for u, net in networks0.items()}
        assert classify_users(beliefs0, corpus.categories()).fb_users == ()


class TestMonotoneTrend:
    def test_increasing_and_decreasing(self):
        assert monotone_trend([1, 2, 3, 4]) == 1.0
        assert monotone_trend([4, 3, 2, 1]) == -1.0

    def test_constant_counts_as_concordant(self):
        assert monotone_trend([2, 2, 2]) == 1.0

    def test_mixed_hand_value(self):
        # pairs: (3,1)d (3,2)d (3,4)u (1,2)u (1,4)u (2,4)u -> (4-2)/6
        assert monotone_trend([3, 1, 2, 4]) == pytest.approx(2 / 6)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            monotone_trend([1])


class TestDetectFbSystem:
    def narrow_feeds(self):
        return [[make_item("a"), make_item("a")] for _ in range(10)]

    def test_low_coverage_rising_share_flags(self):
        report = build_report(self.narrow_feeds(), beliefs=None,
                              taxonomy={f"c{i}": () for i in range(20)} | {"a": ("a/s",)},
                              window=2)
        assert report.fb_system is True

    def test_high_coverage_passes(self):
        feeds = [[make_item("a"), make_item("b"), make_item("c")]
                 for _ in range(10)]
        report = build_report(feeds, beliefs=None, taxonomy=TAXONOMY, window=2)
        assert report.fb_system is False

    def test_threshold_override(self):
        report = DetectionReport(
            coverage=[0.3] * 6,
            duplicate=[],
            evolution=[(0, {"a": 1.0}), (1, {"a": 1.0})])
        assert detect_fb_system(report) is False
        assert detect_fb_system(report, SystemThresholds(coverage_max=0.4)) is True

    def test_needs_history(self):
        report = DetectionReport(coverage=[0.1] * 3, duplicate=[],
                                 evolution=[(0, {"a": 1.0}), (1, {"a": 1.0})])
        with pytest.raises(ValueError):
            detect_fb_system(report)


class TestBuildReport:
    def test_population_section_present_when_enough_users(self):
        corpus = synth_corpus(SynthSpec(bias_profile=10))
        networks = build_all(corpus)
        beliefs = {u: dict(net.belief) for u, net in networks.items()}
        feeds = [[make_item("a", "a/s")] * 3 for _ in range(6)]
        report = build_report(feeds, beliefs, {"a": ("a/s",), **corpus.taxonomy})
        assert len(report.fb_users) == 10
        assert report.coverage == [pytest.approx(1 / 18)] * 6
        assert report.duplicate == [1.0] * 6
        assert report.fb_system is not None
