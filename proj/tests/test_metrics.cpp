#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "refcheck/metrics.hpp"
#include "refcheck/rng.hpp"
#include "test_support.hpp"

using namespace refcheck;
using namespace refcheck::testing;
using metrics::ScoredLabel;

namespace {

std::vector<ScoredLabel> hand_example() {
    // H scores {0.1, 0.4}, G scores {0.3, 0.9}: 3 of 4 pairs ordered correctly.
    return {{0.1, Label::H}, {0.4, Label::H}, {0.3, Label::G}, {0.9, Label::G}};
}

std::vector<Label> labels_from_counts(std::size_t g, std::size_t h) {
    std::vector<Label> v(g, Label::G);
    v.insert(v.end(), h, Label::H);
    return v;
}

}  // namespace

TEST_CASE("hand example: AUC is exactly 0.75") {
    CHECK(metrics::auc(hand_example()) == 0.75);
}

TEST_CASE("AUC equals the brute-force pairwise oracle on random tied data") {
    Rng rng(substream_seed(11, "auc-oracle"));
    for (int trial = 0; trial < 60; ++trial) {
        const auto data = random_tied_dataset(rng, 400);
        CAPTURE(trial);
        CHECK(std::abs(metrics::auc(data) - brute_force_auc(data)) <= 1e-12);
    }
}

TEST_CASE("inverting the scores complements the AUC") {
    Rng rng(substream_seed(12, "auc-swap"));
    for (int trial = 0; trial < 20; ++trial) {
        auto data = random_tied_dataset(rng, 200);
        const double a = metrics::auc(data);
        for (auto& d : data) d.score = -d.score;
        CHECK(std::abs(metrics::auc(data) - (1.0 - a)) <= 1e-12);
    }
}

TEST_CASE("degenerate single-class data is rejected") {
    std::vector<ScoredLabel> only_g = {{0.5, Label::G}, {0.7, Label::G}};
    CHECK_THROWS_AS(metrics::auc(only_g), DegenerateLabels);
    CHECK_THROWS_AS(metrics::roc_curve(only_g), DegenerateLabels);
    std::vector<ScoredLabel> one_each = {{0.5, Label::G}, {0.7, Label::H}};
    CHECK_THROWS_AS(metrics::delong_ci(one_each, 0.95), DegenerateLabels);
}

TEST_CASE("ROC of a perfect classifier passes through (0,1)") {
    std::vector<ScoredLabel> data = {
        {0.9, Label::G}, {0.8, Label::G}, {0.2, Label::H}, {0.1, Label::H}};
    const auto curve = metrics::roc_curve(data);
    CHECK(curve.auc == 1.0);
    bool through_corner = false;
    for (const auto& p : curve.points) {
        if (p.fpr == 0.0 && p.tpr == 1.0) through_corner = true;
    }
    CHECK(through_corner);
    CHECK(curve.points.front().fpr == 0.0);
    CHECK(curve.points.front().tpr == 0.0);
    CHECK(curve.points.back().fpr == 1.0);
    CHECK(curve.points.back().tpr == 1.0);
}

TEST_CASE("all-identical scores give the two-point chance diagonal") {
    std::vector<ScoredLabel> data = {
        {0.5, Label::G}, {0.5, Label::H}, {0.5, Label::G}, {0.5, Label::H}};
    const auto curve = metrics::roc_curve(data);
    REQUIRE(curve.points.size() == 2);
    CHECK(curve.points[0].fpr == 0.0);
    CHECK(curve.points[1].tpr == 1.0);
    CHECK(curve.auc == 0.5);
}

TEST_CASE("trapezoid area of the ROC staircase equals the Mann-Whitney AUC") {
    Rng rng(substream_seed(13, "roc-trap"));
    for (int trial = 0; trial < 40; ++trial) {
        const auto data = random_tied_dataset(rng, 300);
        const auto curve = metrics::roc_curve(data);
        CHECK(std::abs(trapezoid_area(curve.points) - curve.auc) <= 1e-12);
        for (std::size_t i = 1; i < curve.points.size(); ++i) {
            CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
            CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr);
        }
    }
}

TEST_CASE("strictly increasing score transforms leave ROC, AUC and FDR unchanged") {
    Rng rng(substream_seed(14, "monotone"));
    for (int trial = 0; trial < 20; ++trial) {
        const auto data = random_tied_dataset(rng, 200);
        auto transformed = data;
        for (auto& d : transformed) d.score = 1.0 / (1.0 + std::exp(-(3.0 * d.score + 1.0)));

        const auto a = metrics::roc_curve(data);
        const auto b = metrics::roc_curve(transformed);
        CHECK(a.auc == b.auc);
        REQUIRE(a.points.size() == b.points.size());
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            CHECK(a.points[i].fpr == b.points[i].fpr);
            CHECK(a.points[i].tpr == b.points[i].tpr);
        }

        metrics::FdrOptions opts;
        opts.seed = 9;
        const auto fa = metrics::fdr_curve(data, opts);
        const auto fb = metrics::fdr_curve(transformed, opts);
        REQUIRE(fa.points.size() == fb.points.size());
        for (std::size_t i = 0; i < fa.points.size(); ++i) {
            CHECK(fa.points[i].preserved_fraction == fb.points[i].preserved_fraction);
            CHECK(fa.points[i].fdr == fb.points[i].fdr);
            CHECK(fa.points[i].extrapolated == fb.points[i].extrapolated);
        }
    }
}

TEST_CASE("DeLong variance matches the 2x2 hand computation") {
    // G = {0.9, 0.3}, H = {0.4, 0.1}.
    // Placements: V10 = {1.0, 0.5}, V01 = {0.5, 1.0}, theta = 0.75.
    // S10 = S01 = 0.125, var = 0.125/2 + 0.125/2 = 0.125.
    std::vector<ScoredLabel> data = {
        {0.9, Label::G}, {0.3, Label::G}, {0.4, Label::H}, {0.1, Label::H}};
    const auto result = metrics::delong(data);
    CHECK(result.auc == 0.75);
    CHECK(std::abs(result.se - std::sqrt(0.125)) <= 1e-15);

    const auto ci = metrics::delong_ci(data, 0.95);
    const double z975 = 1.959963984540054;  // standard normal 97.5% quantile
    CHECK(ci.first == doctest::Approx(0.75 - z975 * std::sqrt(0.125)).epsilon(1e-7));
    CHECK(ci.second == 1.0);  // clipped at the upper bound
}

TEST_CASE("perfect separation collapses the CI to a point") {
    std::vector<ScoredLabel> data = {
        {0.9, Label::G}, {0.8, Label::G}, {0.2, Label::H}, {0.1, Label::H}};
    const auto result = metrics::delong(data);
    CHECK(result.se == 0.0);
    const auto ci = metrics::delong_ci(data, 0.95);
    CHECK(ci.first == 1.0);
    CHECK(ci.second == 1.0);
}

TEST_CASE("normal quantile") {
    CHECK(metrics::normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(metrics::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-8));
    CHECK(metrics::normal_quantile(0.025) ==
          doctest::Approx(-1.959963984540054).epsilon(1e-8));
    CHECK_THROWS_AS(metrics::normal_quantile(0.0), ConfigError);
    CHECK_THROWS_AS(metrics::normal_quantile(1.0), ConfigError);
}

TEST_CASE("DeLong CI width shrinks roughly as 1/sqrt(n)") {
    auto width_at = [](std::size_t n) {
        double total = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            const auto data =
                gaussian_dataset(n, n, 1.0, substream_seed(15, "delong-width", n * 100 + rep));
            const auto ci = metrics::delong_ci(data, 0.95);
            total += ci.second - ci.first;
        }
        return total / 10.0;
    };
    const double w50 = width_at(50);
    const double w200 = width_at(200);
    const double w800 = width_at(800);
    CHECK(w200 < w50);
    CHECK(w800 < w200);
    // two quadruplings of n: each should shrink the width by roughly half
    CHECK(w200 / w50 == doctest::Approx(0.5).epsilon(0.35));
    CHECK(w800 / w200 == doctest::Approx(0.5).epsilon(0.35));
}

TEST_CASE("DeLong coverage on synthetic Gaussians (smoke run)") {
    const double separation = 1.19;  // true AUC = Phi(1.19 / sqrt 2) ~ 0.8
    const double truth = analytic_gaussian_auc(separation);
    int covered = 0;
    const int trials = 300;
    for (int t = 0; t < trials; ++t) {
        const auto data =
            gaussian_dataset(100, 100, separation, substream_seed(16, "coverage", t));
        const auto ci = metrics::delong_ci(data, 0.95);
        if (truth >= ci.first && truth <= ci.second) ++covered;
    }
    const double rate = static_cast<double>(covered) / trials;
    CHECK(rate >= 0.90);
    CHECK(rate <= 0.99);
}

TEST_CASE("kappa reproduces the hand-computed confusion matrix") {
    // [[40, 5], [10, 45]]: po = 0.85, pe = 0.5, kappa = 0.7.
    std::vector<Label> a, b;
    auto fill = [&](std::size_t n, Label la, Label lb) {
        for (std::size_t i = 0; i < n; ++i) {
            a.push_back(la);
            b.push_back(lb);
        }
    };
    fill(40, Label::G, Label::G);
    fill(5, Label::G, Label::H);
    fill(10, Label::H, Label::G);
    fill(45, Label::H, Label::H);

    const auto k = metrics::cohens_kappa(a, b);
    CHECK(std::abs(k.po - 0.85) <= 1e-12);
    CHECK(std::abs(k.pe - 0.5) <= 1e-12);
    CHECK(std::abs(k.kappa - 0.7) <= 1e-12);
}

TEST_CASE("kappa of identical vectors is exactly 1") {
    const auto labels = labels_from_counts(47, 53);
    const auto k = metrics::cohens_kappa(labels, labels);
    CHECK(k.kappa == 1.0);
    CHECK(k.po == 1.0);
}

TEST_CASE("kappa in the reported annotation regime stays above 0.97") {
    // 99 of 100 agreements at a ~47% positive base rate.
    std::vector<Label> a = labels_from_counts(47, 53);
    std::vector<Label> b = a;
    b[0] = Label::H;  // single disagreement
    const auto k = metrics::cohens_kappa(a, b);
    CHECK(k.po == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(k.kappa >= 0.97);
    CHECK(k.kappa <= 1.0);
}

TEST_CASE("kappa is symmetric and invariant under relabeling both raters") {
    Rng rng(substream_seed(17, "kappa-sym"));
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Label> a, b;
        const std::size_t n = 10 + rng.below(100);
        for (std::size_t i = 0; i < n; ++i) {
            a.push_back(rng.below(2) ? Label::G : Label::H);
            b.push_back(rng.below(2) ? Label::G : Label::H);
        }
        const auto kab = metrics::cohens_kappa(a, b);
        const auto kba = metrics::cohens_kappa(b, a);
        CHECK(kab.kappa == doctest::Approx(kba.kappa).epsilon(1e-12));

        auto flip = [](std::vector<Label> v) {
            for (auto& l : v) l = l == Label::G ? Label::H : Label::G;
            return v;
        };
        const auto kflip = metrics::cohens_kappa(flip(a), flip(b));
        CHECK(kab.kappa == doctest::Approx(kflip.kappa).epsilon(1e-12));
    }
    CHECK_THROWS_AS(
        metrics::cohens_kappa(labels_from_counts(2, 0), labels_from_counts(2, 1)),
        LengthMismatch);
}

TEST_CASE("hallucination rate") {
    CHECK(metrics::hallucination_rate(labels_from_counts(532, 468)) == 0.468);
    CHECK(metrics::hallucination_rate(labels_from_counts(10, 0)) == 0.0);
    CHECK(metrics::hallucination_rate(labels_from_counts(0, 10)) == 1.0);
}

TEST_CASE("FDR hand example enumerates all four thresholds") {
    std::vector<ScoredLabel> data = {
        {0.9, Label::G}, {0.8, Label::H}, {0.7, Label::G}, {0.1, Label::H}};
    const auto curve = metrics::fdr_curve(data);
    REQUIRE(curve.points.size() == 4);
    CHECK(curve.points[0].preserved_fraction == 0.25);
    CHECK(curve.points[0].fdr == 0.0);
    CHECK(curve.points[1].preserved_fraction == 0.5);
    CHECK(curve.points[1].fdr == 0.5);
    CHECK(curve.points[2].preserved_fraction == 0.75);
    CHECK(curve.points[2].fdr == 1.0 / 3.0);
    CHECK(curve.points[3].preserved_fraction == 1.0);
    CHECK(curve.points[3].fdr == 0.5);
    for (const auto& p : curve.points) CHECK_FALSE(p.extrapolated);
}

TEST_CASE("FDR at full preservation equals the hallucination rate exactly") {
    Rng rng(substream_seed(18, "fdr-end"));
    for (int trial = 0; trial < 30; ++trial) {
        const auto data = random_tied_dataset(rng, 300);
        std::vector<Label> labels;
        for (const auto& d : data) labels.push_back(d.label);
        const auto curve = metrics::fdr_curve(data);
        CHECK(curve.points.back().preserved_fraction == 1.0);
        CHECK(curve.points.back().fdr == metrics::hallucination_rate(labels));
        for (std::size_t i = 1; i < curve.points.size(); ++i) {
            CHECK(curve.points[i].preserved_fraction >
                  curve.points[i - 1].preserved_fraction);
        }
    }
}

TEST_CASE("FDR extrapolates below the smallest achievable preservation") {
    // Four records tie at the maximal score, two of them hallucinated.
    std::vector<ScoredLabel> data = {{0.9, Label::G}, {0.9, Label::H}, {0.9, Label::G},
                                     {0.9, Label::H}, {0.5, Label::G}, {0.5, Label::H},
                                     {0.2, Label::G}, {0.2, Label::H}};
    metrics::FdrOptions opts;
    opts.seed = 4;
    const auto curve = metrics::fdr_curve(data, opts);

    // k = 1..3 extrapolated, then thresholds at 0.9, 0.5, 0.2.
    REQUIRE(curve.points.size() == 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(curve.points[i].extrapolated);
        CHECK(curve.points[i].preserved_fraction ==
              static_cast<double>(i + 1) / static_cast<double>(data.size()));
        // hypergeometric mean fraction of H among the max-score group is 0.5
        CHECK(curve.points[i].fdr >= 0.0);
        CHECK(curve.points[i].fdr <= 1.0);
        CHECK(std::abs(curve.points[i].fdr - 0.5) <= 0.35);  // 20-draw average jitter
    }
    CHECK_FALSE(curve.points[3].extrapolated);
    CHECK(curve.points[3].preserved_fraction == 0.5);
    CHECK(curve.points[3].fdr == 0.5);

    // Deterministic in the seed.
    const auto again = metrics::fdr_curve(data, opts);
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        CHECK(curve.points[i].fdr == again.points[i].fdr);
    }
}

TEST_CASE("bootstrap bands are deterministic in the seed") {
    const auto data = gaussian_dataset(60, 60, 1.0, 77);
    metrics::BootstrapOptions opts;
    opts.replicates = 100;
    opts.seed = 5;
    const auto a = metrics::bootstrap_band(data, metrics::roc_interpolation_statistic(), opts);
    const auto b = metrics::bootstrap_band(data, metrics::roc_interpolation_statistic(), opts);
    CHECK(a.mean == b.mean);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
}

TEST_CASE("serial and OpenMP bootstrap paths agree bit for bit") {
    const auto data = gaussian_dataset(80, 80, 0.9, 78);
    metrics::BootstrapOptions opts;
    opts.replicates = 64;
    opts.seed = 6;

    for (const auto& stat :
         {metrics::roc_interpolation_statistic(), metrics::fdr_interpolation_statistic(20)}) {
        opts.exec = Exec::serial;
        const auto serial = metrics::bootstrap_band(data, stat, opts);
        opts.exec = Exec::parallel;
        const auto parallel = metrics::bootstrap_band(data, stat, opts);
        CHECK(serial.mean == parallel.mean);
        CHECK(serial.lo == parallel.lo);
        CHECK(serial.hi == parallel.hi);
    }
}

TEST_CASE("scalar-statistic band: mean score of balanced 0/1 data narrows with n") {
    auto make_binary = [](std::size_t n) {
        std::vector<ScoredLabel> data;
        for (std::size_t i = 0; i < n; ++i) {
            data.push_back({i % 2 ? 1.0 : 0.0, i % 2 ? Label::G : Label::H});
        }
        return data;
    };
    const metrics::CurveStatistic mean_score =
        [](std::span<const ScoredLabel> sample, std::span<const double> grid, std::uint64_t) {
            double m = 0.0;
            for (const auto& s : sample) m += s.score;
            return std::vector<double>(grid.size(), m / static_cast<double>(sample.size()));
        };

    metrics::BootstrapOptions opts;
    opts.replicates = 200;
    opts.grid_points = 1;
    opts.seed = 7;

    const auto small = metrics::bootstrap_band(make_binary(100), mean_score, opts);
    const auto large = metrics::bootstrap_band(make_binary(1600), mean_score, opts);
    CHECK(small.mean[0] == doctest::Approx(0.5).epsilon(0.15));
    CHECK(large.mean[0] == doctest::Approx(0.5).epsilon(0.05));
    CHECK((large.hi[0] - large.lo[0]) < (small.hi[0] - small.lo[0]));
}

TEST_CASE("bootstrap SE of the AUC agrees with Monte-Carlo sampling variance") {
    const double separation = 1.0;
    const std::size_t n = 200;  // per class

    // Monte-Carlo oracle: the sampling sd of the AUC over fresh datasets.
    const int mc_trials = 1500;
    std::vector<double> aucs(mc_trials);
    parallel_for(mc_trials, Exec::parallel, [&](std::size_t t) {
        const auto d = gaussian_dataset(n, n, separation, substream_seed(19, "mc", t));
        aucs[t] = metrics::auc(d);
    });
    double mean = 0.0;
    for (double a : aucs) mean += a;
    mean /= mc_trials;
    double var = 0.0;
    for (double a : aucs) var += (a - mean) * (a - mean);
    const double mc_sd = std::sqrt(var / (mc_trials - 1));

    // Bootstrap estimate from one dataset.
    const auto data = gaussian_dataset(n, n, separation, substream_seed(19, "boot-data", 0));
    const metrics::CurveStatistic auc_stat =
        [](std::span<const ScoredLabel> sample, std::span<const double> grid, std::uint64_t) {
            return std::vector<double>(grid.size(), metrics::auc(sample));
        };
    metrics::BootstrapOptions opts;
    opts.replicates = 400;
    opts.grid_points = 1;
    opts.seed = 20;
    const auto band = metrics::bootstrap_band(data, auc_stat, opts);
    const double boot_se = (band.hi[0] - band.lo[0]) / (2.0 * 1.96);

    CHECK(std::abs(boot_se - mc_sd) / mc_sd <= 0.25);
}

TEST_CASE("stratified resampling keeps rare classes alive") {
    std::vector<ScoredLabel> data;
    for (int i = 0; i < 50; ++i) data.push_back({0.1 + 0.01 * i, Label::G});
    data.push_back({0.95, Label::H});
    data.push_back({0.05, Label::H});

    metrics::BootstrapOptions opts;
    opts.replicates = 50;
    opts.seed = 21;
    opts.stratified = true;
    const auto band =
        metrics::bootstrap_band(data, metrics::roc_interpolation_statistic(), opts);
    for (double v : band.mean) {
        CHECK(std::isfinite(v));
    }
}

TEST_CASE("tiny datasets survive via degenerate-resample redraw") {
    std::vector<ScoredLabel> data = {{0.9, Label::G}, {0.7, Label::G}, {0.2, Label::H}};
    metrics::BootstrapOptions opts;
    opts.replicates = 50;
    opts.seed = 22;
    const auto band =
        metrics::bootstrap_band(data, metrics::roc_interpolation_statistic(), opts);
    CHECK(band.mean.size() == 101);
    for (double v : band.mean) CHECK(std::isfinite(v));
}

TEST_CASE("bootstrap option validation") {
    const auto data = hand_example();
    metrics::BootstrapOptions opts;
    opts.replicates = 1;
    CHECK_THROWS_AS(
        metrics::bootstrap_band(data, metrics::roc_interpolation_statistic(), opts),
        ConfigError);
}
