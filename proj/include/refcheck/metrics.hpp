#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refcheck/label.hpp"
#include "refcheck/parallel.hpp"

namespace refcheck::metrics {

// One observation: a method score and the ground-truth class. G is the
// positive class throughout (high score means "predicted grounded").
struct ScoredLabel {
    double score = 0.0;
    Label label = Label::G;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

// Pointwise bootstrap band evaluated on a fixed grid.
struct Band {
    std::vector<double> grid;
    std::vector<double> mean;
    std::vector<double> lo;  // mean - 1.96 * bootstrap SE
    std::vector<double> hi;  // mean + 1.96 * bootstrap SE
};

struct RocCurve {
    std::vector<RocPoint> points;  // staircase from (0,0) to (1,1)
    double auc = 0.0;
    std::pair<double, double> auc_ci95{0.0, 0.0};
    std::optional<Band> band;  // tpr over an fpr grid
};

struct FdrPoint {
    double preserved_fraction = 0.0;  // (0, 1]
    double fdr = 0.0;                 // [0, 1]
    bool extrapolated = false;
};

struct FdrCurve {
    std::vector<FdrPoint> points;  // strictly increasing preserved_fraction
    std::optional<Band> band;      // fdr over a preserved-fraction grid
};

struct KappaResult {
    double po = 0.0;
    double pe = 0.0;
    double kappa = 0.0;
};

struct DeLongResult {
    double auc = 0.0;
    double se = 0.0;
};

// Mann-Whitney AUC with 0.5 credit for tied pairs, computed via midranks.
// Throws DegenerateLabels unless both classes are present.
double auc(std::span<const ScoredLabel> data);

// DeLong's covariance-free variance estimate from per-observation placements.
DeLongResult delong(std::span<const ScoredLabel> data);

// auc +- z(level) * se, clipped to [0, 1]. Needs >= 2 of each class.
std::pair<double, double> delong_ci(std::span<const ScoredLabel> data, double level);

// Threshold sweep over distinct score values (ties grouped); includes the
// Mann-Whitney AUC and its DeLong 95% CI. Bands are attached separately.
RocCurve roc_curve(std::span<const ScoredLabel> data);

struct FdrOptions {
    std::uint64_t seed = 0;
    int extrapolation_draws = 20;
};

// For each threshold, the fraction of records kept and the hallucination
// fraction among them. Below the smallest achievable preserved fraction the
// curve is extrapolated by seeded uniform subsampling among the records with
// the maximal score.
FdrCurve fdr_curve(std::span<const ScoredLabel> data, const FdrOptions& opts = {});

KappaResult cohens_kappa(std::span<const Label> a, std::span<const Label> b);

double hallucination_rate(std::span<const Label> labels);

// Inverse standard normal CDF (Acklam's rational approximation).
double normal_quantile(double p);

struct BootstrapOptions {
    int replicates = 100;
    std::uint64_t seed = 0;
    bool stratified = false;
    int grid_points = 101;
    Exec exec = Exec::parallel;
};

// Evaluates one bootstrap replicate on the fixed grid. The per-replicate seed
// comes from a named substream of the band seed, so parallel and serial runs
// agree bit-for-bit.
using CurveStatistic = std::function<std::vector<double>(
    std::span<const ScoredLabel> sample, std::span<const double> grid, std::uint64_t seed)>;

// Resamples whole (score, label) records with replacement and returns the
// pointwise mean +- 1.96 * bootstrap SE. Replicates whose resample the
// statistic rejects as single-class are redrawn from the same substream.
Band bootstrap_band(std::span<const ScoredLabel> data, const CurveStatistic& statistic,
                    const BootstrapOptions& opts);

// Canned statistics for the two curve types.
CurveStatistic roc_interpolation_statistic();
CurveStatistic fdr_interpolation_statistic(int extrapolation_draws = 20);

// Linear interpolation along a curve (upper envelope at vertical jumps).
double interpolate_roc(const RocCurve& curve, double fpr);
double interpolate_fdr(const FdrCurve& curve, double preserved_fraction);

}  // namespace refcheck::metrics
