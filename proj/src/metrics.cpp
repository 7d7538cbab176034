#include "refcheck/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "refcheck/errors.hpp"
#include "refcheck/rng.hpp"

namespace refcheck::metrics {

namespace {

struct Placements {
    double theta = 0.0;       // Mann-Whitney AUC
    std::vector<double> v10;  // per-case placements
    std::vector<double> v01;  // per-control placements
};

// 1-based midranks of v; exact under ties.
std::vector<double> midranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    return rank;
}

// DeLong placements via pooled and within-class midranks (Sun & Xu form).
Placements compute_placements(std::span<const ScoredLabel> data) {
    std::vector<double> cases, controls;
    for (const auto& d : data) {
        (d.label == Label::G ? cases : controls).push_back(d.score);
    }
    const std::size_t m = cases.size(), n = controls.size();
    if (m == 0 || n == 0) {
        throw DegenerateLabels("need at least one record of each class");
    }

    std::vector<double> pooled;
    pooled.reserve(m + n);
    pooled.insert(pooled.end(), cases.begin(), cases.end());
    pooled.insert(pooled.end(), controls.begin(), controls.end());

    const std::vector<double> tz = midranks(pooled);
    const std::vector<double> tx = midranks(cases);
    const std::vector<double> ty = midranks(controls);

    Placements p;
    p.v10.resize(m);
    p.v01.resize(n);
    double sum_tz_cases = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sum_tz_cases += tz[i];
        p.v10[i] = (tz[i] - tx[i]) / static_cast<double>(n);
    }
    for (std::size_t j = 0; j < n; ++j) {
        p.v01[j] = 1.0 - (tz[m + j] - ty[j]) / static_cast<double>(m);
    }
    p.theta = (sum_tz_cases - 0.5 * static_cast<double>(m) * static_cast<double>(m + 1)) /
              (static_cast<double>(m) * static_cast<double>(n));
    return p;
}

double sample_variance(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size() - 1);
}

}  // namespace

double auc(std::span<const ScoredLabel> data) {
    return compute_placements(data).theta;
}

DeLongResult delong(std::span<const ScoredLabel> data) {
    const Placements p = compute_placements(data);
    const double s10 = sample_variance(p.v10, p.theta);
    const double s01 = sample_variance(p.v01, p.theta);
    const double var = s10 / static_cast<double>(p.v10.size()) +
                       s01 / static_cast<double>(p.v01.size());
    return DeLongResult{p.theta, std::sqrt(std::max(var, 0.0))};
}

std::pair<double, double> delong_ci(std::span<const ScoredLabel> data, double level) {
    if (level <= 0.0 || level >= 1.0) throw ConfigError("confidence level must be in (0,1)");
    std::size_t m = 0, n = 0;
    for (const auto& d : data) (d.label == Label::G ? m : n) += 1;
    if (m < 2 || n < 2) {
        throw DegenerateLabels("DeLong CI needs at least two records of each class");
    }
    const DeLongResult r = delong(data);
    const double z = normal_quantile(0.5 * (1.0 + level));
    return {std::clamp(r.auc - z * r.se, 0.0, 1.0), std::clamp(r.auc + z * r.se, 0.0, 1.0)};
}

namespace {

// Threshold sweep over distinct score values (ties grouped).
std::vector<RocPoint> roc_points(std::span<const ScoredLabel> data) {
    std::size_t m = 0, n = 0;
    for (const auto& d : data) (d.label == Label::G ? m : n) += 1;
    if (m == 0 || n == 0) {
        throw DegenerateLabels("ROC needs at least one record of each class");
    }

    std::map<double, std::pair<std::size_t, std::size_t>> by_score;  // score -> (G, H)
    for (const auto& d : data) {
        auto& cell = by_score[d.score];
        if (d.label == Label::G) {
            ++cell.first;
        } else {
            ++cell.second;
        }
    }

    std::vector<RocPoint> points;
    points.reserve(by_score.size() + 1);
    points.push_back({0.0, 0.0});
    std::size_t cum_g = 0, cum_h = 0;
    for (auto it = by_score.rbegin(); it != by_score.rend(); ++it) {
        cum_g += it->second.first;
        cum_h += it->second.second;
        points.push_back({static_cast<double>(cum_h) / static_cast<double>(n),
                          static_cast<double>(cum_g) / static_cast<double>(m)});
    }
    return points;
}

double interpolate_points(std::span<const RocPoint> pts, double fpr) {
    if (pts.empty()) return 0.0;
    if (fpr <= pts.front().fpr) return pts.front().tpr;
    if (fpr >= pts.back().fpr) return pts.back().tpr;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (fpr > pts[i].fpr) continue;
        const auto& lo = pts[i - 1];
        const auto& hi = pts[i];
        if (hi.fpr == lo.fpr) return std::max(lo.tpr, hi.tpr);  // vertical jump
        const double t = (fpr - lo.fpr) / (hi.fpr - lo.fpr);
        return lo.tpr + t * (hi.tpr - lo.tpr);
    }
    return pts.back().tpr;
}

}  // namespace

RocCurve roc_curve(std::span<const ScoredLabel> data) {
    RocCurve curve;
    curve.points = roc_points(data);
    curve.auc = auc(data);
    std::size_t m = 0, n = 0;
    for (const auto& d : data) (d.label == Label::G ? m : n) += 1;
    if (m >= 2 && n >= 2) {
        curve.auc_ci95 = delong_ci(data, 0.95);
    } else {
        curve.auc_ci95 = {curve.auc, curve.auc};
    }
    return curve;
}

FdrCurve fdr_curve(std::span<const ScoredLabel> data, const FdrOptions& opts) {
    if (data.empty()) throw ConfigError("FDR curve needs a nonempty dataset");

    const std::size_t total = data.size();
    std::map<double, std::pair<std::size_t, std::size_t>> by_score;  // score -> (kept, H)
    for (const auto& d : data) {
        auto& cell = by_score[d.score];
        ++cell.first;
        if (d.label == Label::H) ++cell.second;
    }

    FdrCurve curve;

    // Extrapolate below the smallest achievable preserved fraction by
    // uniformly subsampling among records with the maximal score, averaging
    // a fixed number of seeded draws per point.
    const auto& top = *by_score.rbegin();
    const std::size_t k_min = top.second.first;
    const std::size_t top_h = top.second.second;
    if (k_min > 1) {
        std::vector<int> group(k_min, 0);  // 1 marks an H record
        for (std::size_t i = 0; i < top_h; ++i) group[i] = 1;
        const int draws = std::max(1, opts.extrapolation_draws);
        for (std::size_t k = 1; k < k_min; ++k) {
            Rng rng(substream_seed(opts.seed, "fdr-extrapolation", k));
            double fdr_sum = 0.0;
            for (int d = 0; d < draws; ++d) {
                // Partial Fisher-Yates draw of k records from the group.
                std::vector<int> pool = group;
                std::size_t h_kept = 0;
                for (std::size_t t = 0; t < k; ++t) {
                    const std::size_t j = t + rng.below(pool.size() - t);
                    std::swap(pool[t], pool[j]);
                    h_kept += static_cast<std::size_t>(pool[t]);
                }
                fdr_sum += static_cast<double>(h_kept) / static_cast<double>(k);
            }
            curve.points.push_back({static_cast<double>(k) / static_cast<double>(total),
                                    fdr_sum / static_cast<double>(draws), true});
        }
    }

    std::size_t kept = 0, kept_h = 0;
    for (auto it = by_score.rbegin(); it != by_score.rend(); ++it) {
        kept += it->second.first;
        kept_h += it->second.second;
        curve.points.push_back({static_cast<double>(kept) / static_cast<double>(total),
                                static_cast<double>(kept_h) / static_cast<double>(kept), false});
    }
    return curve;
}

KappaResult cohens_kappa(std::span<const Label> a, std::span<const Label> b) {
    if (a.size() != b.size()) throw LengthMismatch("label vectors differ in length");
    if (a.empty()) throw LengthMismatch("label vectors are empty");

    const double n = static_cast<double>(a.size());
    std::size_t agree = 0, a_g = 0, b_g = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) ++agree;
        if (a[i] == Label::G) ++a_g;
        if (b[i] == Label::G) ++b_g;
    }
    KappaResult r;
    r.po = static_cast<double>(agree) / n;
    const double pa_g = static_cast<double>(a_g) / n;
    const double pb_g = static_cast<double>(b_g) / n;
    r.pe = pa_g * pb_g + (1.0 - pa_g) * (1.0 - pb_g);
    if (r.po == 1.0) {
        r.kappa = 1.0;  // perfect agreement, covers pe == 1
    } else {
        r.kappa = (r.po - r.pe) / (1.0 - r.pe);
    }
    return r;
}

double hallucination_rate(std::span<const Label> labels) {
    if (labels.empty()) throw LengthMismatch("label vector is empty");
    std::size_t h = 0;
    for (Label l : labels) {
        if (l == Label::H) ++h;
    }
    return static_cast<double>(h) / static_cast<double>(labels.size());
}

double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0) throw ConfigError("normal quantile requires p in (0,1)");

    // Acklam's rational approximation, |relative error| < 1.15e-9.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;

    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

Band bootstrap_band(std::span<const ScoredLabel> data, const CurveStatistic& statistic,
                    const BootstrapOptions& opts) {
    if (opts.replicates < 2) throw ConfigError("bootstrap needs at least 2 replicates");
    if (opts.grid_points < 1) throw ConfigError("bootstrap grid needs at least 1 point");
    if (data.empty()) throw ConfigError("bootstrap needs a nonempty dataset");

    Band band;
    band.grid.resize(opts.grid_points);
    if (opts.grid_points == 1) {
        band.grid[0] = 0.0;
    } else {
        for (int i = 0; i < opts.grid_points; ++i) {
            band.grid[i] = static_cast<double>(i) / static_cast<double>(opts.grid_points - 1);
        }
    }

    std::vector<std::size_t> g_idx, h_idx;
    if (opts.stratified) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            (data[i].label == Label::G ? g_idx : h_idx).push_back(i);
        }
    }

    const std::size_t n = data.size();
    std::vector<std::vector<double>> values(opts.replicates);

    parallel_for(static_cast<std::size_t>(opts.replicates), opts.exec, [&](std::size_t r) {
        Rng rng(substream_seed(opts.seed, "bootstrap", r));
        std::vector<ScoredLabel> sample(n);
        for (int attempt = 0;; ++attempt) {
            if (opts.stratified) {
                std::size_t w = 0;
                for (std::size_t t = 0; t < g_idx.size(); ++t) {
                    sample[w++] = data[g_idx[rng.below(g_idx.size())]];
                }
                for (std::size_t t = 0; t < h_idx.size(); ++t) {
                    sample[w++] = data[h_idx[rng.below(h_idx.size())]];
                }
            } else {
                for (std::size_t t = 0; t < n; ++t) sample[t] = data[rng.below(n)];
            }
            try {
                values[r] = statistic(sample, band.grid, substream_seed(opts.seed, "bootstrap-stat", r));
                break;
            } catch (const DegenerateLabels&) {
                if (attempt >= 1000) throw;  // data cannot yield a two-class resample
            }
        }
    });

    const auto g = static_cast<std::size_t>(opts.grid_points);
    band.mean.assign(g, 0.0);
    band.lo.assign(g, 0.0);
    band.hi.assign(g, 0.0);
    for (std::size_t i = 0; i < g; ++i) {
        double mean = 0.0;
        for (const auto& v : values) mean += v[i];
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (const auto& v : values) var += (v[i] - mean) * (v[i] - mean);
        var /= static_cast<double>(values.size() - 1);
        const double se = std::sqrt(var);
        band.mean[i] = mean;
        band.lo[i] = mean - 1.96 * se;
        band.hi[i] = mean + 1.96 * se;
    }
    return band;
}

double interpolate_roc(const RocCurve& curve, double fpr) {
    return interpolate_points(curve.points, fpr);
}

double interpolate_fdr(const FdrCurve& curve, double preserved_fraction) {
    const auto& pts = curve.points;
    if (pts.empty()) return 0.0;
    if (preserved_fraction <= pts.front().preserved_fraction) return pts.front().fdr;
    if (preserved_fraction >= pts.back().preserved_fraction) return pts.back().fdr;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (preserved_fraction > pts[i].preserved_fraction) continue;
        const auto& lo = pts[i - 1];
        const auto& hi = pts[i];
        const double span = hi.preserved_fraction - lo.preserved_fraction;
        if (span == 0.0) return hi.fdr;
        const double t = (preserved_fraction - lo.preserved_fraction) / span;
        return lo.fdr + t * (hi.fdr - lo.fdr);
    }
    return pts.back().fdr;
}

CurveStatistic roc_interpolation_statistic() {
    return [](std::span<const ScoredLabel> sample, std::span<const double> grid,
              std::uint64_t) {
        // Replicates only need the staircase, not the AUC CI.
        const std::vector<RocPoint> pts = roc_points(sample);
        std::vector<double> out(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) out[i] = interpolate_points(pts, grid[i]);
        return out;
    };
}

CurveStatistic fdr_interpolation_statistic(int extrapolation_draws) {
    return [extrapolation_draws](std::span<const ScoredLabel> sample,
                                 std::span<const double> grid, std::uint64_t seed) {
        FdrOptions opts;
        opts.seed = seed;
        opts.extrapolation_draws = extrapolation_draws;
        const FdrCurve curve = fdr_curve(sample, opts);
        std::vector<double> out(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) out[i] = interpolate_fdr(curve, grid[i]);
        return out;
    };
}

}  // namespace refcheck::metrics
