#include "core/mean.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace rfpca {

namespace {

constexpr double kGolden = 0.6180339887498949;

double loss_objective(const LocalWeights& weights, const LossSpec& loss,
                      double beta) {
    double s = 0.0;
    for (const auto& e : weights.entries) {
        s += e.gamma * e.omega * loss.rho(e.value - beta);
    }
    return s;
}

FunctionalDataset subset_dataset(const FunctionalDataset& data,
                                 const std::vector<char>& keep) {
    FunctionalDataset out;
    for (std::size_t i = 0; i < data.subjects.size(); ++i) {
        if (keep[i]) out.subjects.push_back(data.subjects[i]);
    }
    return out;
}

}  // namespace

PooledData PooledData::build(const FunctionalDataset& data,
                             SubjectWeighting weighting) {
    const auto gamma = subject_weights(data, weighting);
    PooledData pooled;
    const std::size_t total = data.num_observations();
    pooled.time.reserve(total);
    pooled.value.reserve(total);
    pooled.gamma.reserve(total);
    pooled.subject.reserve(total);

    std::vector<std::size_t> order;
    std::vector<std::pair<double, std::pair<std::uint32_t, double>>> rows;
    rows.reserve(total);
    for (std::size_t i = 0; i < data.subjects.size(); ++i) {
        for (const auto& o : data.subjects[i].obs) {
            rows.push_back({o.time, {static_cast<std::uint32_t>(i), o.value}});
        }
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& r : rows) {
        pooled.time.push_back(r.first);
        pooled.subject.push_back(r.second.first);
        pooled.value.push_back(r.second.second);
        pooled.gamma.push_back(gamma[r.second.first]);
    }
    return pooled;
}

LocalWeights local_weights(const PooledData& pooled, double t, double h,
                           const Kernel& kernel) {
    if (!(h > 0.0)) throw std::invalid_argument("local_weights: h must be > 0");

    const auto lo = std::lower_bound(pooled.time.begin(), pooled.time.end(), t - h);
    const auto hi = std::upper_bound(pooled.time.begin(), pooled.time.end(), t + h);
    const std::size_t first = static_cast<std::size_t>(lo - pooled.time.begin());
    const std::size_t last = static_cast<std::size_t>(hi - pooled.time.begin());

    double u0 = 0.0, u1 = 0.0, u2 = 0.0;
    LocalWeights w;
    w.entries.reserve(last - first);
    for (std::size_t idx = first; idx < last; ++idx) {
        const double d = pooled.time[idx] - t;
        const double k = kernel.scaled(d, h);
        if (k <= 0.0) continue;
        const double gk = pooled.gamma[idx] * k;
        u0 += gk;
        u1 += gk * d;
        u2 += gk * d * d;
        w.entries.push_back({pooled.subject[idx], pooled.gamma[idx], k,
                             pooled.time[idx], pooled.value[idx]});
    }

    w.sigma0_sq = u0 * u2 - u1 * u1;
    const double eps = 1e-12 * h * h * h * h;
    if (!(w.sigma0_sq > eps)) {
        throw SingularDesignError("singular local design at t=" +
                                  std::to_string(t) + ", h=" + std::to_string(h));
    }
    const double inv = 1.0 / w.sigma0_sq;
    for (auto& e : w.entries) {
        const double d = e.time - t;
        e.omega = inv * e.omega * (u2 - u1 * d);  // omega held K_h so far
    }
    return w;
}

LocalWeights local_weights(const FunctionalDataset& data, double t, double h,
                           const Kernel& kernel, SubjectWeighting weighting) {
    return local_weights(PooledData::build(data, weighting), t, h, kernel);
}

double minimize_weighted_loss(const LocalWeights& weights, const LossSpec& loss) {
    if (weights.entries.empty()) {
        throw SingularDesignError("minimize_weighted_loss: empty window");
    }

    if (loss.family() == LossFamily::Square) {
        double num = 0.0, den = 0.0, absden = 0.0;
        for (const auto& e : weights.entries) {
            const double w = e.gamma * e.omega;
            num += w * e.value;
            den += w;
            absden += std::fabs(w);
        }
        // den = 1 analytically; catastrophic cancellation means the local
        // design is numerically degenerate.
        if (!(std::fabs(den) > 1e-8 * absden)) {
            throw SingularDesignError(
                "square-loss local weights cancel (degenerate design)");
        }
        return num / den;
    }

    double xmin = weights.entries.front().value;
    double xmax = xmin;
    for (const auto& e : weights.entries) {
        xmin = std::min(xmin, e.value);
        xmax = std::max(xmax, e.value);
    }
    const double range = xmax - xmin;
    if (range <= 0.0) return xmin;

    const double lo = xmin - range;
    const double hi = xmax + range;
    constexpr int kGridPoints = 201;
    const double step = (hi - lo) / (kGridPoints - 1);

    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kGridPoints; ++i) {
        const double v = loss_objective(weights, loss, lo + i * step);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }

    // Golden-section refinement inside the bracketing grid cells.
    double a = lo + std::max(0, best - 1) * step;
    double b = lo + std::min(kGridPoints - 1, best + 1) * step;
    const double tol = 1e-8 * (1.0 + range);
    double x1 = b - kGolden * (b - a);
    double x2 = a + kGolden * (b - a);
    double f1 = loss_objective(weights, loss, x1);
    double f2 = loss_objective(weights, loss, x2);
    int guard = 0;
    while (b - a > tol && guard++ < 200) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kGolden * (b - a);
            f1 = loss_objective(weights, loss, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kGolden * (b - a);
            f2 = loss_objective(weights, loss, x2);
        }
    }
    return 0.5 * (a + b);
}

double estimate_mean_at(const PooledData& pooled, double t, double h,
                        const Kernel& kernel, const LossSpec& loss) {
    return minimize_weighted_loss(local_weights(pooled, t, h, kernel), loss);
}

double estimate_mean_at(const FunctionalDataset& data, double t, double h,
                        const Kernel& kernel, const LossSpec& loss,
                        SubjectWeighting weighting) {
    return estimate_mean_at(PooledData::build(data, weighting), t, h, kernel, loss);
}

MeanEstimate estimate_mean_curve(const FunctionalDataset& data,
                                 const std::vector<double>& grid, double h,
                                 const Kernel& kernel, const LossSpec& loss,
                                 SubjectWeighting weighting) {
    const PooledData pooled = PooledData::build(data, weighting);
    MeanEstimate est;
    est.grid = grid;
    est.bandwidth = h;
    est.loss = loss;
    est.values.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
    est.filled.assign(grid.size(), 0);

    std::size_t valid = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        try {
            est.values[g] = estimate_mean_at(pooled, grid[g], h, kernel, loss);
            ++valid;
        } catch (const SingularDesignError&) {
            est.filled[g] = 1;
        }
    }
    if (valid == 0) {
        throw EstimationError("mean estimation failed at every grid point (h=" +
                              std::to_string(h) + ")");
    }
    if (valid < grid.size()) {
        // Nearest-valid-neighbor fill, flagged.
        for (std::size_t g = 0; g < grid.size(); ++g) {
            if (!est.filled[g]) continue;
            double best_dist = std::numeric_limits<double>::infinity();
            double fill = 0.0;
            for (std::size_t j = 0; j < grid.size(); ++j) {
                if (est.filled[j]) continue;
                const double d = std::fabs(grid[j] - grid[g]);
                if (d < best_dist) {
                    best_dist = d;
                    fill = est.values[j];
                }
            }
            est.values[g] = fill;
        }
    }
    return est;
}

std::size_t MeanEstimate::filled_count() const {
    std::size_t c = 0;
    for (auto f : filled) c += f;
    return c;
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k,
                                                 std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
    if (n < k) throw std::invalid_argument("make_folds: more folds than subjects");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<std::size_t>> folds(k);
    for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(idx[i]);
    return folds;
}

std::vector<double> default_bandwidth_candidates(const FunctionalDataset& data) {
    std::vector<double> times;
    times.reserve(data.num_observations());
    for (const auto& s : data.subjects) {
        for (const auto& o : s.obs) times.push_back(o.time);
    }
    std::sort(times.begin(), times.end());
    std::vector<double> gaps;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const double g = times[i + 1] - times[i];
        if (g > 0.0) gaps.push_back(g);
    }
    double median_gap = 0.01;
    if (!gaps.empty()) {
        std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
        median_gap = gaps[gaps.size() / 2];
    }
    // Occupancy floor: a boundary window [0, h] should hold roughly 50
    // pooled observations so that a contaminated minority cannot dominate
    // the local fit (CV training folds see about half the data).
    const double occupancy =
        times.empty() ? 0.0 : 50.0 / static_cast<double>(times.size());
    double lo = std::clamp(std::max(1.5 * median_gap, occupancy), 1e-4, 0.25);
    const double hi = 0.5;
    constexpr int kCount = 8;
    std::vector<double> out(kCount);
    for (int i = 0; i < kCount; ++i) {
        out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (kCount - 1));
    }
    return out;
}

CvResult cv_bandwidth_mean(const FunctionalDataset& data,
                           const std::vector<double>& candidates,
                           std::size_t folds, const Kernel& kernel,
                           const LossSpec& loss, std::uint64_t seed,
                           const std::vector<double>& grid,
                           SubjectWeighting weighting) {
    if (candidates.empty()) {
        throw std::invalid_argument("cv_bandwidth_mean: no candidates");
    }
    const std::size_t n = data.num_subjects();
    const auto fold_idx = make_folds(n, folds, seed);
    const auto gamma = subject_weights(data, weighting);

    CvResult res;
    res.candidates = candidates;
    std::sort(res.candidates.begin(), res.candidates.end());
    res.scores.assign(res.candidates.size(),
                      std::numeric_limits<double>::quiet_NaN());

    // Per-fold training datasets are shared across candidates.
    std::vector<FunctionalDataset> training(folds);
    for (std::size_t k = 0; k < folds; ++k) {
        std::vector<char> keep(n, 1);
        for (auto i : fold_idx[k]) keep[i] = 0;
        training[k] = subset_dataset(data, keep);
    }

    for (std::size_t c = 0; c < res.candidates.size(); ++c) {
        const double h = res.candidates[c];
        double score = 0.0;
        bool valid = true;
        for (std::size_t k = 0; k < folds && valid; ++k) {
            MeanEstimate fit;
            try {
                fit = estimate_mean_curve(training[k], grid, h, kernel, loss,
                                          weighting);
            } catch (const EstimationError&) {
                valid = false;
                break;
            }
            for (auto i : fold_idx[k]) {
                for (const auto& o : data.subjects[i].obs) {
                    score += gamma[i] * loss.rho(o.value - fit(o.time));
                }
            }
        }
        if (valid) res.scores[c] = score;
    }

    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t c = 0; c < res.candidates.size(); ++c) {
        if (std::isnan(res.scores[c])) continue;
        if (!found || res.scores[c] < best) {
            best = res.scores[c];
            res.selected = res.candidates[c];
            found = true;
        }
    }
    if (!found) throw EstimationError("cv_bandwidth_mean: all candidates invalid");
    return res;
}

CvResult cv_kappa(const FunctionalDataset& data,
                  const std::vector<double>& kappa_candidates,
                  std::size_t folds, const Kernel& kernel,
                  const BandwidthRule& h_rule, std::uint64_t seed,
                  const std::vector<double>& grid,
                  SubjectWeighting weighting) {
    if (kappa_candidates.empty()) {
        throw std::invalid_argument("cv_kappa: no candidates");
    }
    const std::size_t n = data.num_subjects();
    const auto fold_idx = make_folds(n, folds, seed);

    std::vector<FunctionalDataset> training(folds);
    for (std::size_t k = 0; k < folds; ++k) {
        std::vector<char> keep(n, 1);
        for (auto i : fold_idx[k]) keep[i] = 0;
        training[k] = subset_dataset(data, keep);
    }

    CvResult res;
    res.candidates = kappa_candidates;
    std::sort(res.candidates.begin(), res.candidates.end());
    res.scores.assign(res.candidates.size(),
                      std::numeric_limits<double>::quiet_NaN());

    for (std::size_t c = 0; c < res.candidates.size(); ++c) {
        const LossSpec loss(LossFamily::LocalSmoothAbs, res.candidates[c]);
        double h;
        if (h_rule.fixed) {
            h = *h_rule.fixed;
        } else {
            const auto& cands = h_rule.candidates.empty()
                                    ? default_bandwidth_candidates(data)
                                    : h_rule.candidates;
            try {
                h = cv_bandwidth_mean(data, cands, folds, kernel, loss, seed,
                                      grid, weighting)
                        .selected;
            } catch (const EstimationError&) {
                continue;
            }
        }
        double score = 0.0;
        bool valid = true;
        for (std::size_t k = 0; k < folds && valid; ++k) {
            MeanEstimate fit;
            try {
                fit = estimate_mean_curve(training[k], grid, h, kernel, loss,
                                          weighting);
            } catch (const EstimationError&) {
                valid = false;
                break;
            }
            for (auto i : fold_idx[k]) {
                for (const auto& o : data.subjects[i].obs) {
                    const double r = o.value - fit(o.time);
                    score += r * r;
                }
            }
        }
        if (valid) res.scores[c] = score;
    }

    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t c = 0; c < res.candidates.size(); ++c) {
        if (std::isnan(res.scores[c])) continue;
        if (!found || res.scores[c] < best) {
            best = res.scores[c];
            res.selected = res.candidates[c];
            found = true;
        }
    }
    if (!found) throw EstimationError("cv_kappa: all candidates invalid");
    return res;
}

}  // namespace rfpca
