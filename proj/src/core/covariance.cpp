#include "core/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace rfpca {

namespace {

// Composite Simpson on [a, b]; the integrands are smooth piecewise
// polynomials, so a fixed fine partition reaches ~1e-12 accuracy.
template <typename F>
double simpson(F f, double a, double b, int intervals) {
    if (b <= a) return 0.0;
    const double step = (b - a) / intervals;
    double s = f(a) + f(b);
    for (int i = 1; i < intervals; ++i) {
        s += f(a + i * step) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return s * step / 3.0;
}

}  // namespace

RawCovariances raw_covariances(const FunctionalDataset& data,
                               const MeanEstimate& mean, const LossSpec& loss) {
    RawCovariances raw;
    raw.n_subjects = data.num_subjects();
    raw.pair_count.assign(raw.n_subjects, 0);

    std::size_t total = 0;
    for (const auto& s : data.subjects) {
        const std::size_t m = s.obs.size();
        if (m >= 2) total += m * (m - 1);
    }
    raw.records.reserve(total);

    std::vector<double> z;
    for (std::size_t i = 0; i < data.subjects.size(); ++i) {
        const auto& obs = data.subjects[i].obs;
        const std::size_t m = obs.size();
        if (m < 2) continue;
        raw.pair_count[i] = m * (m - 1);
        z.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            z[j] = loss.psi(obs[j].value - mean(obs[j].time));
        }
        for (std::size_t j1 = 0; j1 < m; ++j1) {
            for (std::size_t j2 = 0; j2 < m; ++j2) {
                if (j1 == j2) continue;
                raw.records.push_back({static_cast<std::uint32_t>(i),
                                       obs[j1].time, obs[j2].time,
                                       z[j1] * z[j2]});
            }
        }
    }
    std::sort(raw.records.begin(), raw.records.end(),
              [](const auto& a, const auto& b) { return a.t1 < b.t1; });
    return raw;
}

MomentFactors moment_factors(double s, double h, const Kernel& kernel,
                             MomentsMode mode, const McConfig& mc) {
    if (!(h > 0.0)) throw std::invalid_argument("moment_factors: h must be > 0");
    MomentFactors out;

    if (mode == MomentsMode::Analytic) {
        const double lo = std::max(-1.0, -s / h);
        const double hi = std::min(1.0, (1.0 - s) / h);
        if (hi <= lo) return out;
        auto factor = [&](int a) {
            auto f = [&](double v) {
                return std::pow(v * h, a) * kernel(v);
            };
            // Split at v = 0 where |u|-type kernels lose smoothness.
            constexpr int kIntervals = 1024;
            if (lo < 0.0 && hi > 0.0) {
                return simpson(f, lo, 0.0, kIntervals) +
                       simpson(f, 0.0, hi, kIntervals);
            }
            return simpson(f, lo, hi, kIntervals);
        };
        out.f0 = factor(0);
        out.f1 = factor(1);
        out.f2 = factor(2);
        if (!std::isfinite(out.f0) || !std::isfinite(out.f1) ||
            !std::isfinite(out.f2)) {
            throw NumericError("moment_factors: quadrature failure");
        }
        return out;
    }

    std::mt19937_64 rng(mc.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double s0 = 0, s1 = 0, s2 = 0, q0 = 0, q1 = 0, q2 = 0;
    const std::size_t M = std::max<std::size_t>(mc.samples, 2);
    for (std::size_t i = 0; i < M; ++i) {
        const double d = unif(rng) - s;
        const double k = kernel.scaled(d, h);
        const double v1 = k * d;
        const double v2 = v1 * d;
        s0 += k;
        s1 += v1;
        s2 += v2;
        q0 += k * k;
        q1 += v1 * v1;
        q2 += v2 * v2;
    }
    const double inv = 1.0 / static_cast<double>(M);
    out.f0 = s0 * inv;
    out.f1 = s1 * inv;
    out.f2 = s2 * inv;
    auto se = [&](double sum, double sumsq, double mean) {
        const double var = std::max(0.0, sumsq * inv - mean * mean);
        return std::sqrt(var * inv);
    };
    out.se0 = se(s0, q0, out.f0);
    out.se1 = se(s1, q1, out.f1);
    out.se2 = se(s2, q2, out.f2);
    return out;
}

DesignMoments DesignMoments::compute(const std::vector<double>& grid, double h,
                                     const Kernel& kernel, MomentsMode mode,
                                     const McConfig& mc) {
    DesignMoments dm;
    dm.grid = grid;
    dm.bandwidth = h;
    dm.mode = mode;
    dm.f0.resize(grid.size());
    dm.f1.resize(grid.size());
    dm.f2.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        McConfig node_mc = mc;
        node_mc.seed = mc.seed + i;  // independent stream per node
        const auto f = moment_factors(grid[i], h, kernel, mode, node_mc);
        dm.f0[i] = f.f0;
        dm.f1[i] = f.f1;
        dm.f2[i] = f.f2;
    }
    return dm;
}

void DesignMoments::weights_at(std::size_t i, std::size_t j, double& w1,
                               double& w2, double& w3) const {
    const double s00 = f0[i] * f0[j];
    const double s10 = f1[i] * f0[j];
    const double s01 = f0[i] * f1[j];
    const double s20 = f2[i] * f0[j];
    const double s02 = f0[i] * f2[j];
    const double s11 = f1[i] * f1[j];
    const double big1 = s20 * s02 - s11 * s11;
    const double big2 = -(s10 * s02 - s01 * s11);
    const double big3 = s10 * s11 - s01 * s20;
    const double denom = big1 * s00 + big2 * s10 + big3 * s01;
    if (denom == 0.0 || !std::isfinite(denom)) {
        throw NumericError("design moments: degenerate closed-form denominator");
    }
    w1 = big1 / denom;
    w2 = big2 / denom;
    w3 = big3 / denom;
}

double CovarianceSurface::operator()(double s, double t) const {
    const std::size_t g = grid.size();
    auto locate = [&](double x, std::size_t& lo, double& w) {
        if (x <= grid.front()) {
            lo = 0;
            w = 0.0;
            return;
        }
        if (x >= grid.back()) {
            lo = g - 2;
            w = 1.0;
            return;
        }
        const auto it = std::upper_bound(grid.begin(), grid.end(), x);
        lo = static_cast<std::size_t>(it - grid.begin()) - 1;
        const double span = grid[lo + 1] - grid[lo];
        w = span > 0.0 ? (x - grid[lo]) / span : 0.0;
    };
    std::size_t i, j;
    double wi, wj;
    locate(s, i, wi);
    locate(t, j, wj);
    return (1.0 - wi) * (1.0 - wj) * at(i, j) + wi * (1.0 - wj) * at(i + 1, j) +
           (1.0 - wi) * wj * at(i, j + 1) + wi * wj * at(i + 1, j + 1);
}

CovarianceSurface estimate_cov_surface(const RawCovariances& raw,
                                       const std::vector<double>& grid,
                                       double h, const Kernel& kernel,
                                       const DesignMoments& moments,
                                       const std::vector<char>& subject_mask) {
    if (!(h > 0.0)) throw std::invalid_argument("estimate_cov_surface: h <= 0");
    const std::size_t g = grid.size();

    std::vector<char> mask = subject_mask;
    if (mask.empty()) mask.assign(raw.n_subjects, 1);
    std::size_t n_fit = 0;
    for (auto m : mask) n_fit += (m != 0);
    if (n_fit == 0) throw EstimationError("estimate_cov_surface: empty fit set");

    std::vector<double> vi(raw.n_subjects, 0.0);
    for (std::size_t i = 0; i < raw.n_subjects; ++i) {
        if (mask[i] && raw.pair_count[i] > 0) {
            vi[i] = 1.0 / (static_cast<double>(n_fit) *
                           static_cast<double>(raw.pair_count[i]));
        }
    }

    std::vector<double> r00(g * g, 0.0), r10(g * g, 0.0), r01(g * g, 0.0),
        mass(g * g, 0.0);

    // Records are sorted by t1; nodes within reach of t2 come from a grid
    // range lookup.
    std::vector<double> t1s(raw.records.size());
    for (std::size_t r = 0; r < raw.records.size(); ++r) {
        t1s[r] = raw.records[r].t1;
    }

    for (std::size_t gs = 0; gs < g; ++gs) {
        const double s = grid[gs];
        const auto lo = std::lower_bound(t1s.begin(), t1s.end(), s - h);
        const auto hi = std::upper_bound(t1s.begin(), t1s.end(), s + h);
        double* row00 = r00.data() + gs * g;
        double* row10 = r10.data() + gs * g;
        double* row01 = r01.data() + gs * g;
        double* rowm = mass.data() + gs * g;
        for (auto it = lo; it != hi; ++it) {
            const auto& rec = raw.records[static_cast<std::size_t>(it - t1s.begin())];
            const double w = vi[rec.subject];
            if (w == 0.0) continue;
            const double d1 = rec.t1 - s;
            const double k1 = kernel.scaled(d1, h);
            if (k1 <= 0.0) continue;
            const auto glo = std::lower_bound(grid.begin(), grid.end(), rec.t2 - h);
            const auto ghi = std::upper_bound(grid.begin(), grid.end(), rec.t2 + h);
            for (auto git = glo; git != ghi; ++git) {
                const std::size_t gt = static_cast<std::size_t>(git - grid.begin());
                const double d2 = rec.t2 - *git;
                const double k2 = kernel.scaled(d2, h);
                if (k2 <= 0.0) continue;
                const double kk = k1 * k2;
                const double wv = w * rec.value * kk;
                row00[gt] += wv;
                row10[gt] += wv * d1;
                row01[gt] += wv * d2;
                rowm[gt] += kk;
            }
        }
    }

    CovarianceSurface surf;
    surf.grid = grid;
    surf.bandwidth = h;
    surf.values.assign(g * g, std::numeric_limits<double>::quiet_NaN());

    std::vector<std::pair<std::size_t, std::size_t>> valid_nodes;
    std::vector<std::pair<std::size_t, std::size_t>> flagged;
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < g; ++j) {
            const std::size_t idx = i * g + j;
            if (mass[idx] <= 0.0) {
                flagged.push_back({i, j});
                continue;
            }
            double w1, w2, w3;
            moments.weights_at(i, j, w1, w2, w3);
            surf.values[idx] = w1 * r00[idx] + w2 * r10[idx] + w3 * r01[idx];
            valid_nodes.push_back({i, j});
        }
    }
    if (valid_nodes.empty()) {
        throw EstimationError("estimate_cov_surface: no node has kernel mass");
    }
    surf.filled_count = flagged.size();
    for (const auto& [i, j] : flagged) {
        double best = std::numeric_limits<double>::infinity();
        double fill = 0.0;
        for (const auto& [vi_, vj_] : valid_nodes) {
            const double di = static_cast<double>(vi_) - static_cast<double>(i);
            const double dj = static_cast<double>(vj_) - static_cast<double>(j);
            const double d = di * di + dj * dj;
            if (d < best) {
                best = d;
                fill = surf.values[vi_ * g + vj_];
            }
        }
        surf.values[i * g + j] = fill;
    }

    // Eq. (12) is not exactly symmetric in (s, t); average with the transpose.
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = i + 1; j < g; ++j) {
            const double v = 0.5 * (surf.values[i * g + j] + surf.values[j * g + i]);
            surf.values[i * g + j] = v;
            surf.values[j * g + i] = v;
        }
    }
    return surf;
}

CovCvResult cv_bandwidth_cov(const RawCovariances& raw,
                             const std::vector<double>& candidates,
                             std::size_t folds, const Kernel& kernel,
                             std::uint64_t seed,
                             const std::vector<double>& grid, double h_mu,
                             MomentsMode mode, const McConfig& mc) {
    if (candidates.empty()) {
        throw std::invalid_argument("cv_bandwidth_cov: no candidates");
    }
    std::vector<double> cands;
    for (double h : candidates) {
        if (h <= h_mu * (1.0 + 1e-12)) cands.push_back(h);
    }
    if (cands.empty()) {
        // Theorem-driven filter h_C <= h_mu removed everything; fall back to
        // the smallest candidate.
        cands.push_back(*std::min_element(candidates.begin(), candidates.end()));
    }
    std::sort(cands.begin(), cands.end());

    const std::size_t n = raw.n_subjects;
    const auto fold_idx = make_folds(n, folds, seed);

    // Validation weights use the full-sample normalization.
    std::vector<double> vi(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (raw.pair_count[i] > 0) {
            vi[i] = 1.0 / (static_cast<double>(n) *
                           static_cast<double>(raw.pair_count[i]));
        }
    }
    std::vector<std::vector<std::size_t>> by_subject(n);
    for (std::size_t r = 0; r < raw.records.size(); ++r) {
        by_subject[raw.records[r].subject].push_back(r);
    }

    CovCvResult res;
    res.candidates = cands;
    res.scores.assign(cands.size(), std::numeric_limits<double>::quiet_NaN());

    for (std::size_t c = 0; c < cands.size(); ++c) {
        const double h = cands[c];
        DesignMoments moments = DesignMoments::compute(grid, h, kernel, mode, mc);
        double score = 0.0;
        bool valid = true;
        for (std::size_t k = 0; k < folds && valid; ++k) {
            std::vector<char> train(n, 1);
            for (auto i : fold_idx[k]) train[i] = 0;
            CovarianceSurface surf;
            try {
                surf = estimate_cov_surface(raw, grid, h, kernel, moments, train);
            } catch (const EstimationError&) {
                valid = false;
                break;
            }
            for (auto i : fold_idx[k]) {
                for (auto r : by_subject[i]) {
                    const auto& rec = raw.records[r];
                    const double e = rec.value - surf(rec.t1, rec.t2);
                    score += vi[i] * e * e;
                }
            }
        }
        if (valid) res.scores[c] = score;
    }

    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t c = 0; c < cands.size(); ++c) {
        if (std::isnan(res.scores[c])) continue;
        if (!found || res.scores[c] < best) {
            best = res.scores[c];
            res.selected = cands[c];
            found = true;
        }
    }
    if (!found) throw EstimationError("cv_bandwidth_cov: all candidates invalid");
    return res;
}

}  // namespace rfpca
