#ifndef RFPCA_CORE_MEAN_HPP
#define RFPCA_CORE_MEAN_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "core/dataset.hpp"
#include "core/kernel.hpp"
#include "core/loss.hpp"

namespace rfpca {

// Pooled, time-sorted view of a dataset; built once and reused across grid
// points and cross-validation candidates.
struct PooledData {
    std::vector<double> time;      // sorted ascending
    std::vector<double> value;
    std::vector<double> gamma;     // per-observation subject weight
    std::vector<std::uint32_t> subject;

    static PooledData build(const FunctionalDataset& data,
                            SubjectWeighting weighting);
};

// Per-observation local-linear weights at a query point.
struct LocalWeights {
    struct Entry {
        std::uint32_t subject;
        double gamma;       // subject weight gamma_i
        double omega;       // local extension multiplier omega_hat
        double time;
        double value;
    };
    std::vector<Entry> entries;
    double sigma0_sq = 0.0;
};

struct MeanEstimate {
    std::vector<double> grid;
    std::vector<double> values;
    double bandwidth = 0.0;
    LossSpec loss{LossFamily::Square};
    std::vector<std::uint8_t> filled;  // 1 where a singular node was filled

    double operator()(double t) const { return interp_linear(grid, values, t); }
    std::size_t filled_count() const;
};

// omega_hat(T_ij, t, h) = sigma0^-2 K_h(T_ij - t) [u2_hat - u1_hat (T_ij - t)]
// for the observations with nonzero kernel weight. Throws SingularDesignError
// when sigma0^2 = u0 u2 - u1^2 falls below 1e-12 h^4.
LocalWeights local_weights(const PooledData& pooled, double t, double h,
                           const Kernel& kernel);
LocalWeights local_weights(const FunctionalDataset& data, double t, double h,
                           const Kernel& kernel,
                           SubjectWeighting weighting = SubjectWeighting::EqualSubject);

// Minimizes M(beta) = sum_ij gamma_i omega_ij rho(X_ij - beta) over
// [min X - R, max X + R]. Square loss uses the closed-form weighted average;
// otherwise a 201-point grid scan followed by golden-section refinement
// (the omega weights may be negative, so M need not be convex).
double minimize_weighted_loss(const LocalWeights& weights, const LossSpec& loss);

double estimate_mean_at(const PooledData& pooled, double t, double h,
                        const Kernel& kernel, const LossSpec& loss);
double estimate_mean_at(const FunctionalDataset& data, double t, double h,
                        const Kernel& kernel, const LossSpec& loss,
                        SubjectWeighting weighting = SubjectWeighting::EqualSubject);

MeanEstimate estimate_mean_curve(const FunctionalDataset& data,
                                 const std::vector<double>& grid, double h,
                                 const Kernel& kernel, const LossSpec& loss,
                                 SubjectWeighting weighting = SubjectWeighting::EqualSubject);

// Seeded, as-even-as-possible split of subjects 0..n-1 into K folds.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k,
                                                 std::uint64_t seed);

// 8 log-spaced bandwidths between 1.5x the median gap of the pooled sorted
// times and 0.5.
std::vector<double> default_bandwidth_candidates(const FunctionalDataset& data);

struct CvResult {
    double selected = 0.0;
    std::vector<double> candidates;
    std::vector<double> scores;  // NaN for invalid candidates
};

// Leave-subjects-out K-fold CV for the mean bandwidth, scored with the
// robust loss itself. Ties break to the smaller bandwidth.
CvResult cv_bandwidth_mean(const FunctionalDataset& data,
                           const std::vector<double>& candidates,
                           std::size_t folds, const Kernel& kernel,
                           const LossSpec& loss, std::uint64_t seed,
                           const std::vector<double>& grid,
                           SubjectWeighting weighting = SubjectWeighting::EqualSubject);

// Bandwidth rule for the per-kappa mean fits inside kappa selection:
// either a fixed bandwidth or CV over a candidate list.
struct BandwidthRule {
    std::optional<double> fixed;
    std::vector<double> candidates;  // used when fixed is unset
};

// Hyper-parameter selection for the local-smooth-abs family: same fold
// mechanics as cv_bandwidth_mean but scored with squared error.
CvResult cv_kappa(const FunctionalDataset& data,
                  const std::vector<double>& kappa_candidates,
                  std::size_t folds, const Kernel& kernel,
                  const BandwidthRule& h_rule, std::uint64_t seed,
                  const std::vector<double>& grid,
                  SubjectWeighting weighting = SubjectWeighting::EqualSubject);

}  // namespace rfpca

#endif
