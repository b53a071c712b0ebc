#ifndef RFPCA_CORE_PIPELINE_HPP
#define RFPCA_CORE_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "core/covariance.hpp"
#include "core/dataset.hpp"
#include "core/fpca.hpp"
#include "core/kernel.hpp"
#include "core/loss.hpp"
#include "core/mean.hpp"

namespace rfpca {

struct FitConfig {
    LossSpec loss{LossFamily::LogCosh};
    bool tune_kappa = false;
    std::vector<double> kappa_candidates{1e-3, 1e-2, 1e-1, 1.0};
    KernelFamily kernel = KernelFamily::Tricube;
    std::size_t grid_size = 101;
    std::size_t folds = 2;
    std::uint64_t seed = 1;
    bool split_sample = false;
    bool cv_refit_mean = false;  // refit the mean inside covariance CV folds
    SubjectWeighting weighting = SubjectWeighting::EqualSubject;
    MomentsMode moments_mode = MomentsMode::Analytic;
    McConfig moments_mc{};
    std::vector<double> mean_bw_candidates;  // empty = data-driven default
    std::vector<double> cov_bw_candidates;   // empty = mean candidates
    TruncationRule truncation{};
};

struct FitResult {
    std::vector<double> grid;
    MeanEstimate mean;
    CovarianceSurface covariance;
    EigenSystem eigen;
    ScoreMatrix scores;
    LossSpec loss{LossFamily::LogCosh};
    double selected_h_mu = 0.0;
    double selected_h_cov = 0.0;
    std::optional<double> selected_kappa;
    CvResult mean_cv;
    CovCvResult cov_cv;
    std::optional<CvResult> kappa_cv;
    bool split_sample = false;
    std::uint64_t clamp_events = 0;
};

// Full pipeline: (optional kappa CV) -> mean bandwidth CV -> mean curve ->
// raw covariances -> covariance bandwidth CV -> surface -> eigen -> scores.
// With split_sample, subjects 1..floor(n/2) fit the mean and the rest fit
// the covariance (Remark-style deterministic split, no shuffling).
FitResult fit_pipeline(const FunctionalDataset& data, const FitConfig& config);

// Mean from the first half of the subjects, covariance from the second half.
// Requires n >= 4.
std::pair<MeanEstimate, CovarianceSurface> split_sample_fit(
    const FunctionalDataset& data, const FitConfig& config);

}  // namespace rfpca

#endif
