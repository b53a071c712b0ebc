#ifndef RFPCA_CORE_COVARIANCE_HPP
#define RFPCA_CORE_COVARIANCE_HPP

#include <cstdint>
#include <vector>

#include "core/dataset.hpp"
#include "core/kernel.hpp"
#include "core/loss.hpp"
#include "core/mean.hpp"

namespace rfpca {

// Robust raw covariance observations psi(X_ij1 - mu_r(T_ij1)) *
// psi(X_ij2 - mu_r(T_ij2)) over all ordered pairs j1 != j2.
struct RawCovariances {
    struct Record {
        std::uint32_t subject;
        double t1;
        double t2;
        double value;
    };
    std::vector<Record> records;        // sorted by t1
    std::vector<std::size_t> pair_count;  // m_i (m_i - 1) per subject
    std::size_t n_subjects = 0;
};

RawCovariances raw_covariances(const FunctionalDataset& data,
                               const MeanEstimate& mean, const LossSpec& loss);

enum class MomentsMode { Analytic, MonteCarlo };

struct McConfig {
    std::size_t samples = 100000;
    std::uint64_t seed = 1;
};

// One-dimensional design-moment factors F_a(s) = E[(T - s)^a K_h(T - s)]
// for a = 0, 1, 2 under a Uniform(0,1) design. The bivariate moments
// factorize by independence: S_ab(s, t) = F_a(s) F_b(t).
struct MomentFactors {
    double f0 = 0.0, f1 = 0.0, f2 = 0.0;
    double se0 = 0.0, se1 = 0.0, se2 = 0.0;  // MC mode only
};

MomentFactors moment_factors(double s, double h, const Kernel& kernel,
                             MomentsMode mode, const McConfig& mc = {});

// Precomputed factors and closed-form weights on a grid.
struct DesignMoments {
    std::vector<double> grid;
    double bandwidth = 0.0;
    MomentsMode mode = MomentsMode::Analytic;
    std::vector<double> f0, f1, f2;

    static DesignMoments compute(const std::vector<double>& grid, double h,
                                 const Kernel& kernel, MomentsMode mode,
                                 const McConfig& mc = {});

    // Closed-form weights (w1, w2, w3) of the local-linear intercept at the
    // node pair (grid[i], grid[j]).
    void weights_at(std::size_t i, std::size_t j, double& w1, double& w2,
                    double& w3) const;
};

struct CovarianceSurface {
    std::vector<double> grid;
    std::vector<double> values;  // row-major G x G, exactly symmetric
    double bandwidth = 0.0;
    std::size_t filled_count = 0;

    double at(std::size_t i, std::size_t j) const {
        return values[i * grid.size() + j];
    }
    // Bilinear interpolation, constant beyond the grid hull.
    double operator()(double s, double t) const;
};

// Closed-form robust covariance surface: per node, w1 R00 + w2 R10 + w3 R01
// with per-subject weights v_i = {n_fit m_i (m_i - 1)}^-1, then symmetrized
// by averaging with the transpose. `subjects` selects the fitting subjects
// (empty = all); weights are normalized to the fitting subset.
CovarianceSurface estimate_cov_surface(const RawCovariances& raw,
                                       const std::vector<double>& grid,
                                       double h, const Kernel& kernel,
                                       const DesignMoments& moments,
                                       const std::vector<char>& subject_mask = {});

struct CovCvResult {
    double selected = 0.0;
    std::vector<double> candidates;
    std::vector<double> scores;
};

// Leave-subjects-out K-fold CV for the covariance bandwidth; candidates are
// filtered to h_C <= h_mu before scoring. Ties break to the smaller h_C.
CovCvResult cv_bandwidth_cov(const RawCovariances& raw,
                             const std::vector<double>& candidates,
                             std::size_t folds, const Kernel& kernel,
                             std::uint64_t seed,
                             const std::vector<double>& grid, double h_mu,
                             MomentsMode mode = MomentsMode::Analytic,
                             const McConfig& mc = {});

}  // namespace rfpca

#endif
