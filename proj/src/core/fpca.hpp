#ifndef RFPCA_CORE_FPCA_HPP
#define RFPCA_CORE_FPCA_HPP

#include <vector>

#include "core/covariance.hpp"
#include "core/dataset.hpp"
#include "core/loss.hpp"
#include "core/mean.hpp"

namespace rfpca {

// Truncation rule: smallest K with FVE >= threshold, capped at max_components.
struct TruncationRule {
    double fve_threshold = 0.95;
    std::size_t max_components = 20;
};

struct EigenSystem {
    std::vector<double> grid;
    std::vector<double> quad_weights;       // trapezoidal
    std::vector<double> eigenvalues;        // descending, positive
    std::vector<std::vector<double>> eigenfunctions;  // per component, on grid
    double total_positive_mass = 0.0;       // sum of all positive eigenvalues

    std::size_t retained() const { return eigenvalues.size(); }
    double eigenfunction_at(std::size_t k, double t) const {
        return interp_linear(grid, eigenfunctions[k], t);
    }
};

// Quadrature-discretized operator eigenproblem: with D = diag(quad weights),
// the symmetric eigen-decomposition of D^{1/2} C D^{1/2}; eigenfunctions are
// D^{-1/2} times the unit eigenvectors, orthonormal in the weighted inner
// product. Non-positive eigenvalues (below 1e-12 lambda_1) are dropped.
// Sign convention: each eigenfunction is positive at the grid point where
// |phi| attains its maximum (ties to the earliest point).
EigenSystem eigen_decompose(const CovarianceSurface& surface,
                            const TruncationRule& rule);

struct ScoreMatrix {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<double> values;  // row-major n x k

    double at(std::size_t i, std::size_t comp) const { return values[i * k + comp]; }
};

// xi_ik = (1/m_i) sum_j psi(X_ij - mu_r(T_ij)) phi_k(T_ij)
ScoreMatrix estimate_scores(const FunctionalDataset& data,
                            const MeanEstimate& mean, const EigenSystem& eig,
                            const LossSpec& loss, std::size_t k);

// X^K_i(t) = mu_r(t) + psi^-1(sum_k xi_ik phi_k(t)); one curve per subject
// on eval_grid, row-major n x |eval_grid|.
std::vector<double> reconstruct(const MeanEstimate& mean, const EigenSystem& eig,
                                const ScoreMatrix& scores, std::size_t k,
                                const LossSpec& loss,
                                const std::vector<double>& eval_grid,
                                ClampCounter* clamps = nullptr);

double fraction_of_variance(const EigenSystem& eig, std::size_t k);

}  // namespace rfpca

#endif
