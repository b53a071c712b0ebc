#include "core/fpca.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace rfpca {

EigenSystem eigen_decompose(const CovarianceSurface& surface,
                            const TruncationRule& rule) {
    const std::size_t g = surface.grid.size();
    if (g < 3) throw std::invalid_argument("eigen_decompose: grid too small");
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = i + 1; j < g; ++j) {
            if (surface.at(i, j) != surface.at(j, i)) {
                throw std::invalid_argument("eigen_decompose: surface not symmetric");
            }
        }
    }

    EigenSystem eig;
    eig.grid = surface.grid;
    eig.quad_weights = trapezoid_weights(surface.grid);

    Eigen::VectorXd sqrt_w(g), inv_sqrt_w(g);
    for (std::size_t i = 0; i < g; ++i) {
        sqrt_w[static_cast<Eigen::Index>(i)] = std::sqrt(eig.quad_weights[i]);
        inv_sqrt_w[static_cast<Eigen::Index>(i)] =
            1.0 / sqrt_w[static_cast<Eigen::Index>(i)];
    }

    Eigen::MatrixXd a(g, g);
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < g; ++j) {
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                sqrt_w[static_cast<Eigen::Index>(i)] * surface.at(i, j) *
                sqrt_w[static_cast<Eigen::Index>(j)];
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success) {
        throw NumericError("eigen_decompose: solver did not converge");
    }

    const Eigen::VectorXd& vals = solver.eigenvalues();  // ascending
    const double lambda_max = vals[vals.size() - 1];
    const double floor = std::max(0.0, 1e-12 * lambda_max);

    double total = 0.0;
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
        if (vals[i] > floor) total += vals[i];
    }
    eig.total_positive_mass = total;
    if (total <= 0.0) return eig;  // zero surface: nothing retained

    const std::size_t cap = std::min(rule.max_components, g - 1);
    double mass = 0.0;
    for (Eigen::Index r = vals.size() - 1; r >= 0; --r) {
        const double lambda = vals[r];
        if (lambda <= floor) break;
        if (eig.eigenvalues.size() >= cap) break;

        Eigen::VectorXd phi = solver.eigenvectors().col(r);
        std::vector<double> fn(g);
        for (std::size_t i = 0; i < g; ++i) {
            fn[i] = phi[static_cast<Eigen::Index>(i)] *
                    inv_sqrt_w[static_cast<Eigen::Index>(i)];
        }
        // Deterministic sign: positive at the arg-max of |phi|.
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < g; ++i) {
            if (std::fabs(fn[i]) > best) {
                best = std::fabs(fn[i]);
                arg = i;
            }
        }
        if (fn[arg] < 0.0) {
            for (auto& v : fn) v = -v;
        }

        eig.eigenvalues.push_back(lambda);
        eig.eigenfunctions.push_back(std::move(fn));
        mass += lambda;
        if (mass / total >= rule.fve_threshold) break;
    }
    return eig;
}

ScoreMatrix estimate_scores(const FunctionalDataset& data,
                            const MeanEstimate& mean, const EigenSystem& eig,
                            const LossSpec& loss, std::size_t k) {
    if (k > eig.retained()) {
        throw std::invalid_argument("estimate_scores: K exceeds retained components");
    }
    ScoreMatrix scores;
    scores.n = data.num_subjects();
    scores.k = k;
    scores.values.assign(scores.n * k, 0.0);

    for (std::size_t i = 0; i < scores.n; ++i) {
        const auto& obs = data.subjects[i].obs;
        const double inv_m = 1.0 / static_cast<double>(obs.size());
        for (const auto& o : obs) {
            const double z = loss.psi(o.value - mean(o.time));
            for (std::size_t comp = 0; comp < k; ++comp) {
                scores.values[i * k + comp] +=
                    z * eig.eigenfunction_at(comp, o.time);
            }
        }
        for (std::size_t comp = 0; comp < k; ++comp) {
            scores.values[i * k + comp] *= inv_m;
        }
    }
    return scores;
}

std::vector<double> reconstruct(const MeanEstimate& mean, const EigenSystem& eig,
                                const ScoreMatrix& scores, std::size_t k,
                                const LossSpec& loss,
                                const std::vector<double>& eval_grid,
                                ClampCounter* clamps) {
    if (k > eig.retained() || k > scores.k) {
        throw std::invalid_argument("reconstruct: K exceeds available components");
    }
    std::vector<double> out(scores.n * eval_grid.size());
    for (std::size_t i = 0; i < scores.n; ++i) {
        for (std::size_t g = 0; g < eval_grid.size(); ++g) {
            const double t = eval_grid[g];
            double sum = 0.0;
            for (std::size_t comp = 0; comp < k; ++comp) {
                sum += scores.at(i, comp) * eig.eigenfunction_at(comp, t);
            }
            out[i * eval_grid.size() + g] = mean(t) + loss.psi_inverse(sum, clamps);
        }
    }
    return out;
}

double fraction_of_variance(const EigenSystem& eig, std::size_t k) {
    if (k > eig.retained()) {
        throw std::invalid_argument("fraction_of_variance: K exceeds retained");
    }
    double retained_sum = 0.0;
    for (double l : eig.eigenvalues) retained_sum += l;
    if (retained_sum <= 0.0) return 0.0;
    double mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) mass += eig.eigenvalues[i];
    return mass / retained_sum;
}

}  // namespace rfpca
