#ifndef RFPCA_CORE_DATASET_HPP
#define RFPCA_CORE_DATASET_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfpca {

struct SingularDesignError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EstimationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Observation {
    double time;
    double value;
};

struct Subject {
    std::string id;
    std::vector<Observation> obs;
};

// Discretely observed functional data {(T_ij, X_ij)} on [0, 1].
struct FunctionalDataset {
    std::vector<Subject> subjects;

    std::size_t num_subjects() const { return subjects.size(); }

    std::size_t num_observations() const {
        std::size_t total = 0;
        for (const auto& s : subjects) total += s.obs.size();
        return total;
    }

    void validate() const {
        if (subjects.empty()) {
            throw std::invalid_argument("dataset: no subjects");
        }
        for (const auto& s : subjects) {
            if (s.obs.empty()) {
                throw std::invalid_argument("dataset: subject with no observations");
            }
            for (const auto& o : s.obs) {
                if (!(o.time >= 0.0 && o.time <= 1.0)) {
                    throw std::invalid_argument("dataset: time outside [0, 1]");
                }
                if (!std::isfinite(o.value)) {
                    throw std::invalid_argument("dataset: non-finite value");
                }
            }
        }
    }
};

// Per-subject weight: equal-subject gives gamma_i = 1/(n m_i), equal-observation
// gives 1/N_total.
enum class SubjectWeighting { EqualSubject, EqualObservation };

inline std::vector<double> subject_weights(const FunctionalDataset& data,
                                           SubjectWeighting scheme) {
    const std::size_t n = data.num_subjects();
    std::vector<double> gamma(n);
    if (scheme == SubjectWeighting::EqualSubject) {
        for (std::size_t i = 0; i < n; ++i) {
            gamma[i] = 1.0 / (static_cast<double>(n) *
                              static_cast<double>(data.subjects[i].obs.size()));
        }
    } else {
        const double total = static_cast<double>(data.num_observations());
        for (std::size_t i = 0; i < n; ++i) gamma[i] = 1.0 / total;
    }
    return gamma;
}

// Equispaced grid on [0, 1] with `size` points (first 0, last 1).
inline std::vector<double> uniform_grid(std::size_t size) {
    if (size < 2) throw std::invalid_argument("grid needs at least 2 points");
    std::vector<double> g(size);
    for (std::size_t i = 0; i < size; ++i) {
        g[i] = static_cast<double>(i) / static_cast<double>(size - 1);
    }
    g.back() = 1.0;
    return g;
}

// Linear interpolation of tabulated values on a strictly increasing grid;
// constant extrapolation outside.
double interp_linear(const std::vector<double>& grid,
                     const std::vector<double>& values, double t);

// Trapezoidal quadrature weights for a (not necessarily uniform) grid.
std::vector<double> trapezoid_weights(const std::vector<double>& grid);

}  // namespace rfpca

#endif
