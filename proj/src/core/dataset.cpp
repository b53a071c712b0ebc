#include "core/dataset.hpp"

#include <algorithm>

namespace rfpca {

double interp_linear(const std::vector<double>& grid,
                     const std::vector<double>& values, double t) {
    if (grid.size() != values.size() || grid.empty()) {
        throw std::invalid_argument("interp_linear: size mismatch");
    }
    if (t <= grid.front()) return values.front();
    if (t >= grid.back()) return values.back();
    const auto it = std::upper_bound(grid.begin(), grid.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - grid.begin());
    const std::size_t lo = hi - 1;
    const double span = grid[hi] - grid[lo];
    if (span <= 0.0) return values[lo];
    const double w = (t - grid[lo]) / span;
    return (1.0 - w) * values[lo] + w * values[hi];
}

std::vector<double> trapezoid_weights(const std::vector<double>& grid) {
    const std::size_t g = grid.size();
    if (g < 2) throw std::invalid_argument("trapezoid_weights: grid too small");
    std::vector<double> w(g, 0.0);
    for (std::size_t i = 0; i + 1 < g; ++i) {
        const double half = 0.5 * (grid[i + 1] - grid[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    return w;
}

}  // namespace rfpca
