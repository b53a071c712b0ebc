#ifndef RFPCA_CORE_KERNEL_HPP
#define RFPCA_CORE_KERNEL_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace rfpca {

// Symmetric probability-density kernels supported on [-1, 1].
enum class KernelFamily {
    Tricube,       // (70/81) (1 - |u|^3)^3
    Epanechnikov   // 0.75 (1 - u^2)
};

inline KernelFamily kernel_family_from_string(const std::string& name) {
    if (name == "tricube") return KernelFamily::Tricube;
    if (name == "epanechnikov") return KernelFamily::Epanechnikov;
    throw std::invalid_argument("unknown kernel family: " + name);
}

inline std::string to_string(KernelFamily family) {
    return family == KernelFamily::Tricube ? "tricube" : "epanechnikov";
}

class Kernel {
  public:
    explicit Kernel(KernelFamily family = KernelFamily::Tricube)
        : family_(family) {}

    KernelFamily family() const { return family_; }

    double operator()(double u) const {
        const double a = std::fabs(u);
        if (a >= 1.0) return 0.0;
        if (family_ == KernelFamily::Tricube) {
            const double t = 1.0 - a * a * a;
            return (70.0 / 81.0) * t * t * t;
        }
        return 0.75 * (1.0 - u * u);
    }

    // K_h(u) = K(u/h) / h
    double scaled(double u, double h) const { return (*this)(u / h) / h; }

  private:
    KernelFamily family_;
};

}  // namespace rfpca

#endif
