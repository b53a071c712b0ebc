#include "core/loss.hpp"

#include <algorithm>
#include <cmath>

namespace rfpca {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_finite(double x) {
    if (!std::isfinite(x)) {
        throw std::domain_error("loss: non-finite argument");
    }
}

// log(cosh(x)) without overflow: |x| + log1p(exp(-2|x|)) - log(2).
double log_cosh(double x) {
    const double a = std::fabs(x);
    return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453;
}

}  // namespace

LossFamily loss_family_from_string(const std::string& name) {
    if (name == "square") return LossFamily::Square;
    if (name == "local-smooth-abs") return LossFamily::LocalSmoothAbs;
    if (name == "log-cosh") return LossFamily::LogCosh;
    if (name == "arctan-integral") return LossFamily::ArctanIntegral;
    throw std::invalid_argument("unknown loss family: " + name);
}

std::string to_string(LossFamily family) {
    switch (family) {
        case LossFamily::Square: return "square";
        case LossFamily::LocalSmoothAbs: return "local-smooth-abs";
        case LossFamily::LogCosh: return "log-cosh";
        case LossFamily::ArctanIntegral: return "arctan-integral";
    }
    return "?";
}

LossSpec::LossSpec(LossFamily family, double kappa)
    : family_(family), kappa_(kappa) {
    if (family_ == LossFamily::LocalSmoothAbs &&
        !(std::isfinite(kappa_) && kappa_ > 0.0)) {
        throw std::invalid_argument("local-smooth-abs requires kappa > 0");
    }
}

double LossSpec::rho(double x) const {
    check_finite(x);
    switch (family_) {
        case LossFamily::Square:
            return x * x;
        case LossFamily::LocalSmoothAbs: {
            const double a = std::fabs(x);
            if (a > kappa_) return a;
            const double x2 = x * x;
            const double k2 = kappa_ * kappa_;
            return (-x2 * x2 + 6.0 * k2 * x2 + 3.0 * k2 * k2) /
                   (8.0 * k2 * kappa_);
        }
        case LossFamily::LogCosh:
            return log_cosh(x);
        case LossFamily::ArctanIntegral:
            return (2.0 / kPi) * x * std::atan(x) -
                   std::log1p(x * x) / kPi;
    }
    return 0.0;
}

double LossSpec::psi(double x) const {
    check_finite(x);
    switch (family_) {
        case LossFamily::Square:
            return 2.0 * x;
        case LossFamily::LocalSmoothAbs: {
            if (x > kappa_) return 1.0;
            if (x < -kappa_) return -1.0;
            const double k2 = kappa_ * kappa_;
            return (-x * x * x + 3.0 * k2 * x) / (2.0 * k2 * kappa_);
        }
        case LossFamily::LogCosh:
            return std::tanh(x);
        case LossFamily::ArctanIntegral:
            return (2.0 / kPi) * std::atan(x);
    }
    return 0.0;
}

double LossSpec::psi_prime(double x) const {
    check_finite(x);
    switch (family_) {
        case LossFamily::Square:
            return 2.0;
        case LossFamily::LocalSmoothAbs: {
            if (std::fabs(x) > kappa_) return 0.0;
            const double k2 = kappa_ * kappa_;
            return 3.0 * (k2 - x * x) / (2.0 * k2 * kappa_);
        }
        case LossFamily::LogCosh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case LossFamily::ArctanIntegral:
            return (2.0 / kPi) / (1.0 + x * x);
    }
    return 0.0;
}

double LossSpec::psi_inverse(double y, ClampCounter* clamps) const {
    check_finite(y);
    switch (family_) {
        case LossFamily::Square:
            return y / 2.0;
        case LossFamily::LocalSmoothAbs: {
            double z = y;
            if (z < -1.0 || z > 1.0) {
                if (clamps) clamps->events.fetch_add(1, std::memory_order_relaxed);
                z = std::clamp(z, -1.0, 1.0);
            }
            if (z >= 1.0) return kappa_;
            if (z <= -1.0) return -kappa_;
            // Middle root of s^3 - 3 kappa^2 s + 2 kappa^3 z = 0 in [-k, k].
            const double phi = (std::acos(-z) + 4.0 * kPi) / 3.0;
            return 2.0 * kappa_ * std::cos(phi);
        }
        case LossFamily::LogCosh: {
            double z = y;
            const double lim = 1.0 - kInverseClamp;
            if (z < -lim || z > lim) {
                if (clamps) clamps->events.fetch_add(1, std::memory_order_relaxed);
                z = std::clamp(z, -lim, lim);
            }
            return std::atanh(z);
        }
        case LossFamily::ArctanIntegral: {
            double z = y;
            const double lim = 1.0 - kInverseClamp;
            if (z < -lim || z > lim) {
                if (clamps) clamps->events.fetch_add(1, std::memory_order_relaxed);
                z = std::clamp(z, -lim, lim);
            }
            return std::tan(kPi * z / 2.0);
        }
    }
    return 0.0;
}

}  // namespace rfpca
