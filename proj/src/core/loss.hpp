#ifndef RFPCA_CORE_LOSS_HPP
#define RFPCA_CORE_LOSS_HPP

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rfpca {

enum class LossFamily {
    Square,          // rho(x) = x^2
    LocalSmoothAbs,  // |x| outside [-kappa, kappa], quartic inside
    LogCosh,         // log(cosh(x))
    ArctanIntegral   // (2/pi) x arctan(x) - (1/pi) log(1 + x^2)
};

LossFamily loss_family_from_string(const std::string& name);
std::string to_string(LossFamily family);

// Counts psi_inverse inputs that fell outside the attainable range of psi
// and had to be clamped.
struct ClampCounter {
    std::atomic<std::uint64_t> events{0};
};

// A robust loss rho together with its rescaling function psi = rho',
// the derivative psi' and the (generalized) inverse of psi.
//
// The quartic branch of the local-smooth-abs family is normalized by
// 8*kappa^3 so that rho and psi are continuous at x = +-kappa
// (rho(kappa) = kappa, psi(kappa) = 1) for every kappa > 0.
class LossSpec {
  public:
    explicit LossSpec(LossFamily family, double kappa = 1.0);

    LossFamily family() const { return family_; }
    double kappa() const { return kappa_; }

    // True for families with |psi| <= 1 (all but square).
    bool bounded_psi() const { return family_ != LossFamily::Square; }

    double rho(double x) const;
    double psi(double x) const;
    double psi_prime(double x) const;

    // Generalized inverse inf{s : psi(s) >= y}. Out-of-range y is clamped
    // into the attainable range; if `clamps` is given, each clamp event is
    // counted there.
    double psi_inverse(double y, ClampCounter* clamps = nullptr) const;

    // Clamp half-width for the bounded-range inverses (atanh/tan stay finite).
    static constexpr double kInverseClamp = 1e-6;

  private:
    LossFamily family_;
    double kappa_;
};

}  // namespace rfpca

#endif
