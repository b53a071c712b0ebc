#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "core/loss.hpp"

using rfpca::ClampCounter;
using rfpca::LossFamily;
using rfpca::LossSpec;

namespace {
const std::vector<LossFamily> kAll = {
    LossFamily::Square, LossFamily::LocalSmoothAbs, LossFamily::LogCosh,
    LossFamily::ArctanIntegral};
const std::vector<LossFamily> kBounded = {
    LossFamily::LocalSmoothAbs, LossFamily::LogCosh, LossFamily::ArctanIntegral};
}  // namespace

TEST_CASE("rho pointwise values") {
    CHECK(LossSpec(LossFamily::Square).rho(3.0) == doctest::Approx(9.0));
    CHECK(LossSpec(LossFamily::LocalSmoothAbs, 1.0).rho(2.0) == doctest::Approx(2.0));
    // continuity at x = kappa forces rho(kappa) = kappa:
    // (-k^4 + 6k^4 + 3k^4) / (8k^3) = k
    CHECK(LossSpec(LossFamily::LocalSmoothAbs, 1.0).rho(1.0) ==
          doctest::Approx((-1.0 + 6.0 + 3.0) / 8.0));
    CHECK(LossSpec(LossFamily::LogCosh).rho(10.0) ==
          doctest::Approx(10.0 - std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("psi pointwise values") {
    CHECK(LossSpec(LossFamily::LogCosh).psi(0.0) == 0.0);
    // C1 matching at kappa: (-1 + 3) / 2 = 1
    CHECK(LossSpec(LossFamily::LocalSmoothAbs, 1.0).psi(1.0) == doctest::Approx(1.0));
    CHECK(LossSpec(LossFamily::ArctanIntegral).psi(1.0) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(LossSpec(LossFamily::Square).psi(3.0) == doctest::Approx(6.0));
}

TEST_CASE("psi_prime pointwise values") {
    CHECK(LossSpec(LossFamily::LogCosh).psi_prime(0.0) == doctest::Approx(1.0));
    CHECK(LossSpec(LossFamily::LocalSmoothAbs, 1.0).psi_prime(1.0) ==
          doctest::Approx(0.0));
    CHECK(LossSpec(LossFamily::LocalSmoothAbs, 1.0).psi_prime(-1.0) ==
          doctest::Approx(0.0));
    CHECK(LossSpec(LossFamily::Square).psi_prime(7.0) == doctest::Approx(2.0));
}

TEST_CASE("psi_inverse pointwise values") {
    CHECK(LossSpec(LossFamily::LogCosh).psi_inverse(0.0) == 0.0);
    CHECK(LossSpec(LossFamily::LogCosh).psi_inverse(std::tanh(0.7)) ==
          doctest::Approx(0.7).epsilon(1e-10));
    // inf of the level set {s : psi(s) >= 1} = [kappa, inf)
    CHECK(LossSpec(LossFamily::LocalSmoothAbs, 1.0).psi_inverse(1.0) ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(LossSpec(LossFamily::Square).psi_inverse(3.0) == doctest::Approx(1.5));
}

TEST_CASE("round trip psi_inverse(psi(x)) = x") {
    for (double x = -5.0; x <= 5.0; x += 0.05) {
        CHECK(std::fabs(LossSpec(LossFamily::LogCosh)
                            .psi_inverse(LossSpec(LossFamily::LogCosh).psi(x)) -
                        x) < 1e-8);
        CHECK(std::fabs(
                  LossSpec(LossFamily::ArctanIntegral)
                      .psi_inverse(LossSpec(LossFamily::ArctanIntegral).psi(x)) -
                  x) < 1e-8);
    }
    for (double kappa : {0.25, 1.0, 2.5}) {
        const LossSpec loss(LossFamily::LocalSmoothAbs, kappa);
        for (double u = -1.0; u <= 1.0; u += 0.01) {
            const double x = u * kappa;
            CHECK(std::fabs(loss.psi_inverse(loss.psi(x)) - x) < 1e-8);
        }
    }
}

TEST_CASE("local-smooth-abs branches agree at kappa to 1e-12") {
    for (double kappa : {1e-3, 1e-2, 0.5, 1.0, 3.0}) {
        const LossSpec loss(LossFamily::LocalSmoothAbs, kappa);
        // inner branch evaluated at x = kappa vs outer values |x| and sign(x)
        const double rho_inner =
            (-std::pow(kappa, 4) + 6.0 * kappa * kappa * kappa * kappa +
             3.0 * std::pow(kappa, 4)) /
            (8.0 * kappa * kappa * kappa);
        CHECK(std::fabs(rho_inner - kappa) < 1e-12 * std::max(1.0, kappa));
        CHECK(std::fabs(loss.rho(kappa) - kappa) < 1e-12 * std::max(1.0, kappa));
        CHECK(std::fabs(loss.psi(kappa) - 1.0) < 1e-12);
        CHECK(std::fabs(loss.psi(-kappa) + 1.0) < 1e-12);
        // C1 continuity: psi from both sides
        const double d = 1e-9 * std::max(1.0, kappa);
        CHECK(std::fabs(loss.psi(kappa + d) - loss.psi(kappa - d)) < 1e-7);
    }
}

TEST_CASE("finite differences: rho' = psi and psi' = psi_prime") {
    const double step = 1e-5;
    for (LossFamily family : kAll) {
        const LossSpec loss(family, 1.0);
        for (double x = -4.0; x <= 4.0; x += 0.137) {  // grid avoids |x| = 1
            const double drho =
                (loss.rho(x + step) - loss.rho(x - step)) / (2.0 * step);
            CHECK(std::fabs(drho - loss.psi(x)) < 1e-6 * std::max(1.0, std::fabs(x)));
            const double dpsi =
                (loss.psi(x + step) - loss.psi(x - step)) / (2.0 * step);
            CHECK(std::fabs(dpsi - loss.psi_prime(x)) < 1e-6);
        }
    }
}

TEST_CASE("evenness of rho, oddness and boundedness of psi") {
    for (LossFamily family : kAll) {
        const LossSpec loss(family, 1.0);
        if (family == LossFamily::LocalSmoothAbs) {
            CHECK(loss.rho(0.0) == doctest::Approx(3.0 / 8.0));  // 3k/8 at k=1
        } else {
            CHECK(loss.rho(0.0) == 0.0);
        }
        for (double x : {0.3, 1.7, 4.2, 11.0}) {
            CHECK(loss.rho(x) == loss.rho(-x));
            CHECK(loss.psi(-x) == -loss.psi(x));
            CHECK(loss.rho(x) > loss.rho(0.0));
        }
    }
    for (LossFamily family : kBounded) {
        const LossSpec loss(family, 1.0);
        for (double x : {1e3, -1e3, 1e6, -1e6}) {
            CHECK(std::fabs(loss.psi(x)) <= 1.0);
        }
    }
}

TEST_CASE("psi is nondecreasing") {
    for (LossFamily family : kAll) {
        const LossSpec loss(family, 0.7);
        double prev = loss.psi(-6.0);
        for (double x = -6.0 + 0.01; x <= 6.0; x += 0.01) {
            const double cur = loss.psi(x);
            CHECK(cur >= prev - 1e-15);
            prev = cur;
        }
    }
}

TEST_CASE("psi_inverse clamps out-of-range input and counts events") {
    ClampCounter clamps;
    const LossSpec loss(LossFamily::LogCosh);
    const double hi = loss.psi_inverse(1.5, &clamps);
    const double lo = loss.psi_inverse(-2.0, &clamps);
    CHECK(std::isfinite(hi));
    CHECK(std::isfinite(lo));
    CHECK(hi > 0.0);
    CHECK(lo < 0.0);
    CHECK(clamps.events.load() == 2);
    loss.psi_inverse(0.0, &clamps);  // in range: not counted
    CHECK(clamps.events.load() == 2);

    // local-smooth-abs endpoints
    const LossSpec lsa(LossFamily::LocalSmoothAbs, 2.0);
    CHECK(lsa.psi_inverse(-1.0) == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(std::fabs(lsa.psi_inverse(5.0) - 2.0) < 1e-3);  // clamped to ~kappa
}

TEST_CASE("non-finite input raises domain errors") {
    const LossSpec loss(LossFamily::LogCosh);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(loss.rho(nan), std::domain_error);
    CHECK_THROWS_AS(loss.psi(inf), std::domain_error);
    CHECK_THROWS_AS(loss.psi_prime(nan), std::domain_error);
    CHECK_THROWS_AS(loss.psi_inverse(nan), std::domain_error);
}

TEST_CASE("invalid kappa rejected") {
    CHECK_THROWS_AS(LossSpec(LossFamily::LocalSmoothAbs, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(LossSpec(LossFamily::LocalSmoothAbs, -1.0), std::invalid_argument);
}
