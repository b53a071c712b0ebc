#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "core/dataset.hpp"
#include "core/kernel.hpp"
#include "core/mean.hpp"

using namespace rfpca;

namespace {

FunctionalDataset random_dataset(std::mt19937_64& rng, std::size_t n,
                                 std::size_t max_m) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> norm(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> mdist(2, max_m);
    FunctionalDataset data;
    for (std::size_t i = 0; i < n; ++i) {
        Subject s;
        s.id = "s" + std::to_string(i);
        const std::size_t m = mdist(rng);
        for (std::size_t j = 0; j < m; ++j) {
            s.obs.push_back({unif(rng), norm(rng)});
        }
        data.subjects.push_back(std::move(s));
    }
    return data;
}

FunctionalDataset constant_dataset(double c, std::size_t n, std::size_t m,
                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    FunctionalDataset data;
    for (std::size_t i = 0; i < n; ++i) {
        Subject s;
        s.id = std::to_string(i);
        for (std::size_t j = 0; j < m; ++j) s.obs.push_back({unif(rng), c});
        data.subjects.push_back(std::move(s));
    }
    return data;
}

// Direct 2x2 normal-equation solve of the weighted local-linear fit:
// minimize sum gamma_i K_h(T-t) (X - b0 - b1 (T-t))^2; returns b0.
double local_linear_oracle(const FunctionalDataset& data, double t, double h,
                           const Kernel& kernel) {
    const auto gamma = subject_weights(data, SubjectWeighting::EqualSubject);
    double s0 = 0, s1 = 0, s2 = 0, r0 = 0, r1 = 0;
    for (std::size_t i = 0; i < data.subjects.size(); ++i) {
        for (const auto& o : data.subjects[i].obs) {
            const double d = o.time - t;
            const double w = gamma[i] * kernel.scaled(d, h);
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
            r0 += w * o.value;
            r1 += w * d * o.value;
        }
    }
    const double det = s0 * s2 - s1 * s1;
    return (s2 * r0 - s1 * r1) / det;
}

}  // namespace

TEST_CASE("kernels are symmetric densities on [-1,1]") {
    for (KernelFamily family : {KernelFamily::Tricube, KernelFamily::Epanechnikov}) {
        const Kernel k(family);
        double integral = 0.0;
        const int steps = 200000;
        for (int i = 0; i < steps; ++i) {  // midpoint rule
            const double u = -1.0 + (i + 0.5) * 2.0 / steps;
            integral += k(u) * 2.0 / steps;
            CHECK(k(u) >= 0.0);
        }
        CHECK(std::fabs(integral - 1.0) < 1e-10);
        CHECK(k(0.3) == k(-0.3));
        CHECK(k(1.0) == 0.0);
        CHECK(k(-1.2) == 0.0);
    }
}

TEST_CASE("local weight identities on 100 random designs") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Kernel kernel;
    for (int rep = 0; rep < 100; ++rep) {
        const auto data = random_dataset(rng, 20, 6);
        const double t = unif(rng);
        const double h = 0.1 + 0.4 * unif(rng);
        LocalWeights w;
        try {
            w = local_weights(data, t, h, kernel);
        } catch (const SingularDesignError&) {
            continue;  // legal outcome for an unlucky window
        }
        double sum = 0.0, sum_d = 0.0;
        for (const auto& e : w.entries) {
            sum += e.gamma * e.omega;
            sum_d += e.gamma * e.omega * (e.time - t);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-10);
        CHECK(std::fabs(sum_d) < 1e-10);
    }
}

TEST_CASE("all observations at the query point -> singular design") {
    FunctionalDataset data;
    data.subjects.push_back({"a", {{0.5, 1.0}, {0.5, 2.0}}});
    data.subjects.push_back({"b", {{0.5, 3.0}}});
    CHECK_THROWS_AS(local_weights(data, 0.5, 0.1, Kernel()), SingularDesignError);
}

TEST_CASE("symmetric two-point design: u1 = 0 and equal weights") {
    const double t = 0.5, h = 0.2;
    FunctionalDataset data;
    data.subjects.push_back({"a", {{t - h / 2, 1.0}, {t + h / 2, 2.0}}});
    data.subjects.push_back({"b", {{t - h / 2, 3.0}, {t + h / 2, 4.0}}});
    const Kernel kernel;
    const auto w = local_weights(data, t, h, kernel);
    REQUIRE(w.entries.size() == 4);
    // u1 = 0 by symmetry, so omega = sigma0^-2 K_h(+-h/2) u2, equal for all
    for (const auto& e : w.entries) {
        CHECK(e.omega == doctest::Approx(w.entries[0].omega).epsilon(1e-12));
    }
    // check against the explicit formula
    const double gk = 0.25 * kernel.scaled(h / 2, h);
    const double u0 = 4 * gk, u2 = 4 * gk * (h / 2) * (h / 2);
    const double sigma = u0 * u2;
    CHECK(w.entries[0].omega ==
          doctest::Approx(kernel.scaled(h / 2, h) * u2 / sigma).epsilon(1e-10));
}

TEST_CASE("constant data -> mean estimate equals the constant, all families") {
    const auto data = constant_dataset(3.25, 15, 4, 9);
    const Kernel kernel;
    for (LossFamily family :
         {LossFamily::Square, LossFamily::LocalSmoothAbs, LossFamily::LogCosh,
          LossFamily::ArctanIntegral}) {
        const LossSpec loss(family, 0.5);
        CHECK(estimate_mean_at(data, 0.4, 0.3, kernel, loss) ==
              doctest::Approx(3.25).epsilon(1e-7));
    }
}

TEST_CASE("square loss equals the normal-equation oracle on 100 random datasets") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Kernel kernel;
    const LossSpec loss(LossFamily::Square);
    int checked = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const auto data = random_dataset(rng, 25, 6);
        const double t = unif(rng);
        const double h = 0.15 + 0.3 * unif(rng);
        double est;
        try {
            est = estimate_mean_at(data, t, h, kernel, loss);
        } catch (const SingularDesignError&) {
            continue;
        }
        const double oracle = local_linear_oracle(data, t, h, kernel);
        CHECK(std::fabs(est - oracle) < 1e-8 * std::max(1.0, std::fabs(oracle)));
        ++checked;
    }
    CHECK(checked >= 90);
}

TEST_CASE("symmetric window data -> log-cosh estimate at the center") {
    FunctionalDataset data;
    const double c = 1.5;
    // values symmetric about c at time pairs symmetric about t
    data.subjects.push_back({"a", {{0.45, c - 2.0}, {0.55, c + 2.0}}});
    data.subjects.push_back({"b", {{0.48, c - 0.7}, {0.52, c + 0.7}}});
    data.subjects.push_back({"c", {{0.40, c - 1.2}, {0.60, c + 1.2}}});
    const double est =
        estimate_mean_at(data, 0.5, 0.25, Kernel(), LossSpec(LossFamily::LogCosh));
    CHECK(std::fabs(est - c) < 1e-6);
}

TEST_CASE("mean curve: constant data and translation equivariance") {
    const auto data = constant_dataset(-2.0, 12, 5, 31);
    const auto grid = uniform_grid(51);
    const Kernel kernel;
    const auto curve =
        estimate_mean_curve(data, grid, 0.3, kernel, LossSpec(LossFamily::LogCosh));
    for (double v : curve.values) CHECK(v == doctest::Approx(-2.0).epsilon(1e-7));

    std::mt19937_64 rng(5);
    auto noisy = random_dataset(rng, 30, 6);
    const double shift = 4.75;
    auto shifted = noisy;
    for (auto& s : shifted.subjects) {
        for (auto& o : s.obs) o.value += shift;
    }
    for (LossFamily family :
         {LossFamily::Square, LossFamily::LocalSmoothAbs, LossFamily::LogCosh,
          LossFamily::ArctanIntegral}) {
        const LossSpec loss(family, 1.0);
        const auto a = estimate_mean_curve(noisy, grid, 0.25, kernel, loss);
        const auto b = estimate_mean_curve(shifted, grid, 0.25, kernel, loss);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            CHECK(std::fabs(b.values[g] - a.values[g] - shift) < 1e-5);
        }
    }
}

TEST_CASE("kappa -> 0 limit matches the weighted-absolute-loss oracle") {
    std::mt19937_64 rng(13);
    const auto data = random_dataset(rng, 40, 5);
    const double t = 0.5, h = 0.3;
    const Kernel kernel;
    const auto w = local_weights(data, t, h, kernel);
    const double est =
        minimize_weighted_loss(w, LossSpec(LossFamily::LocalSmoothAbs, 1e-6));
    // grid-search oracle over sum gamma omega |x - beta|
    double best = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 400000; ++i) {
        const double beta = -4.0 + 8.0 * i / 400000.0;
        double v = 0.0;
        for (const auto& e : w.entries) {
            v += e.gamma * e.omega * std::fabs(e.value - beta);
        }
        if (v < best_val) {
            best_val = v;
            best = beta;
        }
    }
    CHECK(std::fabs(est - best) < 1e-3);
}

TEST_CASE("make_folds splits evenly and partitions") {
    const auto folds = make_folds(10, 3, 99);
    std::vector<int> seen(10, 0);
    for (const auto& f : folds) {
        CHECK(f.size() >= 3);
        CHECK(f.size() <= 4);
        for (auto i : f) ++seen[i];
    }
    for (int c : seen) CHECK(c == 1);
    // deterministic given seed
    CHECK(make_folds(10, 3, 99) == folds);
    CHECK_THROWS_AS(make_folds(2, 3, 1), std::invalid_argument);
}

TEST_CASE("default bandwidth candidates: 8 increasing values up to 0.5") {
    std::mt19937_64 rng(8);
    const auto data = random_dataset(rng, 25, 6);
    const auto cands = default_bandwidth_candidates(data);
    REQUIRE(cands.size() == 8);
    for (std::size_t i = 1; i < cands.size(); ++i) CHECK(cands[i] > cands[i - 1]);
    CHECK(cands.back() == doctest::Approx(0.5));
    CHECK(cands.front() > 0.0);
}

TEST_CASE("cv_bandwidth_mean basics") {
    std::mt19937_64 rng(21);
    const auto data = random_dataset(rng, 30, 6);
    const auto grid = uniform_grid(41);
    const Kernel kernel;
    const LossSpec loss(LossFamily::LogCosh);

    // single candidate returned unconditionally
    auto res = cv_bandwidth_mean(data, {0.33}, 2, kernel, loss, 5, grid);
    CHECK(res.selected == doctest::Approx(0.33));

    // selected achieves the minimal score; among ties, the smallest candidate
    res = cv_bandwidth_mean(data, {0.1, 0.2, 0.3, 0.5}, 2, kernel, loss, 5, grid);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < res.candidates.size(); ++c) {
        if (!std::isnan(res.scores[c])) best = std::min(best, res.scores[c]);
    }
    for (std::size_t c = 0; c < res.candidates.size(); ++c) {
        if (!std::isnan(res.scores[c]) && res.scores[c] == best) {
            CHECK(res.selected == doctest::Approx(res.candidates[c]));
            break;  // first (smallest) candidate attaining the minimum
        }
    }
}

TEST_CASE("cv prefers the tuned bandwidth on a curved mean") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.3);
    FunctionalDataset data;
    for (int i = 0; i < 200; ++i) {
        Subject s;
        s.id = std::to_string(i);
        for (int j = 0; j < 10; ++j) {
            const double t = unif(rng);
            s.obs.push_back({t, std::sin(2 * M_PI * t) + noise(rng)});
        }
        data.subjects.push_back(std::move(s));
    }
    const auto grid = uniform_grid(51);
    const auto res = cv_bandwidth_mean(data, {0.08, 0.5}, 2, Kernel(),
                                       LossSpec(LossFamily::Square), 11, grid);
    REQUIRE(res.scores.size() == 2);
    CHECK(res.scores[0] < res.scores[1]);  // tuned beats oversmoothed
    CHECK(res.selected == doctest::Approx(0.08));
}

TEST_CASE("cv_kappa basics") {
    std::mt19937_64 rng(17);
    const auto data = random_dataset(rng, 24, 5);
    const auto grid = uniform_grid(41);
    BandwidthRule rule;
    rule.fixed = 0.3;

    auto res = cv_kappa(data, {0.25}, 2, Kernel(), rule, 7, grid);
    CHECK(res.selected == doctest::Approx(0.25));

    res = cv_kappa(data, {1e-3, 1e-2, 1e-1, 1.0}, 2, Kernel(), rule, 7, grid);
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t c = 0; c < res.candidates.size(); ++c) {
        if (std::isnan(res.scores[c])) continue;
        if (res.scores[c] < best) best = res.scores[c];
        if (res.candidates[c] == res.selected) {
            found = true;
            CHECK(res.scores[c] == doctest::Approx(best));
        }
    }
    CHECK(found);
}

TEST_CASE("dataset validation") {
    FunctionalDataset empty;
    CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
    FunctionalDataset bad_time;
    bad_time.subjects.push_back({"a", {{1.5, 0.0}}});
    CHECK_THROWS_AS(bad_time.validate(), std::invalid_argument);
    FunctionalDataset bad_value;
    bad_value.subjects.push_back(
        {"a", {{0.5, std::numeric_limits<double>::quiet_NaN()}}});
    CHECK_THROWS_AS(bad_value.validate(), std::invalid_argument);
}
