#include "core/simulation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace rfpca {

namespace {

constexpr double kPi = 3.14159265358979323846;

double splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return static_cast<double>(z ^ (z >> 31));
}

// Solves mean psi(x - beta) = 0 by the Illinois variant of false position;
// beta -> mean psi(x - beta) is nonincreasing.
double robust_location(const Eigen::VectorXd& x, const LossSpec& loss,
                       double tol = 1e-10) {
    auto f = [&](double beta) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            s += loss.psi(x[i] - beta);
        }
        return s / static_cast<double>(x.size());
    };
    double a = x.minCoeff() - 1.0;
    double b = x.maxCoeff() + 1.0;
    double fa = f(a);
    double fb = f(b);
    int widen = 0;
    while (fa < 0.0 || fb > 0.0) {
        // Bracket failure: widen towards the data range limits and retry.
        const double span = b - a;
        a -= span;
        b += span;
        fa = f(a);
        fb = f(b);
        if (++widen > 8) {
            throw NumericError("robust_location: could not bracket the root");
        }
    }
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;

    int side = 0;
    double c = a;
    for (int iter = 0; iter < 200 && b - a > tol; ++iter) {
        if (fa == fb) {
            c = 0.5 * (a + b);
        } else {
            c = (a * fb - b * fa) / (fb - fa);
            if (!(c > a && c < b)) c = 0.5 * (a + b);
        }
        const double fc = f(c);
        if (fc > 0.0) {
            a = c;
            fa = fc;
            if (side == 1) fb *= 0.5;
            side = 1;
        } else if (fc < 0.0) {
            b = c;
            fb = fc;
            if (side == -1) fa *= 0.5;
            side = -1;
        } else {
            return c;
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

ScoreFamily score_family_from_string(const std::string& name) {
    if (name == "normal") return ScoreFamily::Normal;
    if (name == "student-t") return ScoreFamily::StudentT;
    if (name == "symmetric-log-normal") return ScoreFamily::SymmetricLogNormal;
    if (name == "centered-beta") return ScoreFamily::CenteredBeta;
    if (name == "degenerate") return ScoreFamily::Degenerate;
    throw std::invalid_argument("unknown score family: " + name);
}

std::string to_string(ScoreFamily family) {
    switch (family) {
        case ScoreFamily::Normal: return "normal";
        case ScoreFamily::StudentT: return "student-t";
        case ScoreFamily::SymmetricLogNormal: return "symmetric-log-normal";
        case ScoreFamily::CenteredBeta: return "centered-beta";
        case ScoreFamily::Degenerate: return "degenerate";
    }
    return "?";
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
    std::uint64_t state = master ^ (0xd1b54a32d192ed03ULL * (counter + 1));
    splitmix64(state);
    splitmix64(state);
    return state;
}

double sample_sln(double mu, double sigma2, std::mt19937_64& rng) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sample_sln: sigma2 <= 0");
    std::normal_distribution<double> normal(mu, std::sqrt(sigma2));
    const double z1 = std::exp(normal(rng));
    const bool positive = (rng() >> 63) == 0;
    return positive ? z1 : -z1;
}

double sample_centered_beta(double alpha, double beta, std::mt19937_64& rng) {
    if (!(alpha > 0.0 && beta > 0.0)) {
        throw std::invalid_argument("sample_centered_beta: parameters must be > 0");
    }
    std::gamma_distribution<double> ga(alpha, 1.0);
    std::gamma_distribution<double> gb(beta, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y) - alpha / (alpha + beta);
}

std::vector<double> sample_scores(const SimConfig& config, std::mt19937_64& rng) {
    std::vector<double> scores(config.num_basis);
    for (std::size_t k = 1; k <= config.num_basis; ++k) {
        const double kd = static_cast<double>(k);
        double z = 0.0;
        switch (config.score_family) {
            case ScoreFamily::Normal: {
                std::normal_distribution<double> d(0.0, kd);
                z = d(rng);
                break;
            }
            case ScoreFamily::StudentT: {
                std::student_t_distribution<double> d(kd);
                z = d(rng);
                break;
            }
            case ScoreFamily::SymmetricLogNormal:
                z = sample_sln(0.0, kd * kd, rng);
                break;
            case ScoreFamily::CenteredBeta:
                z = sample_centered_beta(2.0 * kd, kd, rng);
                break;
            case ScoreFamily::Degenerate:
                z = 1.0;
                break;
        }
        scores[k - 1] = z;
    }
    return scores;
}

double basis_function(std::size_t k, double t) {
    return std::sqrt(2.0) * std::sin(static_cast<double>(k) * kPi * t);
}

FunctionalDataset sample_dataset(const SimConfig& config) {
    if (config.n < 1 || config.m < 1) {
        throw std::invalid_argument("sample_dataset: n and m must be >= 1");
    }
    std::mt19937_64 rng(derive_seed(config.seed, 0));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, config.noise_sd);
    std::normal_distribution<double> contam(config.contamination_location,
                                            config.contamination_sd);

    FunctionalDataset data;
    data.subjects.resize(config.n);
    for (std::size_t i = 0; i < config.n; ++i) {
        auto& subj = data.subjects[i];
        subj.id = "s" + std::to_string(i + 1);
        subj.obs.resize(config.m);
        const auto scores = sample_scores(config, rng);
        for (std::size_t j = 0; j < config.m; ++j) {
            const double t = unif(rng);
            double x = 0.0;
            for (std::size_t k = 1; k <= config.num_basis; ++k) {
                x += scores[k - 1] * basis_function(k, t);
            }
            if (config.noise_sd > 0.0) x += noise(rng);
            // Contamination is applied last, independently per observation.
            if (config.contamination_prob > 0.0 &&
                unif(rng) < config.contamination_prob) {
                x = contam(rng);
            }
            subj.obs[j] = {t, x};
        }
    }
    return data;
}

TruthTables truth_oracle(const SimConfig& config, const std::vector<double>& grid,
                         const LossSpec& loss, const OracleConfig& oracle) {
    if (oracle.mc_samples < 10000) {
        throw std::invalid_argument("truth_oracle: need at least 1e4 samples");
    }
    if (oracle.reps < 1) throw std::invalid_argument("truth_oracle: reps >= 1");

    const std::size_t g = grid.size();
    const std::size_t kb = config.num_basis;
    const Eigen::Index m = static_cast<Eigen::Index>(oracle.mc_samples);

    Eigen::MatrixXd phi(kb, g);
    for (std::size_t k = 1; k <= kb; ++k) {
        for (std::size_t j = 0; j < g; ++j) {
            phi(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(j)) =
                basis_function(k, grid[j]);
        }
    }

    std::vector<double> mean_acc(g, 0.0), mean_sq(g, 0.0);
    Eigen::MatrixXd cov_acc = Eigen::MatrixXd::Zero(g, g);
    Eigen::MatrixXd cov_sq = Eigen::MatrixXd::Zero(g, g);

    for (std::size_t rep = 0; rep < oracle.reps; ++rep) {
        const std::uint64_t rep_seed = derive_seed(config.seed, 500000 + rep);
        std::mt19937_64 rng(rep_seed);

        SimConfig score_cfg = config;
        Eigen::MatrixXd scores(m, kb);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto z = sample_scores(score_cfg, rng);
            for (std::size_t k = 0; k < kb; ++k) {
                scores(i, static_cast<Eigen::Index>(k)) = z[k];
            }
        }

        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> contam(config.contamination_location,
                                                config.contamination_sd);
        const bool contaminate =
            oracle.contaminate && config.contamination_prob > 0.0;

        std::vector<double> mu(g);
        for (std::size_t j = 0; j < g; ++j) {
            Eigen::VectorXd x =
                scores * phi.col(static_cast<Eigen::Index>(j));
            if (contaminate) {
                std::mt19937_64 crng(derive_seed(rep_seed, 10000 + j));
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (unif(crng) < config.contamination_prob) x[i] = contam(crng);
                }
            }
            mu[j] = robust_location(x, loss);
            mean_acc[j] += mu[j];
            mean_sq[j] += mu[j] * mu[j];
        }

        if (oracle.compute_cov) {
            Eigen::Map<const Eigen::VectorXd> mu_vec(mu.data(),
                                                     static_cast<Eigen::Index>(g));
            Eigen::MatrixXd c = Eigen::MatrixXd::Zero(g, g);
            const Eigen::Index chunk = 8192;
            std::mt19937_64 crng(derive_seed(rep_seed, 20000));
            for (Eigen::Index start = 0; start < m; start += chunk) {
                const Eigen::Index rows = std::min(chunk, m - start);
                Eigen::MatrixXd x = scores.middleRows(start, rows) * phi;
                if (contaminate) {
                    for (Eigen::Index i = 0; i < rows; ++i) {
                        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(g);
                             ++j) {
                            if (unif(crng) < config.contamination_prob) {
                                x(i, j) = contam(crng);
                            }
                        }
                    }
                }
                for (Eigen::Index i = 0; i < rows; ++i) {
                    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(g); ++j) {
                        x(i, j) = loss.psi(x(i, j) - mu_vec[j]);
                    }
                }
                c.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0);
            }
            c = c.selfadjointView<Eigen::Lower>();
            c /= static_cast<double>(m);
            cov_acc += c;
            cov_sq += c.cwiseProduct(c);
        }
    }

    TruthTables truth;
    truth.grid = grid;
    truth.mc_samples = oracle.mc_samples;
    truth.reps = oracle.reps;
    truth.mean.resize(g);
    truth.mean_se.assign(g, 0.0);
    const double reps = static_cast<double>(oracle.reps);
    for (std::size_t j = 0; j < g; ++j) {
        truth.mean[j] = mean_acc[j] / reps;
        if (oracle.reps > 1) {
            const double var =
                std::max(0.0, mean_sq[j] / reps - truth.mean[j] * truth.mean[j]);
            truth.mean_se[j] = std::sqrt(var / reps);
        }
    }
    if (oracle.compute_cov) {
        truth.cov.resize(g * g);
        double se_sum = 0.0;
        for (std::size_t i = 0; i < g; ++i) {
            for (std::size_t j = 0; j < g; ++j) {
                const double mean_ij =
                    cov_acc(static_cast<Eigen::Index>(i),
                            static_cast<Eigen::Index>(j)) / reps;
                truth.cov[i * g + j] = mean_ij;
                if (oracle.reps > 1) {
                    const double var = std::max(
                        0.0, cov_sq(static_cast<Eigen::Index>(i),
                                    static_cast<Eigen::Index>(j)) /
                                     reps -
                                 mean_ij * mean_ij);
                    se_sum += std::sqrt(var / reps);
                }
            }
        }
        truth.cov_se = se_sum / static_cast<double>(g * g);
        // Exact symmetry for downstream eigen-decomposition.
        for (std::size_t i = 0; i < g; ++i) {
            for (std::size_t j = i + 1; j < g; ++j) {
                const double v = 0.5 * (truth.cov[i * g + j] + truth.cov[j * g + i]);
                truth.cov[i * g + j] = v;
                truth.cov[j * g + i] = v;
            }
        }
    }
    return truth;
}

double imse_mean(const std::vector<double>& grid, const std::vector<double>& est,
                 const std::vector<double>& truth) {
    if (grid.size() != est.size() || grid.size() != truth.size()) {
        throw std::invalid_argument("imse_mean: size mismatch");
    }
    const auto w = trapezoid_weights(grid);
    double s = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double e = est[i] - truth[i];
        s += w[i] * e * e;
    }
    return s;
}

double imse_mean(const MeanEstimate& estimate, const TruthTables& truth) {
    return imse_mean(estimate.grid, estimate.values, truth.mean);
}

double rel_imse_cov(const CovarianceSurface& surface, const TruthTables& truth) {
    const std::size_t g = surface.grid.size();
    if (truth.cov.size() != g * g) {
        throw std::invalid_argument("rel_imse_cov: grid mismatch");
    }
    const auto w = trapezoid_weights(surface.grid);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < g; ++j) {
            const double ww = w[i] * w[j];
            const double e = surface.at(i, j) - truth.cov[i * g + j];
            num += ww * e * e;
            den += ww * truth.cov[i * g + j] * truth.cov[i * g + j];
        }
    }
    if (den <= 0.0) throw std::invalid_argument("rel_imse_cov: zero normalizer");
    return num / den;
}

std::vector<TableCellResult> reproduce_table(const std::vector<TableCellSpec>& cells,
                                             const ReproduceConfig& config) {
    if (config.runs < 2) throw std::invalid_argument("reproduce_table: runs >= 2");
    const auto grid = uniform_grid(config.grid_size);
    const Kernel kernel(config.kernel);

    // Truth tables depend on (family, alpha, loss) but not on (n, m); cache
    // them across cells and runs.
    struct TruthKey {
        ScoreFamily family;
        double alpha;
        LossFamily loss;
        double kappa;
        bool operator<(const TruthKey& o) const {
            return std::tie(family, alpha, loss, kappa) <
                   std::tie(o.family, o.alpha, o.loss, o.kappa);
        }
    };
    std::map<TruthKey, TruthTables> truth_cache;
    auto get_truth = [&](const TableCellSpec& cell, const LossSpec& loss)
        -> const TruthTables& {
        TruthKey key{cell.family, cell.contamination, loss.family(),
                     loss.family() == LossFamily::LocalSmoothAbs ? loss.kappa()
                                                                 : 0.0};
        auto it = truth_cache.find(key);
        if (it == truth_cache.end()) {
            SimConfig pop;
            pop.score_family = cell.family;
            pop.contamination_prob = cell.contamination;
            pop.seed = derive_seed(config.seed, 77);
            OracleConfig oc = config.oracle;
            oc.compute_cov = config.table == TableKind::Covariance;
            it = truth_cache.emplace(key, truth_oracle(pop, grid, loss, oc)).first;
        }
        return it->second;
    };

    std::vector<TableCellResult> results;
    results.reserve(cells.size());
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const auto& cell = cells[ci];
        TableCellResult res;
        res.spec = cell;

        std::vector<double> metrics;
        metrics.reserve(config.runs);
        for (std::size_t run = 0; run < config.runs; ++run) {
            const std::uint64_t run_seed =
                derive_seed(config.seed, ci * 1000000 + run + 1);
            SimConfig sim;
            sim.score_family = cell.family;
            sim.contamination_prob = cell.contamination;
            sim.n = cell.n;
            sim.m = cell.m;
            sim.seed = run_seed;
            const FunctionalDataset data = sample_dataset(sim);

            try {
                LossSpec loss(cell.loss, cell.kappa);
                const auto bw_cands = default_bandwidth_candidates(data);
                if (cell.tune_kappa) {
                    BandwidthRule rule;
                    rule.candidates = bw_cands;
                    const auto kcv =
                        cv_kappa(data, config.kappa_candidates, config.folds,
                                 kernel, rule, run_seed, grid);
                    loss = LossSpec(LossFamily::LocalSmoothAbs, kcv.selected);
                }
                const auto hcv = cv_bandwidth_mean(data, bw_cands, config.folds,
                                                   kernel, loss, run_seed, grid);
                const auto mean = estimate_mean_curve(data, grid, hcv.selected,
                                                      kernel, loss);
                const TruthTables& truth = get_truth(cell, loss);

                if (config.table == TableKind::Mean) {
                    metrics.push_back(imse_mean(mean, truth));
                } else {
                    const auto raw = raw_covariances(data, mean, loss);
                    const auto ccv = cv_bandwidth_cov(raw, bw_cands, config.folds,
                                                      kernel, run_seed, grid,
                                                      hcv.selected);
                    const auto moments = DesignMoments::compute(
                        grid, ccv.selected, kernel, MomentsMode::Analytic);
                    const auto surf = estimate_cov_surface(raw, grid, ccv.selected,
                                                           kernel, moments);
                    metrics.push_back(rel_imse_cov(surf, truth));
                }
            } catch (const std::runtime_error&) {
                ++res.excluded;
            }
        }

        res.runs = metrics.size();
        if (!metrics.empty()) {
            double s = 0.0;
            for (double v : metrics) s += v;
            res.metric_mean = s / static_cast<double>(metrics.size());
            if (metrics.size() > 1) {
                double var = 0.0;
                for (double v : metrics) {
                    var += (v - res.metric_mean) * (v - res.metric_mean);
                }
                var /= static_cast<double>(metrics.size() - 1);
                res.metric_se =
                    std::sqrt(var / static_cast<double>(metrics.size()));
            }
        }
        results.push_back(std::move(res));
    }
    return results;
}

}  // namespace rfpca
