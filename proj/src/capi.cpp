// extern-C surface over the core library: opaque handles, status codes and a
// thread-local last-error message. All exceptions are translated here.
#include "rfpca/rfpca.h"

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "core/covariance.hpp"
#include "core/dataset.hpp"
#include "core/fpca.hpp"
#include "core/loss.hpp"
#include "core/mean.hpp"
#include "core/pipeline.hpp"
#include "core/simulation.hpp"

namespace {

thread_local std::string g_last_error;

rfpca_status fail(rfpca_status code, const char* what) {
    g_last_error = what;
    return code;
}

template <typename Fn>
rfpca_status guarded(Fn&& fn) {
    try {
        fn();
        return RFPCA_OK;
    } catch (const std::invalid_argument& e) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, e.what());
    } catch (const rfpca::SingularDesignError& e) {
        return fail(RFPCA_ERR_SINGULAR_DESIGN, e.what());
    } catch (const rfpca::NumericError& e) {
        return fail(RFPCA_ERR_NUMERIC, e.what());
    } catch (const rfpca::EstimationError& e) {
        return fail(RFPCA_ERR_ESTIMATION, e.what());
    } catch (const std::domain_error& e) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::bad_alloc& e) {
        return fail(RFPCA_ERR_NUMERIC, e.what());
    } catch (const std::exception& e) {
        return fail(RFPCA_ERR_NUMERIC, e.what());
    }
}

rfpca::LossFamily to_core(rfpca_loss_family f) {
    switch (f) {
        case RFPCA_LOSS_SQUARE: return rfpca::LossFamily::Square;
        case RFPCA_LOSS_LOCAL_SMOOTH_ABS: return rfpca::LossFamily::LocalSmoothAbs;
        case RFPCA_LOSS_LOG_COSH: return rfpca::LossFamily::LogCosh;
        case RFPCA_LOSS_ARCTAN_INTEGRAL: return rfpca::LossFamily::ArctanIntegral;
    }
    throw std::invalid_argument("unknown loss family code");
}

rfpca::KernelFamily to_core(rfpca_kernel_family f) {
    switch (f) {
        case RFPCA_KERNEL_TRICUBE: return rfpca::KernelFamily::Tricube;
        case RFPCA_KERNEL_EPANECHNIKOV: return rfpca::KernelFamily::Epanechnikov;
    }
    throw std::invalid_argument("unknown kernel family code");
}

rfpca::ScoreFamily to_core(rfpca_score_family f) {
    switch (f) {
        case RFPCA_SCORES_NORMAL: return rfpca::ScoreFamily::Normal;
        case RFPCA_SCORES_STUDENT_T: return rfpca::ScoreFamily::StudentT;
        case RFPCA_SCORES_SYMMETRIC_LOG_NORMAL:
            return rfpca::ScoreFamily::SymmetricLogNormal;
        case RFPCA_SCORES_CENTERED_BETA: return rfpca::ScoreFamily::CenteredBeta;
        case RFPCA_SCORES_DEGENERATE: return rfpca::ScoreFamily::Degenerate;
    }
    throw std::invalid_argument("unknown score family code");
}

rfpca::SimConfig to_core(const rfpca_sim_config& c) {
    rfpca::SimConfig out;
    out.score_family = to_core(c.score_family);
    out.num_basis = c.num_basis;
    out.contamination_prob = c.contamination_prob;
    out.noise_sd = c.noise_sd;
    out.n = c.n;
    out.m = c.m;
    out.seed = c.seed;
    return out;
}

}  // namespace

struct rfpca_dataset {
    rfpca::FunctionalDataset data;
};

struct rfpca_fit {
    rfpca::FitResult result;
    std::vector<std::string> subject_ids;
};

extern "C" {

const char* rfpca_status_name(rfpca_status status) {
    switch (status) {
        case RFPCA_OK: return "ok";
        case RFPCA_ERR_INVALID_ARGUMENT: return "invalid-argument";
        case RFPCA_ERR_SINGULAR_DESIGN: return "singular-design";
        case RFPCA_ERR_NUMERIC: return "numeric";
        case RFPCA_ERR_ESTIMATION: return "estimation";
    }
    return "unknown";
}

const char* rfpca_last_error(void) { return g_last_error.c_str(); }

rfpca_status rfpca_loss_rho(rfpca_loss_family family, double kappa, double x,
                            double* out) {
    if (!out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null output pointer");
    return guarded([&] { *out = rfpca::LossSpec(to_core(family), kappa).rho(x); });
}

rfpca_status rfpca_loss_psi(rfpca_loss_family family, double kappa, double x,
                            double* out) {
    if (!out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null output pointer");
    return guarded([&] { *out = rfpca::LossSpec(to_core(family), kappa).psi(x); });
}

rfpca_status rfpca_loss_psi_prime(rfpca_loss_family family, double kappa,
                                  double x, double* out) {
    if (!out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null output pointer");
    return guarded(
        [&] { *out = rfpca::LossSpec(to_core(family), kappa).psi_prime(x); });
}

rfpca_status rfpca_loss_psi_inverse(rfpca_loss_family family, double kappa,
                                    double y, double* out) {
    if (!out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null output pointer");
    return guarded(
        [&] { *out = rfpca::LossSpec(to_core(family), kappa).psi_inverse(y); });
}

rfpca_dataset* rfpca_dataset_create(void) {
    return new (std::nothrow) rfpca_dataset();
}

void rfpca_dataset_free(rfpca_dataset* dataset) { delete dataset; }

rfpca_status rfpca_dataset_add_subject(rfpca_dataset* dataset, const char* id,
                                       const double* times,
                                       const double* values, size_t m) {
    if (!dataset || !id || !times || !values || m == 0) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT,
                    "add_subject: null argument or empty subject");
    }
    return guarded([&] {
        rfpca::Subject s;
        s.id = id;
        s.obs.reserve(m);
        for (size_t j = 0; j < m; ++j) s.obs.push_back({times[j], values[j]});
        rfpca::FunctionalDataset probe;
        probe.subjects.push_back(s);
        probe.validate();
        dataset->data.subjects.push_back(std::move(s));
    });
}

size_t rfpca_dataset_num_subjects(const rfpca_dataset* dataset) {
    return dataset ? dataset->data.num_subjects() : 0;
}

size_t rfpca_dataset_num_obs(const rfpca_dataset* dataset, size_t subject) {
    if (!dataset || subject >= dataset->data.num_subjects()) return 0;
    return dataset->data.subjects[subject].obs.size();
}

const char* rfpca_dataset_subject_id(const rfpca_dataset* dataset,
                                     size_t subject) {
    if (!dataset || subject >= dataset->data.num_subjects()) return nullptr;
    return dataset->data.subjects[subject].id.c_str();
}

rfpca_status rfpca_dataset_get_subject(const rfpca_dataset* dataset,
                                       size_t subject, double* times,
                                       double* values) {
    if (!dataset || !times || !values) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "get_subject: null argument");
    }
    if (subject >= dataset->data.num_subjects()) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "get_subject: index out of range");
    }
    const auto& obs = dataset->data.subjects[subject].obs;
    for (size_t j = 0; j < obs.size(); ++j) {
        times[j] = obs[j].time;
        values[j] = obs[j].value;
    }
    return RFPCA_OK;
}

void rfpca_fit_options_init(rfpca_fit_options* options) {
    if (!options) return;
    std::memset(options, 0, sizeof(*options));
    options->loss = RFPCA_LOSS_LOG_COSH;
    options->kappa = 1.0;
    options->kernel = RFPCA_KERNEL_TRICUBE;
    options->grid_size = 101;
    options->folds = 2;
    options->seed = 1;
    options->fve_threshold = 0.95;
    options->max_components = 20;
}

rfpca_status rfpca_fit_run(const rfpca_dataset* dataset,
                           const rfpca_fit_options* options, rfpca_fit** out) {
    if (!dataset || !options || !out) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "fit_run: null argument");
    }
    *out = nullptr;
    return guarded([&] {
        rfpca::FitConfig config;
        config.loss = rfpca::LossSpec(to_core(options->loss), options->kappa);
        config.tune_kappa = options->tune_kappa != 0;
        if (options->kappa_candidates && options->n_kappa > 0) {
            config.kappa_candidates.assign(
                options->kappa_candidates,
                options->kappa_candidates + options->n_kappa);
        }
        config.kernel = to_core(options->kernel);
        config.grid_size = options->grid_size;
        config.folds = options->folds;
        config.seed = options->seed;
        config.split_sample = options->split_sample != 0;
        config.cv_refit_mean = options->cv_refit_mean != 0;
        config.weighting = options->equal_observation_weights
                               ? rfpca::SubjectWeighting::EqualObservation
                               : rfpca::SubjectWeighting::EqualSubject;
        config.truncation.fve_threshold = options->fve_threshold;
        config.truncation.max_components = options->max_components;
        if (options->mean_bw_candidates && options->n_mean_bw > 0) {
            config.mean_bw_candidates.assign(
                options->mean_bw_candidates,
                options->mean_bw_candidates + options->n_mean_bw);
        }
        if (options->cov_bw_candidates && options->n_cov_bw > 0) {
            config.cov_bw_candidates.assign(
                options->cov_bw_candidates,
                options->cov_bw_candidates + options->n_cov_bw);
        }
        auto fit = std::make_unique<rfpca_fit>();
        fit->result = rfpca::fit_pipeline(dataset->data, config);
        fit->subject_ids.reserve(dataset->data.num_subjects());
        for (const auto& s : dataset->data.subjects) {
            fit->subject_ids.push_back(s.id);
        }
        *out = fit.release();
    });
}

void rfpca_fit_free(rfpca_fit* fit) { delete fit; }

size_t rfpca_fit_grid_size(const rfpca_fit* fit) {
    return fit ? fit->result.grid.size() : 0;
}

rfpca_status rfpca_fit_grid(const rfpca_fit* fit, double* out) {
    if (!fit || !out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null argument");
    std::memcpy(out, fit->result.grid.data(),
                fit->result.grid.size() * sizeof(double));
    return RFPCA_OK;
}

rfpca_status rfpca_fit_mean(const rfpca_fit* fit, double* out) {
    if (!fit || !out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null argument");
    std::memcpy(out, fit->result.mean.values.data(),
                fit->result.mean.values.size() * sizeof(double));
    return RFPCA_OK;
}

double rfpca_fit_selected_h_mean(const rfpca_fit* fit) {
    return fit ? fit->result.selected_h_mu : 0.0;
}

double rfpca_fit_selected_h_cov(const rfpca_fit* fit) {
    return fit ? fit->result.selected_h_cov : 0.0;
}

int rfpca_fit_selected_kappa(const rfpca_fit* fit, double* out) {
    if (!fit || !fit->result.selected_kappa) return 0;
    if (out) *out = *fit->result.selected_kappa;
    return 1;
}

rfpca_status rfpca_fit_covariance(const rfpca_fit* fit, double* out) {
    if (!fit || !out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null argument");
    std::memcpy(out, fit->result.covariance.values.data(),
                fit->result.covariance.values.size() * sizeof(double));
    return RFPCA_OK;
}

size_t rfpca_fit_num_components(const rfpca_fit* fit) {
    return fit ? fit->result.eigen.retained() : 0;
}

rfpca_status rfpca_fit_eigenvalues(const rfpca_fit* fit, double* out) {
    if (!fit || !out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null argument");
    std::memcpy(out, fit->result.eigen.eigenvalues.data(),
                fit->result.eigen.eigenvalues.size() * sizeof(double));
    return RFPCA_OK;
}

rfpca_status rfpca_fit_eigenfunction(const rfpca_fit* fit, size_t k,
                                     double* out) {
    if (!fit || !out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null argument");
    if (k >= fit->result.eigen.retained()) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "eigenfunction index out of range");
    }
    const auto& phi = fit->result.eigen.eigenfunctions[k];
    std::memcpy(out, phi.data(), phi.size() * sizeof(double));
    return RFPCA_OK;
}

rfpca_status rfpca_fit_fve(const rfpca_fit* fit, size_t k, double* out) {
    if (!fit || !out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = rfpca::fraction_of_variance(fit->result.eigen, k); });
}

rfpca_status rfpca_fit_scores(const rfpca_fit* fit, double* out) {
    if (!fit || !out) return fail(RFPCA_ERR_INVALID_ARGUMENT, "null argument");
    std::memcpy(out, fit->result.scores.values.data(),
                fit->result.scores.values.size() * sizeof(double));
    return RFPCA_OK;
}

uint64_t rfpca_fit_clamp_events(const rfpca_fit* fit) {
    return fit ? fit->result.clamp_events : 0;
}

rfpca_status rfpca_fit_reconstruct(const rfpca_fit* fit, size_t subject,
                                   size_t components, const double* times,
                                   size_t num_times, double* out) {
    if (!fit || !times || !out || num_times == 0) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "reconstruct: null argument");
    }
    if (subject >= fit->result.scores.n) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "reconstruct: subject out of range");
    }
    if (components == 0 || components > fit->result.scores.k) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT,
                    "reconstruct: component count out of range");
    }
    return guarded([&] {
        const auto& r = fit->result;
        for (size_t j = 0; j < num_times; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < components; ++k) {
                acc += r.scores.at(subject, k) *
                       r.eigen.eigenfunction_at(k, times[j]);
            }
            out[j] = r.mean(times[j]) + r.loss.psi_inverse(acc);
        }
    });
}

void rfpca_sim_config_init(rfpca_sim_config* config) {
    if (!config) return;
    std::memset(config, 0, sizeof(*config));
    config->score_family = RFPCA_SCORES_NORMAL;
    config->num_basis = 3;
    config->n = 100;
    config->m = 5;
    config->seed = 1;
}

rfpca_status rfpca_simulate(const rfpca_sim_config* config,
                            rfpca_dataset** out) {
    if (!config || !out) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "simulate: null argument");
    }
    *out = nullptr;
    return guarded([&] {
        auto dataset = std::make_unique<rfpca_dataset>();
        dataset->data = rfpca::sample_dataset(to_core(*config));
        *out = dataset.release();
    });
}

rfpca_status rfpca_truth(const rfpca_sim_config* config,
                         rfpca_loss_family loss, double kappa,
                         const double* grid, size_t grid_size,
                         size_t mc_samples, size_t reps, int contaminate_truth,
                         double* mean_out, double* cov_out) {
    if (!config || !grid || grid_size < 2 || !mean_out) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "truth: bad argument");
    }
    return guarded([&] {
        rfpca::OracleConfig oracle;
        oracle.mc_samples = mc_samples;
        oracle.reps = reps;
        oracle.contaminate = contaminate_truth != 0;
        oracle.compute_cov = cov_out != nullptr;
        const std::vector<double> g(grid, grid + grid_size);
        const auto tables = rfpca::truth_oracle(
            to_core(*config), g, rfpca::LossSpec(to_core(loss), kappa), oracle);
        std::memcpy(mean_out, tables.mean.data(), grid_size * sizeof(double));
        if (cov_out) {
            std::memcpy(cov_out, tables.cov.data(),
                        grid_size * grid_size * sizeof(double));
        }
    });
}

void rfpca_reproduce_options_init(rfpca_reproduce_options* options) {
    if (!options) return;
    std::memset(options, 0, sizeof(*options));
    options->runs = 20;
    options->seed = 1;
    options->grid_size = 101;
    options->folds = 2;
    options->kernel = RFPCA_KERNEL_TRICUBE;
    options->oracle_samples = 200000;
    options->oracle_reps = 5;
}

rfpca_status rfpca_reproduce(const rfpca_table_cell* cells, size_t num_cells,
                             const rfpca_reproduce_options* options,
                             double* metric_mean, double* metric_se,
                             size_t* excluded) {
    if (!cells || num_cells == 0 || !options || !metric_mean || !metric_se ||
        !excluded) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "reproduce: null argument");
    }
    return guarded([&] {
        std::vector<rfpca::TableCellSpec> specs(num_cells);
        for (size_t i = 0; i < num_cells; ++i) {
            specs[i].loss = to_core(cells[i].loss);
            specs[i].kappa = cells[i].kappa;
            specs[i].tune_kappa = cells[i].tune_kappa != 0;
            specs[i].family = to_core(cells[i].score_family);
            specs[i].contamination = cells[i].contamination_prob;
            specs[i].n = cells[i].n;
            specs[i].m = cells[i].m;
        }
        rfpca::ReproduceConfig config;
        config.table = options->covariance_table ? rfpca::TableKind::Covariance
                                                 : rfpca::TableKind::Mean;
        config.runs = options->runs;
        config.seed = options->seed;
        config.grid_size = options->grid_size;
        config.folds = options->folds;
        config.kernel = to_core(options->kernel);
        config.oracle.mc_samples = options->oracle_samples;
        config.oracle.reps = options->oracle_reps;
        config.oracle.contaminate = options->contaminate_truth != 0;
        config.oracle.compute_cov = options->covariance_table != 0;
        const auto results = rfpca::reproduce_table(specs, config);
        for (size_t i = 0; i < num_cells; ++i) {
            metric_mean[i] = results[i].metric_mean;
            metric_se[i] = results[i].metric_se;
            excluded[i] = results[i].excluded;
        }
    });
}

rfpca_status rfpca_imse_mean(const double* grid, size_t grid_size,
                             const double* estimate, const double* truth,
                             double* out) {
    if (!grid || !estimate || !truth || !out || grid_size < 2) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "imse_mean: bad argument");
    }
    return guarded([&] {
        const std::vector<double> g(grid, grid + grid_size);
        const std::vector<double> e(estimate, estimate + grid_size);
        const std::vector<double> t(truth, truth + grid_size);
        *out = rfpca::imse_mean(g, e, t);
    });
}

rfpca_status rfpca_rel_imse_cov(const double* grid, size_t grid_size,
                                const double* estimate, const double* truth,
                                double* out) {
    if (!grid || !estimate || !truth || !out || grid_size < 2) {
        return fail(RFPCA_ERR_INVALID_ARGUMENT, "rel_imse_cov: bad argument");
    }
    return guarded([&] {
        const std::vector<double> g(grid, grid + grid_size);
        rfpca::CovarianceSurface surf;
        surf.grid = g;
        surf.values.assign(estimate, estimate + grid_size * grid_size);
        rfpca::TruthTables tables;
        tables.grid = g;
        tables.cov.assign(truth, truth + grid_size * grid_size);
        *out = rfpca::rel_imse_cov(surf, tables);
    });
}

}  // extern "C"
