/* Robust functional principal component analysis: C API.
 *
 * All entry points return an rfpca_status; results come back through opaque
 * handles and caller-provided buffers. rfpca_last_error() describes the most
 * recent failure on the calling thread.
 */
#ifndef RFPCA_H
#define RFPCA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rfpca_status {
    RFPCA_OK = 0,
    RFPCA_ERR_INVALID_ARGUMENT = 1,
    RFPCA_ERR_SINGULAR_DESIGN = 2,
    RFPCA_ERR_NUMERIC = 3,
    RFPCA_ERR_ESTIMATION = 4
} rfpca_status;

const char* rfpca_status_name(rfpca_status status);
const char* rfpca_last_error(void);

/* ---- losses ---- */

typedef enum rfpca_loss_family {
    RFPCA_LOSS_SQUARE = 0,
    RFPCA_LOSS_LOCAL_SMOOTH_ABS = 1,
    RFPCA_LOSS_LOG_COSH = 2,
    RFPCA_LOSS_ARCTAN_INTEGRAL = 3
} rfpca_loss_family;

rfpca_status rfpca_loss_rho(rfpca_loss_family family, double kappa, double x,
                            double* out);
rfpca_status rfpca_loss_psi(rfpca_loss_family family, double kappa, double x,
                            double* out);
rfpca_status rfpca_loss_psi_prime(rfpca_loss_family family, double kappa,
                                  double x, double* out);
rfpca_status rfpca_loss_psi_inverse(rfpca_loss_family family, double kappa,
                                    double y, double* out);

/* ---- datasets ---- */

typedef struct rfpca_dataset rfpca_dataset;

rfpca_dataset* rfpca_dataset_create(void);
void rfpca_dataset_free(rfpca_dataset* dataset);

/* Appends one subject with m (time, value) pairs; times must lie in [0, 1]. */
rfpca_status rfpca_dataset_add_subject(rfpca_dataset* dataset, const char* id,
                                       const double* times,
                                       const double* values, size_t m);
size_t rfpca_dataset_num_subjects(const rfpca_dataset* dataset);
size_t rfpca_dataset_num_obs(const rfpca_dataset* dataset, size_t subject);
const char* rfpca_dataset_subject_id(const rfpca_dataset* dataset,
                                     size_t subject);
rfpca_status rfpca_dataset_get_subject(const rfpca_dataset* dataset,
                                       size_t subject, double* times,
                                       double* values);

/* ---- fitting ---- */

typedef enum rfpca_kernel_family {
    RFPCA_KERNEL_TRICUBE = 0,
    RFPCA_KERNEL_EPANECHNIKOV = 1
} rfpca_kernel_family;

typedef struct rfpca_fit_options {
    rfpca_loss_family loss;
    double kappa;
    int tune_kappa; /* CV over kappa_candidates, forces local-smooth-abs */
    rfpca_kernel_family kernel;
    size_t grid_size;
    size_t folds;
    uint64_t seed;
    int split_sample;
    int cv_refit_mean;
    int equal_observation_weights;
    double fve_threshold;
    size_t max_components;
    const double* mean_bw_candidates; /* NULL for the data-driven default */
    size_t n_mean_bw;
    const double* cov_bw_candidates; /* NULL to reuse the mean candidates */
    size_t n_cov_bw;
    const double* kappa_candidates; /* NULL for {1e-3, 1e-2, 1e-1, 1} */
    size_t n_kappa;
} rfpca_fit_options;

void rfpca_fit_options_init(rfpca_fit_options* options);

typedef struct rfpca_fit rfpca_fit;

rfpca_status rfpca_fit_run(const rfpca_dataset* dataset,
                           const rfpca_fit_options* options, rfpca_fit** out);
void rfpca_fit_free(rfpca_fit* fit);

size_t rfpca_fit_grid_size(const rfpca_fit* fit);
rfpca_status rfpca_fit_grid(const rfpca_fit* fit, double* out);
rfpca_status rfpca_fit_mean(const rfpca_fit* fit, double* out);
double rfpca_fit_selected_h_mean(const rfpca_fit* fit);
double rfpca_fit_selected_h_cov(const rfpca_fit* fit);
/* Returns 0 and leaves *out untouched when kappa was not tuned. */
int rfpca_fit_selected_kappa(const rfpca_fit* fit, double* out);
/* Row-major grid_size x grid_size. */
rfpca_status rfpca_fit_covariance(const rfpca_fit* fit, double* out);
size_t rfpca_fit_num_components(const rfpca_fit* fit);
rfpca_status rfpca_fit_eigenvalues(const rfpca_fit* fit, double* out);
rfpca_status rfpca_fit_eigenfunction(const rfpca_fit* fit, size_t k,
                                     double* out);
rfpca_status rfpca_fit_fve(const rfpca_fit* fit, size_t k, double* out);
/* Row-major n x num_components. */
rfpca_status rfpca_fit_scores(const rfpca_fit* fit, double* out);
uint64_t rfpca_fit_clamp_events(const rfpca_fit* fit);
/* Reconstructed curve for one subject on caller-provided times. */
rfpca_status rfpca_fit_reconstruct(const rfpca_fit* fit, size_t subject,
                                   size_t components, const double* times,
                                   size_t num_times, double* out);

/* ---- simulation ---- */

typedef enum rfpca_score_family {
    RFPCA_SCORES_NORMAL = 0,
    RFPCA_SCORES_STUDENT_T = 1,
    RFPCA_SCORES_SYMMETRIC_LOG_NORMAL = 2,
    RFPCA_SCORES_CENTERED_BETA = 3,
    RFPCA_SCORES_DEGENERATE = 4
} rfpca_score_family;

typedef struct rfpca_sim_config {
    rfpca_score_family score_family;
    size_t num_basis;
    double contamination_prob;
    double noise_sd;
    size_t n;
    size_t m;
    uint64_t seed;
} rfpca_sim_config;

void rfpca_sim_config_init(rfpca_sim_config* config);
rfpca_status rfpca_simulate(const rfpca_sim_config* config,
                            rfpca_dataset** out);

/* Monte-Carlo robust truth on `grid`. mean_out has grid_size entries;
 * cov_out (grid_size^2, row-major) may be NULL to skip the covariance.
 * contaminate_truth selects whether the oracle population includes the
 * contamination mechanism. */
rfpca_status rfpca_truth(const rfpca_sim_config* config,
                         rfpca_loss_family loss, double kappa,
                         const double* grid, size_t grid_size,
                         size_t mc_samples, size_t reps, int contaminate_truth,
                         double* mean_out, double* cov_out);

/* ---- simulation-table reproduction ---- */

typedef struct rfpca_table_cell {
    rfpca_loss_family loss;
    double kappa;
    int tune_kappa;
    rfpca_score_family score_family;
    double contamination_prob;
    size_t n;
    size_t m;
} rfpca_table_cell;

typedef struct rfpca_reproduce_options {
    int covariance_table; /* 0: mean IMSE, 1: covariance relative IMSE */
    size_t runs;
    uint64_t seed;
    size_t grid_size;
    size_t folds;
    rfpca_kernel_family kernel;
    size_t oracle_samples;
    size_t oracle_reps;
    int contaminate_truth;
} rfpca_reproduce_options;

void rfpca_reproduce_options_init(rfpca_reproduce_options* options);

/* Runs the full tuned pipeline `runs` times per cell against a Monte-Carlo
 * truth; each output array has num_cells entries. excluded counts runs that
 * failed estimation. */
rfpca_status rfpca_reproduce(const rfpca_table_cell* cells, size_t num_cells,
                             const rfpca_reproduce_options* options,
                             double* metric_mean, double* metric_se,
                             size_t* excluded);

rfpca_status rfpca_imse_mean(const double* grid, size_t grid_size,
                             const double* estimate, const double* truth,
                             double* out);
rfpca_status rfpca_rel_imse_cov(const double* grid, size_t grid_size,
                                const double* estimate, const double* truth,
                                double* out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* RFPCA_H */
