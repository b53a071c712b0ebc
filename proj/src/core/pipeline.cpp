#include "core/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace rfpca {

namespace {

FunctionalDataset take_subjects(const FunctionalDataset& data, std::size_t first,
                                std::size_t count) {
    FunctionalDataset out;
    for (std::size_t i = first; i < first + count && i < data.subjects.size(); ++i) {
        out.subjects.push_back(data.subjects[i]);
    }
    return out;
}

// Covariance bandwidth CV with the mean refit per training fold (the flagged
// alternative to reusing the full-sample raw covariances).
CovCvResult cv_bandwidth_cov_refit(const FunctionalDataset& data,
                                   const std::vector<double>& candidates,
                                   const FitConfig& config, const Kernel& kernel,
                                   const std::vector<double>& grid, double h_mu,
                                   const LossSpec& loss) {
    std::vector<double> cands;
    for (double h : candidates) {
        if (h <= h_mu * (1.0 + 1e-12)) cands.push_back(h);
    }
    if (cands.empty()) {
        cands.push_back(*std::min_element(candidates.begin(), candidates.end()));
    }
    std::sort(cands.begin(), cands.end());

    const std::size_t n = data.num_subjects();
    const auto fold_idx = make_folds(n, config.folds, config.seed);

    CovCvResult res;
    res.candidates = cands;
    res.scores.assign(cands.size(), std::numeric_limits<double>::quiet_NaN());

    for (std::size_t c = 0; c < cands.size(); ++c) {
        const double h = cands[c];
        const auto moments = DesignMoments::compute(grid, h, kernel,
                                                    config.moments_mode,
                                                    config.moments_mc);
        double score = 0.0;
        bool valid = true;
        for (std::size_t k = 0; k < config.folds && valid; ++k) {
            std::vector<char> in_fold(n, 0);
            for (auto i : fold_idx[k]) in_fold[i] = 1;
            FunctionalDataset train;
            for (std::size_t i = 0; i < n; ++i) {
                if (!in_fold[i]) train.subjects.push_back(data.subjects[i]);
            }
            try {
                const auto mean_k = estimate_mean_curve(train, grid, h_mu, kernel,
                                                        loss, config.weighting);
                const auto raw_k = raw_covariances(train, mean_k, loss);
                const auto surf =
                    estimate_cov_surface(raw_k, grid, h, kernel, moments);
                // Validation raw covariances also use the fold mean.
                for (auto i : fold_idx[k]) {
                    const auto& obs = data.subjects[i].obs;
                    const std::size_t m = obs.size();
                    if (m < 2) continue;
                    const double vi =
                        1.0 / (static_cast<double>(n) *
                               static_cast<double>(m * (m - 1)));
                    std::vector<double> z(m);
                    for (std::size_t j = 0; j < m; ++j) {
                        z[j] = loss.psi(obs[j].value - mean_k(obs[j].time));
                    }
                    for (std::size_t j1 = 0; j1 < m; ++j1) {
                        for (std::size_t j2 = 0; j2 < m; ++j2) {
                            if (j1 == j2) continue;
                            const double e = z[j1] * z[j2] -
                                             surf(obs[j1].time, obs[j2].time);
                            score += vi * e * e;
                        }
                    }
                }
            } catch (const EstimationError&) {
                valid = false;
            }
        }
        if (valid) res.scores[c] = score;
    }

    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t c = 0; c < cands.size(); ++c) {
        if (std::isnan(res.scores[c])) continue;
        if (!found || res.scores[c] < best) {
            best = res.scores[c];
            res.selected = cands[c];
            found = true;
        }
    }
    if (!found) throw EstimationError("cv_bandwidth_cov_refit: all candidates invalid");
    return res;
}

}  // namespace

FitResult fit_pipeline(const FunctionalDataset& data, const FitConfig& config) {
    data.validate();
    const Kernel kernel(config.kernel);
    const auto grid = uniform_grid(config.grid_size);

    FitResult result;
    result.grid = grid;
    result.split_sample = config.split_sample;

    FunctionalDataset mean_data = data;
    FunctionalDataset cov_data = data;
    if (config.split_sample) {
        if (data.num_subjects() < 4) {
            throw std::invalid_argument("split-sample fit requires n >= 4");
        }
        const std::size_t half = data.num_subjects() / 2;
        mean_data = take_subjects(data, 0, half);
        cov_data = take_subjects(data, half, data.num_subjects() - half);
    }

    const auto mean_bw = config.mean_bw_candidates.empty()
                             ? default_bandwidth_candidates(mean_data)
                             : config.mean_bw_candidates;

    LossSpec loss = config.loss;
    if (config.tune_kappa) {
        BandwidthRule rule;
        rule.candidates = mean_bw;
        result.kappa_cv = cv_kappa(mean_data, config.kappa_candidates,
                                   config.folds, kernel, rule, config.seed, grid,
                                   config.weighting);
        loss = LossSpec(LossFamily::LocalSmoothAbs, result.kappa_cv->selected);
        result.selected_kappa = result.kappa_cv->selected;
    }
    result.loss = loss;

    result.mean_cv = cv_bandwidth_mean(mean_data, mean_bw, config.folds, kernel,
                                       loss, config.seed, grid, config.weighting);
    result.selected_h_mu = result.mean_cv.selected;
    result.mean = estimate_mean_curve(mean_data, grid, result.selected_h_mu,
                                      kernel, loss, config.weighting);

    const auto cov_bw = config.cov_bw_candidates.empty()
                            ? mean_bw
                            : config.cov_bw_candidates;
    const auto raw = raw_covariances(cov_data, result.mean, loss);
    if (config.cv_refit_mean) {
        result.cov_cv = cv_bandwidth_cov_refit(cov_data, cov_bw, config, kernel,
                                               grid, result.selected_h_mu, loss);
    } else {
        result.cov_cv = cv_bandwidth_cov(raw, cov_bw, config.folds, kernel,
                                         config.seed, grid, result.selected_h_mu,
                                         config.moments_mode, config.moments_mc);
    }
    result.selected_h_cov = result.cov_cv.selected;

    const auto moments = DesignMoments::compute(grid, result.selected_h_cov,
                                                kernel, config.moments_mode,
                                                config.moments_mc);
    result.covariance = estimate_cov_surface(raw, grid, result.selected_h_cov,
                                             kernel, moments);

    result.eigen = eigen_decompose(result.covariance, config.truncation);
    result.scores = estimate_scores(data, result.mean, result.eigen, loss,
                                    result.eigen.retained());
    return result;
}

std::pair<MeanEstimate, CovarianceSurface> split_sample_fit(
    const FunctionalDataset& data, const FitConfig& config) {
    FitConfig split_config = config;
    split_config.split_sample = true;
    const auto fit = fit_pipeline(data, split_config);
    return {fit.mean, fit.covariance};
}

}  // namespace rfpca
