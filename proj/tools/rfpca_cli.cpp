// rfpca-cli: fit / simulate / reproduce / plot / scores / reconstruct.
// Links only the public C API; all numerics live behind it.
#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rfpca/rfpca.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(rfpca_status status) {
    if (status == RFPCA_OK) return;
    const std::string msg = std::string(rfpca_status_name(status)) + ": " +
                            rfpca_last_error();
    if (status == RFPCA_ERR_INVALID_ARGUMENT) throw InputError(msg);
    throw NumericFailure(msg);
}

// Fixed shortest-round-trip formatting keeps outputs byte-stable.
std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string fmt6(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

rfpca_loss_family parse_loss(const std::string& name) {
    if (name == "square" || name == "rho0") return RFPCA_LOSS_SQUARE;
    if (name == "smooth-abs" || name == "rho1") return RFPCA_LOSS_LOCAL_SMOOTH_ABS;
    if (name == "log-cosh" || name == "rho2") return RFPCA_LOSS_LOG_COSH;
    if (name == "arctan" || name == "rho3") return RFPCA_LOSS_ARCTAN_INTEGRAL;
    throw InputError("unknown loss: " + name);
}

std::string loss_name(rfpca_loss_family f) {
    switch (f) {
        case RFPCA_LOSS_SQUARE: return "square";
        case RFPCA_LOSS_LOCAL_SMOOTH_ABS: return "smooth-abs";
        case RFPCA_LOSS_LOG_COSH: return "log-cosh";
        case RFPCA_LOSS_ARCTAN_INTEGRAL: return "arctan";
    }
    return "unknown";
}

rfpca_kernel_family parse_kernel(const std::string& name) {
    if (name == "tricube") return RFPCA_KERNEL_TRICUBE;
    if (name == "epanechnikov") return RFPCA_KERNEL_EPANECHNIKOV;
    throw InputError("unknown kernel: " + name);
}

rfpca_score_family parse_family(const std::string& name) {
    if (name == "normal") return RFPCA_SCORES_NORMAL;
    if (name == "student-t") return RFPCA_SCORES_STUDENT_T;
    if (name == "sln") return RFPCA_SCORES_SYMMETRIC_LOG_NORMAL;
    if (name == "beta" || name == "beta10" || name == "beta20") {
        return RFPCA_SCORES_CENTERED_BETA;
    }
    if (name == "degenerate") return RFPCA_SCORES_DEGENERATE;
    throw InputError("unknown score family: " + name);
}

std::string family_name(rfpca_score_family f) {
    switch (f) {
        case RFPCA_SCORES_NORMAL: return "normal";
        case RFPCA_SCORES_STUDENT_T: return "student-t";
        case RFPCA_SCORES_SYMMETRIC_LOG_NORMAL: return "sln";
        case RFPCA_SCORES_CENTERED_BETA: return "beta";
        case RFPCA_SCORES_DEGENERATE: return "degenerate";
    }
    return "unknown";
}

// Effective run configuration: defaults, overridden by --config JSON,
// overridden by command-line flags.
struct RunConfig {
    std::string command;
    std::string data_path;
    std::string out_dir = "out";
    std::string loss = "log-cosh";
    double kappa = 1.0;
    bool tune_kappa = false;
    std::string kernel = "tricube";
    std::size_t grid_size = 101;
    std::size_t folds = 2;
    std::uint64_t seed = 1;
    bool split_sample = false;
    bool rescale_time = false;
    int threads = 1;

    // simulate / reproduce
    std::string family = "normal";
    std::size_t n = 100;
    std::size_t m = 5;
    std::size_t num_basis = 3;
    double contamination = 0.0;
    double noise_sd = 0.0;
    std::string table = "mean";
    std::size_t runs = 20;
    std::vector<std::string> cells;
    std::size_t oracle_samples = 200000;
    std::size_t oracle_reps = 5;
    bool contaminate_truth = false;

    // plot / reconstruct
    std::string kind = "mean";
    std::string input_path;
    std::size_t components = 0;  // 0 = all retained
};

json config_echo(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["data"] = c.data_path;
    j["out"] = c.out_dir;
    j["loss"] = c.loss;
    j["kappa"] = c.kappa;
    j["tune_kappa"] = c.tune_kappa;
    j["kernel"] = c.kernel;
    j["grid_size"] = c.grid_size;
    j["folds"] = c.folds;
    j["seed"] = c.seed;
    j["split_sample"] = c.split_sample;
    j["rescale_time"] = c.rescale_time;
    j["threads"] = c.threads;
    if (c.command == "simulate" || c.command == "reproduce") {
        j["family"] = c.family;
        j["n"] = c.n;
        j["m"] = c.m;
        j["num_basis"] = c.num_basis;
        j["contamination"] = c.contamination;
        j["noise_sd"] = c.noise_sd;
    }
    if (c.command == "reproduce") {
        j["table"] = c.table;
        j["runs"] = c.runs;
        j["cells"] = c.cells;
        j["oracle_samples"] = c.oracle_samples;
        j["oracle_reps"] = c.oracle_reps;
        j["contaminate_truth"] = c.contaminate_truth;
    }
    if (c.command == "plot") {
        j["kind"] = c.kind;
        j["input"] = c.input_path;
    }
    if (c.command == "reconstruct") j["components"] = c.components;
    return j;
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << body;
}

void write_config_echo(const RunConfig& c) {
    write_text(fs::path(c.out_dir) / "config-echo.json",
               config_echo(c).dump(2) + "\n");
}

// ---- dataset I/O ----

struct DatasetHandle {
    rfpca_dataset* ptr = nullptr;
    ~DatasetHandle() { rfpca_dataset_free(ptr); }
};

struct FitHandle {
    rfpca_fit* ptr = nullptr;
    ~FitHandle() { rfpca_fit_free(ptr); }
};

void load_dataset(const std::string& path, bool rescale_time,
                  DatasetHandle& out) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw InputError(path + ": empty dataset file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "subject_id,time,value") {
        throw InputError(path + ":1: expected header subject_id,time,value");
    }
    struct Row {
        std::string id;
        double time, value;
    };
    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw InputError(path + ":" + std::to_string(lineno) +
                             ": malformed row (need 3 fields)");
        }
        Row r;
        r.id = line.substr(0, c1);
        try {
            std::size_t used = 0;
            const std::string ts = line.substr(c1 + 1, c2 - c1 - 1);
            const std::string vs = line.substr(c2 + 1);
            r.time = std::stod(ts, &used);
            if (used != ts.size()) throw std::invalid_argument("time");
            r.value = std::stod(vs, &used);
            if (used != vs.size()) throw std::invalid_argument("value");
        } catch (const std::exception&) {
            throw InputError(path + ":" + std::to_string(lineno) +
                             ": malformed numeric field");
        }
        if (!std::isfinite(r.value)) {
            throw InputError(path + ":" + std::to_string(lineno) +
                             ": non-finite value");
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw InputError(path + ": empty dataset file");

    if (rescale_time) {
        double lo = rows[0].time, hi = rows[0].time;
        for (const auto& r : rows) {
            lo = std::min(lo, r.time);
            hi = std::max(hi, r.time);
        }
        const double span = hi - lo;
        for (auto& r : rows) r.time = span > 0.0 ? (r.time - lo) / span : 0.5;
    } else {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!(rows[i].time >= 0.0 && rows[i].time <= 1.0)) {
                throw InputError(path + ":" + std::to_string(i + 2) +
                                 ": time outside [0,1] (use --rescale-time)");
            }
        }
    }

    // Group by id in first-appearance order.
    std::vector<std::string> order;
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<double>> times, values;
    for (const auto& r : rows) {
        auto it = index.find(r.id);
        if (it == index.end()) {
            it = index.emplace(r.id, order.size()).first;
            order.push_back(r.id);
            times.emplace_back();
            values.emplace_back();
        }
        times[it->second].push_back(r.time);
        values[it->second].push_back(r.value);
    }
    out.ptr = rfpca_dataset_create();
    if (!out.ptr) throw NumericFailure("dataset allocation failed");
    for (std::size_t i = 0; i < order.size(); ++i) {
        check(rfpca_dataset_add_subject(out.ptr, order[i].c_str(),
                                        times[i].data(), values[i].data(),
                                        times[i].size()));
    }
}

void save_dataset(const fs::path& path, const rfpca_dataset* data) {
    std::ostringstream out;
    out << "subject_id,time,value\n";
    const std::size_t n = rfpca_dataset_num_subjects(data);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t m = rfpca_dataset_num_obs(data, i);
        std::vector<double> t(m), v(m);
        check(rfpca_dataset_get_subject(data, i, t.data(), v.data()));
        const char* id = rfpca_dataset_subject_id(data, i);
        for (std::size_t j = 0; j < m; ++j) {
            out << id << ',' << fmt(t[j]) << ',' << fmt(v[j]) << '\n';
        }
    }
    write_text(path, out.str());
}

// ---- fitting helpers ----

void run_fit(const RunConfig& c, const rfpca_dataset* data, FitHandle& fit) {
    rfpca_fit_options opts;
    rfpca_fit_options_init(&opts);
    opts.loss = parse_loss(c.loss);
    opts.kappa = c.kappa;
    opts.tune_kappa = c.tune_kappa ? 1 : 0;
    opts.kernel = parse_kernel(c.kernel);
    opts.grid_size = c.grid_size;
    opts.folds = c.folds;
    opts.seed = c.seed;
    opts.split_sample = c.split_sample ? 1 : 0;
    check(rfpca_fit_run(data, &opts, &fit.ptr));
}

void write_mean_csv(const fs::path& path, const rfpca_fit* fit) {
    const std::size_t g = rfpca_fit_grid_size(fit);
    std::vector<double> grid(g), mean(g);
    check(rfpca_fit_grid(fit, grid.data()));
    check(rfpca_fit_mean(fit, mean.data()));
    std::ostringstream out;
    out << "t,value\n";
    for (std::size_t i = 0; i < g; ++i) {
        out << fmt(grid[i]) << ',' << fmt(mean[i]) << '\n';
    }
    write_text(path, out.str());
}

void write_covariance_csv(const fs::path& path, const rfpca_fit* fit) {
    const std::size_t g = rfpca_fit_grid_size(fit);
    std::vector<double> grid(g), cov(g * g);
    check(rfpca_fit_grid(fit, grid.data()));
    check(rfpca_fit_covariance(fit, cov.data()));
    std::ostringstream out;
    out << "s,t,value\n";
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < g; ++j) {
            out << fmt(grid[i]) << ',' << fmt(grid[j]) << ','
                << fmt(cov[i * g + j]) << '\n';
        }
    }
    write_text(path, out.str());
}

void write_eigen_csv(const fs::path& path, const rfpca_fit* fit) {
    const std::size_t g = rfpca_fit_grid_size(fit);
    const std::size_t k = rfpca_fit_num_components(fit);
    std::vector<double> grid(g), lambda(k), phi(g);
    check(rfpca_fit_grid(fit, grid.data()));
    check(rfpca_fit_eigenvalues(fit, lambda.data()));
    std::ostringstream out;
    out << "k,lambda,t,phi\n";
    for (std::size_t c = 0; c < k; ++c) {
        check(rfpca_fit_eigenfunction(fit, c, phi.data()));
        for (std::size_t i = 0; i < g; ++i) {
            out << (c + 1) << ',' << fmt(lambda[c]) << ',' << fmt(grid[i])
                << ',' << fmt(phi[i]) << '\n';
        }
    }
    write_text(path, out.str());
}

void write_scores_csv(const fs::path& path, const rfpca_fit* fit,
                      const rfpca_dataset* data) {
    const std::size_t n = rfpca_dataset_num_subjects(data);
    const std::size_t k = rfpca_fit_num_components(fit);
    std::vector<double> scores(n * k);
    check(rfpca_fit_scores(fit, scores.data()));
    std::ostringstream out;
    out << "subject_id,k,score\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            out << rfpca_dataset_subject_id(data, i) << ',' << (c + 1) << ','
                << fmt(scores[i * k + c]) << '\n';
        }
    }
    write_text(path, out.str());
}

void write_summary(const fs::path& path, const RunConfig& c,
                   const rfpca_fit* fit) {
    std::ostringstream out;
    out << "loss: " << c.loss << "\n";
    double kappa = 0.0;
    if (rfpca_fit_selected_kappa(fit, &kappa)) {
        out << "selected kappa: " << fmt(kappa) << "\n";
    } else if (c.loss == "smooth-abs" || c.loss == "rho1") {
        out << "kappa: " << fmt(c.kappa) << "\n";
    }
    out << "selected h_mean: " << fmt(rfpca_fit_selected_h_mean(fit)) << "\n";
    out << "selected h_cov: " << fmt(rfpca_fit_selected_h_cov(fit)) << "\n";
    out << "split_sample: " << (c.split_sample ? "yes (first half mean, second half covariance)"
                                               : "no") << "\n";
    const std::size_t k = rfpca_fit_num_components(fit);
    std::vector<double> lambda(k);
    check(rfpca_fit_eigenvalues(fit, lambda.data()));
    out << "components: " << k << "\n";
    out << "k,lambda,fve\n";
    for (std::size_t c2 = 1; c2 <= k; ++c2) {
        double fve = 0.0;
        check(rfpca_fit_fve(fit, c2, &fve));
        out << c2 << ',' << fmt(lambda[c2 - 1]) << ',' << fmt(fve) << '\n';
    }
    out << "psi-inverse clamp events: " << rfpca_fit_clamp_events(fit) << "\n";
    write_text(path, out.str());
}

// ---- SVG plotting ----

struct Series {
    std::string label;
    std::vector<double> x, y;
};

std::string render_svg(const std::vector<Series>& series,
                       const std::string& title) {
    constexpr double W = 640, H = 480;
    constexpr double ML = 60, MR = 20, MT = 40, MB = 50;
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                first = false;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) {
        ymax = ymin + 0.5;
        ymin -= 0.5;
    }
    const auto px = [&](double x) {
        return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
    };
    const auto py = [&](double y) {
        return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);
    };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
           "height=\"480\" viewBox=\"0 0 640 480\">\n";
    svg << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    svg << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">"
        << title << "</text>\n";
    // axes
    svg << "<line x1=\"" << fmt6(ML) << "\" y1=\"" << fmt6(H - MB)
        << "\" x2=\"" << fmt6(W - MR) << "\" y2=\"" << fmt6(H - MB)
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fmt6(ML) << "\" y1=\"" << fmt6(MT) << "\" x2=\""
        << fmt6(ML) << "\" y2=\"" << fmt6(H - MB) << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        svg << "<line x1=\"" << fmt6(px(xv)) << "\" y1=\"" << fmt6(H - MB)
            << "\" x2=\"" << fmt6(px(xv)) << "\" y2=\"" << fmt6(H - MB + 5)
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt6(px(xv)) << "\" y=\"" << fmt6(H - MB + 20)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"11\">"
            << fmt6(xv) << "</text>\n";
        svg << "<line x1=\"" << fmt6(ML - 5) << "\" y1=\"" << fmt6(py(yv))
            << "\" x2=\"" << fmt6(ML) << "\" y2=\"" << fmt6(py(yv))
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt6(ML - 8) << "\" y=\"" << fmt6(py(yv) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
               "font-size=\"11\">"
            << fmt6(yv) << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        svg << "<polyline fill=\"none\" stroke=\"" << kColors[s % 6]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            if (i) svg << ' ';
            svg << fmt6(px(series[s].x[i])) << ',' << fmt6(py(series[s].y[i]));
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << fmt6(W - MR - 10) << "\" y=\""
            << fmt6(MT + 16.0 * (double)s + 12) << "\" text-anchor=\"end\" "
               "font-family=\"sans-serif\" font-size=\"12\" fill=\""
            << kColors[s % 6] << "\">" << series[s].label << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               std::size_t fields) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != fields) {
            throw InputError(path + ":" + std::to_string(lineno) +
                             ": expected " + std::to_string(fields) + " fields");
        }
        rows.push_back(std::move(cells));
    }
    if (rows.size() < 2) throw InputError(path + ": no data rows");
    return rows;
}

void cmd_plot(const RunConfig& c) {
    std::vector<Series> series;
    std::string title;
    if (c.kind == "mean") {
        const auto rows = read_csv(c.input_path, 2);
        Series s;
        s.label = "mean";
        for (std::size_t i = 1; i < rows.size(); ++i) {
            s.x.push_back(std::stod(rows[i][0]));
            s.y.push_back(std::stod(rows[i][1]));
        }
        series.push_back(std::move(s));
        title = "Robust mean curve";
    } else if (c.kind == "eigen") {
        const auto rows = read_csv(c.input_path, 4);
        std::map<std::string, std::size_t> comp;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            auto it = comp.find(rows[i][0]);
            if (it == comp.end()) {
                it = comp.emplace(rows[i][0], series.size()).first;
                series.push_back({"phi_" + rows[i][0], {}, {}});
            }
            series[it->second].x.push_back(std::stod(rows[i][2]));
            series[it->second].y.push_back(std::stod(rows[i][3]));
        }
        title = "Eigenfunctions";
    } else if (c.kind == "loss") {
        const rfpca_loss_family family = parse_loss(c.loss);
        Series rho{loss_name(family), {}, {}}, abs{"abs", {}, {}};
        for (int i = 0; i <= 600; ++i) {
            const double x = -3.0 + 6.0 * i / 600.0;
            double r = 0.0;
            check(rfpca_loss_rho(family, c.kappa, x, &r));
            rho.x.push_back(x);
            rho.y.push_back(r);
            abs.x.push_back(x);
            abs.y.push_back(std::fabs(x));
        }
        series.push_back(std::move(rho));
        series.push_back(std::move(abs));
        title = "Loss shape (" + c.loss + ")";
    } else {
        throw InputError("unknown plot kind: " + c.kind +
                         " (expected mean|eigen|loss)");
    }
    fs::create_directories(c.out_dir);
    write_text(fs::path(c.out_dir) / ("plot-" + c.kind + ".svg"),
               render_svg(series, title));
    write_config_echo(c);
}

// ---- reproduce ----

rfpca_table_cell parse_cell(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) parts.push_back(part);
    if (parts.size() < 4 || parts.size() > 5) {
        throw InputError("cell must be loss,family,n,m[,alpha]: " + text);
    }
    rfpca_table_cell cell{};
    std::string loss_tok = parts[0];
    cell.tune_kappa = 0;
    if (loss_tok.size() > 6 && loss_tok.substr(loss_tok.size() - 6) == "-tuned") {
        cell.tune_kappa = 1;
        loss_tok = loss_tok.substr(0, loss_tok.size() - 6);
    }
    cell.loss = parse_loss(loss_tok);
    cell.kappa = 1.0;
    cell.score_family = parse_family(parts[1]);
    cell.contamination_prob = 0.0;
    if (parts[1] == "beta10") cell.contamination_prob = 0.10;
    if (parts[1] == "beta20") cell.contamination_prob = 0.20;
    try {
        cell.n = std::stoul(parts[2]);
        cell.m = std::stoul(parts[3]);
        if (parts.size() == 5) cell.contamination_prob = std::stod(parts[4]);
    } catch (const std::exception&) {
        throw InputError("bad numeric field in cell: " + text);
    }
    if (cell.n == 0 || cell.m == 0) throw InputError("cell needs n,m >= 1");
    return cell;
}

void cmd_reproduce(const RunConfig& c) {
    if (c.cells.empty()) throw InputError("reproduce: need at least one --cell");
    std::vector<rfpca_table_cell> cells;
    for (const auto& text : c.cells) cells.push_back(parse_cell(text));

    rfpca_reproduce_options opts;
    rfpca_reproduce_options_init(&opts);
    opts.covariance_table = (c.table == "covariance") ? 1 : 0;
    if (c.table != "mean" && c.table != "covariance") {
        throw InputError("unknown table: " + c.table);
    }
    opts.runs = c.runs;
    opts.seed = c.seed;
    opts.grid_size = c.grid_size;
    opts.folds = c.folds;
    opts.kernel = parse_kernel(c.kernel);
    opts.oracle_samples = c.oracle_samples;
    opts.oracle_reps = c.oracle_reps;
    opts.contaminate_truth = c.contaminate_truth ? 1 : 0;

    std::vector<double> mean(cells.size()), se(cells.size());
    std::vector<std::size_t> excluded(cells.size());
    check(rfpca_reproduce(cells.data(), cells.size(), &opts, mean.data(),
                          se.data(), excluded.data()));

    std::ostringstream out;
    out << "loss,tuned,family,alpha,n,m,runs,excluded,metric_mean,metric_se\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out << loss_name(cells[i].loss) << ',' << cells[i].tune_kappa << ','
            << family_name(cells[i].score_family) << ','
            << fmt(cells[i].contamination_prob) << ',' << cells[i].n << ','
            << cells[i].m << ',' << c.runs << ',' << excluded[i] << ','
            << fmt(mean[i]) << ',' << fmt(se[i]) << '\n';
    }
    fs::create_directories(c.out_dir);
    write_text(fs::path(c.out_dir) / "report.csv", out.str());

    // Aligned plain-text mirror of the CSV report.
    std::ostringstream txt;
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s %-6s %-10s %-6s %5s %4s %5s %4s %12s %12s\n",
                  "loss", "tuned", "family", "alpha", "n", "m", "runs", "excl",
                  "metric_mean", "metric_se");
    txt << line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        std::snprintf(line, sizeof(line),
                      "%-12s %-6d %-10s %-6.2f %5zu %4zu %5zu %4zu %12.4g %12.4g\n",
                      loss_name(cells[i].loss).c_str(), cells[i].tune_kappa,
                      family_name(cells[i].score_family).c_str(),
                      cells[i].contamination_prob, cells[i].n, cells[i].m,
                      c.runs, excluded[i], mean[i], se[i]);
        txt << line;
    }
    write_text(fs::path(c.out_dir) / "report.txt", txt.str());
    write_config_echo(c);
    std::cout << txt.str();
}

// ---- commands ----

void cmd_fit(const RunConfig& c, bool scores_only) {
    DatasetHandle data;
    load_dataset(c.data_path, c.rescale_time, data);
    FitHandle fit;
    run_fit(c, data.ptr, fit);
    fs::create_directories(c.out_dir);
    if (!scores_only) {
        write_mean_csv(fs::path(c.out_dir) / "mean.csv", fit.ptr);
        write_covariance_csv(fs::path(c.out_dir) / "covariance.csv", fit.ptr);
        write_eigen_csv(fs::path(c.out_dir) / "eigen.csv", fit.ptr);
        write_summary(fs::path(c.out_dir) / "summary.txt", c, fit.ptr);
    }
    write_scores_csv(fs::path(c.out_dir) / "scores.csv", fit.ptr, data.ptr);
    write_config_echo(c);
}

void cmd_reconstruct(const RunConfig& c) {
    DatasetHandle data;
    load_dataset(c.data_path, c.rescale_time, data);
    FitHandle fit;
    run_fit(c, data.ptr, fit);
    const std::size_t g = rfpca_fit_grid_size(fit.ptr);
    std::vector<double> grid(g), curve(g);
    check(rfpca_fit_grid(fit.ptr, grid.data()));
    const std::size_t retained = rfpca_fit_num_components(fit.ptr);
    const std::size_t k =
        c.components == 0 ? retained : std::min(c.components, retained);
    std::ostringstream out;
    out << "subject_id,t,value\n";
    const std::size_t n = rfpca_dataset_num_subjects(data.ptr);
    for (std::size_t i = 0; i < n; ++i) {
        check(rfpca_fit_reconstruct(fit.ptr, i, k, grid.data(), g,
                                    curve.data()));
        for (std::size_t j = 0; j < g; ++j) {
            out << rfpca_dataset_subject_id(data.ptr, i) << ',' << fmt(grid[j])
                << ',' << fmt(curve[j]) << '\n';
        }
    }
    fs::create_directories(c.out_dir);
    write_text(fs::path(c.out_dir) / "reconstruction.csv", out.str());
    write_config_echo(c);
}

void cmd_simulate(const RunConfig& c) {
    rfpca_sim_config sim;
    rfpca_sim_config_init(&sim);
    sim.score_family = parse_family(c.family);
    sim.num_basis = c.num_basis;
    sim.contamination_prob = c.contamination;
    if (c.family == "beta10") sim.contamination_prob = 0.10;
    if (c.family == "beta20") sim.contamination_prob = 0.20;
    sim.noise_sd = c.noise_sd;
    sim.n = c.n;
    sim.m = c.m;
    sim.seed = c.seed;
    rfpca_dataset* raw = nullptr;
    check(rfpca_simulate(&sim, &raw));
    DatasetHandle data;
    data.ptr = raw;
    fs::create_directories(c.out_dir);
    save_dataset(fs::path(c.out_dir) / "dataset.csv", data.ptr);
    write_config_echo(c);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust functional principal component analysis"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;

    // Global flags, attached to every subcommand so they may appear after it.
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", cfg.seed, "RNG seed");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--threads", cfg.threads, "worker threads (advisory)");
        sub->add_option("--loss", cfg.loss,
                        "square|smooth-abs|log-cosh|arctan (rho0..rho3)");
        sub->add_option("--kappa", cfg.kappa, "smooth-abs transition width");
        sub->add_flag("--tune-kappa", cfg.tune_kappa,
                      "cross-validate kappa (forces smooth-abs)");
        sub->add_option("--kernel", cfg.kernel, "tricube|epanechnikov");
        sub->add_option("--grid-size", cfg.grid_size, "evaluation grid size");
        sub->add_option("--folds", cfg.folds, "CV fold count");
        sub->add_flag("--split-sample", cfg.split_sample,
                      "half-sample mean / half-sample covariance");
        sub->add_flag("--rescale-time", cfg.rescale_time,
                      "map observed time range onto [0,1]");
        return sub;
    };

    auto* fit = add_common(app.add_subcommand("fit", "full pipeline fit"));
    fit->add_option("--data", cfg.data_path, "input CSV")->required();

    auto* scores =
        add_common(app.add_subcommand("scores", "fit and export scores only"));
    scores->add_option("--data", cfg.data_path, "input CSV")->required();

    auto* rec = add_common(
        app.add_subcommand("reconstruct", "fit and export reconstructions"));
    rec->add_option("--data", cfg.data_path, "input CSV")->required();
    rec->add_option("--components", cfg.components,
                    "components to use (0 = all retained)");

    auto* sim = add_common(app.add_subcommand("simulate", "sample a dataset"));
    sim->add_option("--family", cfg.family,
                    "normal|student-t|sln|beta|beta10|beta20|degenerate");
    sim->add_option("--n", cfg.n, "subjects");
    sim->add_option("--m", cfg.m, "observations per subject");
    sim->add_option("--num-basis", cfg.num_basis, "basis functions");
    sim->add_option("--contamination", cfg.contamination, "outlier probability");
    sim->add_option("--noise-sd", cfg.noise_sd, "additive noise sd");

    auto* rep = add_common(
        app.add_subcommand("reproduce", "simulation-table reproduction"));
    rep->add_option("--table", cfg.table, "mean|covariance");
    rep->add_option("--cell", cfg.cells,
                    "loss[,-tuned],family,n,m[,alpha] (repeatable)");
    rep->add_option("--runs", cfg.runs, "Monte Carlo runs per cell");
    rep->add_option("--oracle-samples", cfg.oracle_samples,
                    "truth Monte Carlo samples per rep");
    rep->add_option("--oracle-reps", cfg.oracle_reps, "truth replications");
    rep->add_flag("--contaminate-truth", cfg.contaminate_truth,
                  "compute the truth on the contaminated population");

    auto* plot = add_common(app.add_subcommand("plot", "render an SVG plot"));
    plot->add_option("--kind", cfg.kind, "mean|eigen|loss");
    plot->add_option("--input", cfg.input_path, "artifact CSV (mean|eigen)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    }

    CLI::App* sub = app.get_subcommands().front();
    cfg.command = sub->get_name();

    try {
        // Precedence CLI > file > defaults: reload file values only for flags
        // the user did not pass, then re-parse the command line on top.
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw InputError("cannot open config: " + config_path);
            json j;
            try {
                in >> j;
            } catch (const json::exception& e) {
                throw InputError(config_path + ": " + e.what());
            }
            const auto take = [&](const char* key, auto& slot,
                                  const std::string& flag) {
                if (j.contains(key) && sub->count(flag) == 0) {
                    j.at(key).get_to(slot);
                }
            };
            take("seed", cfg.seed, "--seed");
            take("out", cfg.out_dir, "--out");
            take("threads", cfg.threads, "--threads");
            take("loss", cfg.loss, "--loss");
            take("kappa", cfg.kappa, "--kappa");
            take("tune_kappa", cfg.tune_kappa, "--tune-kappa");
            take("kernel", cfg.kernel, "--kernel");
            take("grid_size", cfg.grid_size, "--grid-size");
            take("folds", cfg.folds, "--folds");
            take("split_sample", cfg.split_sample, "--split-sample");
            take("rescale_time", cfg.rescale_time, "--rescale-time");
            take("data", cfg.data_path, "--data");
            take("family", cfg.family, "--family");
            take("n", cfg.n, "--n");
            take("m", cfg.m, "--m");
            take("num_basis", cfg.num_basis, "--num-basis");
            take("contamination", cfg.contamination, "--contamination");
            take("noise_sd", cfg.noise_sd, "--noise-sd");
            take("table", cfg.table, "--table");
            take("runs", cfg.runs, "--runs");
            take("cells", cfg.cells, "--cell");
            take("oracle_samples", cfg.oracle_samples, "--oracle-samples");
            take("oracle_reps", cfg.oracle_reps, "--oracle-reps");
            take("contaminate_truth", cfg.contaminate_truth,
                 "--contaminate-truth");
            take("kind", cfg.kind, "--kind");
            take("input", cfg.input_path, "--input");
            take("components", cfg.components, "--components");
        }
        if (cfg.tune_kappa) cfg.loss = "smooth-abs";

        if (cfg.command == "fit") {
            cmd_fit(cfg, false);
        } else if (cfg.command == "scores") {
            cmd_fit(cfg, true);
        } else if (cfg.command == "reconstruct") {
            cmd_reconstruct(cfg);
        } else if (cfg.command == "simulate") {
            cmd_simulate(cfg);
        } else if (cfg.command == "reproduce") {
            cmd_reproduce(cfg);
        } else if (cfg.command == "plot") {
            cmd_plot(cfg);
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NumericFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}
