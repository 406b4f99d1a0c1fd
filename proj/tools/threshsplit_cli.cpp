#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "threshsplit/bandwidth.hpp"
#include "threshsplit/contour.hpp"
#include "threshsplit/dataset.hpp"
#include "threshsplit/errors.hpp"
#include "threshsplit/inference.hpp"
#include "threshsplit/kernels.hpp"
#include "threshsplit/local_threshold.hpp"
#include "threshsplit/simulation.hpp"
#include "threshsplit/threads.hpp"
#include "threshsplit/two_step.hpp"
#include "threshsplit/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace threshsplit;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

json to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw ParseError("write failed: " + path.string());
}

void write_json_file(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

// Shared state assembled from the command line.
struct CliContext {
    std::string out_dir = ".";
    std::vector<std::string> argv;
    json config;
    std::vector<std::string> outputs;

    fs::path out(const std::string& name) {
        outputs.push_back(name);
        return fs::path(out_dir) / name;
    }

    void write_manifest(const std::string& subcommand, std::uint64_t seed_or_zero) {
        json m;
        m["version"] = kVersion;
        m["subcommand"] = subcommand;
        m["argv"] = argv;
        m["config"] = config;
        m["seed"] = seed_or_zero;
        m["outputs"] = outputs;
        write_json_file(fs::path(out_dir) / "manifest.json", m);
    }
};

struct DataOpts {
    std::string path;
    std::string y = "y";
    std::vector<std::string> x;
    std::string q = "q";
    std::string s = "s";
    bool no_intercept = false;
    bool no_standardize = false;
};

struct FitOpts {
    std::string kernel = "gaussian";
    double c = 0.0;      // bandwidth constant, b_n = c * n^(-1/2)
    double b_n = 0.0;    // explicit bandwidth
    double trim_lo = 0.05;
    double trim_hi = 0.95;
    double coverage = 0.7;
    std::size_t grid_size = 100;
    std::string grid_mode = "equal";
    double pi_n = -1.0;  // negative means the (n b_n)^(-1/2) default
    std::size_t threads = 0;
};

void add_data_opts(CLI::App* sub, DataOpts& d) {
    sub->add_option("--data", d.path, "input CSV file")->required();
    sub->add_option("--y", d.y, "response column name");
    sub->add_option("--x", d.x, "regressor column names (repeatable)");
    sub->add_option("--q", d.q, "threshold variable column name");
    sub->add_option("--s", d.s, "splitting covariate column name");
    sub->add_flag("--no-intercept", d.no_intercept, "do not prepend a constant column");
    sub->add_flag("--no-standardize", d.no_standardize, "keep q and s in raw units");
}

void add_fit_opts(CLI::App* sub, FitOpts& f, bool bandwidth_required = true) {
    auto* grp = sub->add_option_group("bandwidth", "bandwidth choice");
    grp->add_option("--c", f.c, "bandwidth constant in b_n = c*n^(-1/2)")
        ->check(CLI::PositiveNumber);
    grp->add_option("--b-n", f.b_n, "bandwidth value")->check(CLI::PositiveNumber);
    if (bandwidth_required) grp->require_option(1);
    sub->add_option("--kernel", f.kernel, "kernel family")
        ->check(CLI::IsMember({"gaussian", "uniform", "epanechnikov"}));
    sub->add_option("--trim-lo", f.trim_lo, "lower candidate trim quantile");
    sub->add_option("--trim-hi", f.trim_hi, "upper candidate trim quantile");
    sub->add_option("--coverage", f.coverage, "quantile coverage of the evaluation window");
    sub->add_option("--grid-size", f.grid_size, "evaluation grid size");
    sub->add_option("--grid-mode", f.grid_mode, "grid placement")
        ->check(CLI::IsMember({"equal", "observed"}));
    sub->add_option("--pi", f.pi_n, "truncation margin override");
    sub->add_option("--threads", f.threads, "worker threads (0 = auto)");
}

Dataset load_data(const DataOpts& d) {
    ColumnMap cols;
    cols.y = d.y;
    cols.x = d.x;
    cols.q = d.q;
    cols.s = d.s;
    cols.add_intercept = !d.no_intercept;
    return load_csv_dataset(d.path, cols, !d.no_standardize);
}

double resolve_bandwidth(const FitOpts& f, Eigen::Index n) {
    if (f.b_n > 0.0) return f.b_n;
    return f.c / std::sqrt(static_cast<double>(n));
}

json data_config(const DataOpts& d) {
    return json{{"data", d.path}, {"y", d.y},
                {"x", d.x},       {"q", d.q},
                {"s", d.s},       {"add_intercept", !d.no_intercept},
                {"standardize", !d.no_standardize}};
}

json fit_config(const FitOpts& f, double b_n) {
    return json{{"kernel", f.kernel},     {"c", f.c},
                {"b_n", b_n},             {"trim_lo", f.trim_lo},
                {"trim_hi", f.trim_hi},   {"coverage", f.coverage},
                {"grid_size", f.grid_size}, {"grid_mode", f.grid_mode},
                {"threads", f.threads}};
}

json norm_json(const NormMeta& norm) {
    return json{{"standardized", norm.standardized},
                {"q_mean", norm.q_mean},
                {"q_sd", norm.q_sd},
                {"s_mean", norm.s_mean},
                {"s_sd", norm.s_sd}};
}

EvalWindow build_window(const Dataset& data, const FitOpts& f) {
    const GridMode mode = f.grid_mode == "observed" ? GridMode::observed : GridMode::equal;
    const std::size_t n_grid =
        mode == GridMode::observed
            ? std::min<std::size_t>(f.grid_size, static_cast<std::size_t>(data.n()))
            : f.grid_size;
    return make_eval_window(data, f.coverage, n_grid, mode);
}

json theta_json(const ThetaEstimate& theta) {
    return json{{"beta_hat", to_json(theta.beta_hat)},
                {"delta_star_hat", to_json(theta.delta_star_hat)},
                {"delta_hat", to_json(theta.delta_hat)},
                {"n_plus", theta.n_plus},
                {"n_minus", theta.n_minus},
                {"n_window", theta.n_window},
                {"n_curve_failed", theta.n_curve_failed},
                {"truncation_fraction", theta.truncation_fraction},
                {"pi_n", theta.pi_n}};
}

int run_estimate(CliContext& ctx, const DataOpts& dopt, const FitOpts& fopt,
                 double ci_level, bool with_vcov, std::size_t lag, bool adjusted) {
    const Dataset data = load_data(dopt);
    const KernelSpec kernel{parse_kernel_family(fopt.kernel)};
    const TrimSpec trim{fopt.trim_lo, fopt.trim_hi};
    const double b_n = resolve_bandwidth(fopt, data.n());
    const double pi_n = fopt.pi_n >= 0.0
                            ? fopt.pi_n
                            : truncation_pi_n(static_cast<std::size_t>(data.n()), b_n);

    const EvalWindow window = build_window(data, fopt);
    const ThresholdCurve curve =
        estimate_threshold_curve(data, window, b_n, kernel, trim, fopt.threads);
    const ThetaEstimate theta = estimate_theta(data, curve, window, pi_n);

    std::vector<ConfidenceSet> sets;
    if (ci_level > 0.0) {
        sets.reserve(curve.points.size());
        for (const auto& p : curve.points) {
            if (p.ok) {
                sets.push_back(invert_ci(data, p.s, b_n, kernel, trim, ci_level));
            } else {
                sets.push_back(ConfidenceSet{});
            }
        }
    }

    std::ostringstream csv;
    csv << "s,gamma_hat,sse,effective_n,ci_lo,ci_hi\n";
    for (std::size_t k = 0; k < curve.points.size(); ++k) {
        const auto& p = curve.points[k];
        csv << fmt(p.s) << "," << fmt(p.gamma_hat) << "," << fmt(p.sse_at_min) << ","
            << fmt(p.effective_n) << ",";
        if (ci_level > 0.0 && p.ok) {
            csv << fmt(sets[k].hull_lo) << "," << fmt(sets[k].hull_hi);
        } else {
            csv << ",";
        }
        csv << "\n";
    }
    write_text(ctx.out("curve.csv"), csv.str());

    json fit;
    fit["bandwidth"] = b_n;
    fit["kernel"] = fopt.kernel;
    fit["window"] = json{{"s0_lo", window.s0_lo},
                         {"s0_hi", window.s0_hi},
                         {"grid_size", window.grid.size()}};
    fit["n"] = data.n();
    fit["d"] = data.d();
    fit["n_failed_points"] = curve.n_failed();
    fit["norm_meta"] = norm_json(data.norm);
    fit["theta"] = theta_json(theta);
    if (ci_level > 0.0) fit["ci_level"] = ci_level;
    if (with_vcov) {
        VcovOptions vopts;
        vopts.lag_cutoff = lag;
        vopts.adjusted = adjusted;
        vopts.n_threads = fopt.threads;
        const VcovEstimate vc = theta_vcov(data, curve, window, theta, vopts);
        json se_beta = json::array(), se_delta = json::array(), se_dstar = json::array();
        const Eigen::Index d = data.d();
        for (Eigen::Index j = 0; j < d; ++j) {
            se_beta.push_back(std::sqrt(std::max(0.0, vc.vcov_theta_star(j, j))));
            se_dstar.push_back(std::sqrt(std::max(0.0, vc.vcov_theta_star(d + j, d + j))));
            se_delta.push_back(std::sqrt(std::max(0.0, vc.vcov_theta(d + j, d + j))));
        }
        fit["vcov"] = json{{"lag_cutoff", vc.lag_cutoff},
                           {"adjusted", vc.adjusted},
                           {"se_beta", se_beta},
                           {"se_delta_star", se_dstar},
                           {"se_delta", se_delta},
                           {"vcov_theta_star", to_json(vc.vcov_theta_star)},
                           {"vcov_theta", to_json(vc.vcov_theta)}};
    }
    write_json_file(ctx.out("fit.json"), fit);
    ctx.write_manifest("estimate", 0);
    return 0;
}

int run_test(CliContext& ctx, const DataOpts& dopt, const FitOpts& fopt, double s_at,
             double gamma_null, double level, const std::string& mode) {
    const Dataset data = load_data(dopt);
    const KernelSpec kernel{parse_kernel_family(fopt.kernel)};
    const TrimSpec trim{fopt.trim_lo, fopt.trim_hi};
    const double b_n = resolve_bandwidth(fopt, data.n());

    double xi = 0.0;
    TestMode tmode = TestMode::homoskedastic;
    if (mode == "scaled") {
        tmode = TestMode::scaled;
        const double pi_n = fopt.pi_n >= 0.0
                                ? fopt.pi_n
                                : truncation_pi_n(static_cast<std::size_t>(data.n()), b_n);
        const EvalWindow window = build_window(data, fopt);
        const ThresholdCurve curve =
            estimate_threshold_curve(data, window, b_n, kernel, trim, fopt.threads);
        const ThetaEstimate theta = estimate_theta(data, curve, window, pi_n);
        const Eigen::VectorXd resid = model_residuals(data, curve, theta);
        const LocalFitPoint at_s = estimate_gamma_at(data, s_at, b_n, kernel, trim);
        const NwBands bands = default_nw_bands(data, b_n);
        xi = xi_lr_hat(data, s_at, at_s.gamma_hat, theta.delta_hat, resid, bands, kernel);
    }
    const LRTestResult res =
        run_lr_test(data, s_at, b_n, kernel, trim, gamma_null, level, tmode, xi);

    json out;
    out["s"] = res.s;
    out["gamma_null"] = res.gamma_null;
    out["gamma_hat"] = res.gamma_hat;
    out["lr_stat"] = res.lr_stat;
    out["xi_lr_hat"] = res.xi_lr_hat;
    out["critical_value"] = res.critical_value;
    out["reject"] = res.reject;
    out["level"] = res.level;
    out["mode"] = mode;
    write_json_file(ctx.out("test.json"), out);
    ctx.write_manifest("test", 0);
    return 0;
}

int run_ci(CliContext& ctx, const DataOpts& dopt, const FitOpts& fopt, double level,
           const std::string& mode) {
    const Dataset data = load_data(dopt);
    const KernelSpec kernel{parse_kernel_family(fopt.kernel)};
    const TrimSpec trim{fopt.trim_lo, fopt.trim_hi};
    const double b_n = resolve_bandwidth(fopt, data.n());
    const EvalWindow window = build_window(data, fopt);

    // Scaled mode multiplies the critical value by xi_hat/kappa2 per point.
    ThresholdCurve curve;
    ThetaEstimate theta;
    Eigen::VectorXd resid;
    NwBands bands;
    const bool scaled = mode == "scaled";
    if (scaled) {
        const double pi_n = fopt.pi_n >= 0.0
                                ? fopt.pi_n
                                : truncation_pi_n(static_cast<std::size_t>(data.n()), b_n);
        curve = estimate_threshold_curve(data, window, b_n, kernel, trim, fopt.threads);
        theta = estimate_theta(data, curve, window, pi_n);
        resid = model_residuals(data, curve, theta);
        bands = default_nw_bands(data, b_n);
    }

    std::ostringstream csv;
    csv << "s,gamma_hat,hull_lo,hull_hi,n_accepted\n";
    std::size_t n_failed = 0;
    for (double s_at : window.grid) {
        try {
            double scale = 1.0;
            if (scaled) {
                const LocalFitPoint at_s = estimate_gamma_at(data, s_at, b_n, kernel, trim);
                const double xi = xi_lr_hat(data, s_at, at_s.gamma_hat, theta.delta_hat,
                                            resid, bands, kernel);
                scale = xi / kappa2(kernel);
            }
            const ConfidenceSet set = invert_ci(data, s_at, b_n, kernel, trim, level, scale);
            csv << fmt(set.s) << "," << fmt(set.gamma_hat) << "," << fmt(set.hull_lo) << ","
                << fmt(set.hull_hi) << "," << set.accepted.size() << "\n";
        } catch (const Error&) {
            ++n_failed;
            csv << fmt(s_at) << ",,,,0\n";
        }
    }
    write_text(ctx.out("ci.csv"), csv.str());

    json out;
    out["level"] = level;
    out["mode"] = mode;
    out["grid_size"] = window.grid.size();
    out["n_failed_points"] = n_failed;
    out["norm_meta"] = norm_json(data.norm);
    write_json_file(ctx.out("ci.json"), out);
    ctx.write_manifest("ci", 0);
    return 0;
}

// Grid spec: "lo:hi:N" (linear), "lo:hi:Nlog", or a comma-separated list.
std::vector<double> parse_c_grid(const std::string& spec) {
    std::vector<double> grid;
    if (spec.find(':') != std::string::npos) {
        std::istringstream in(spec);
        std::string lo_s, hi_s, n_s;
        if (!std::getline(in, lo_s, ':') || !std::getline(in, hi_s, ':') ||
            !std::getline(in, n_s)) {
            throw UsageError("grid spec must be lo:hi:N, lo:hi:Nlog, or a comma list");
        }
        bool log_spaced = false;
        if (n_s.size() >= 3 && n_s.substr(n_s.size() - 3) == "log") {
            log_spaced = true;
            n_s = n_s.substr(0, n_s.size() - 3);
        }
        double lo = 0, hi = 0;
        long count = 0;
        try {
            lo = std::stod(lo_s);
            hi = std::stod(hi_s);
            count = std::stol(n_s);
        } catch (const std::exception&) {
            throw UsageError("invalid grid spec: " + spec);
        }
        if (!(lo > 0.0 && hi > lo && count >= 1)) throw UsageError("invalid grid spec: " + spec);
        if (log_spaced) return default_c_grid(lo, hi, static_cast<std::size_t>(count));
        if (count == 1) return {lo};
        for (long k = 0; k < count; ++k) {
            grid.push_back(lo + (hi - lo) * static_cast<double>(k) /
                                    static_cast<double>(count - 1));
        }
        return grid;
    }
    std::istringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            grid.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError("invalid grid value: " + item);
        }
    }
    if (grid.empty()) throw UsageError("empty grid spec");
    for (double c : grid) {
        if (!(c > 0.0)) throw UsageError("grid values must be positive");
    }
    return grid;
}

int run_cv(CliContext& ctx, const DataOpts& dopt, const FitOpts& fopt,
           const std::string& grid_spec) {
    const Dataset data = load_data(dopt);
    const KernelSpec kernel{parse_kernel_family(fopt.kernel)};
    const TrimSpec trim{fopt.trim_lo, fopt.trim_hi};
    const EvalWindow window = build_window(data, fopt);
    const std::vector<double> grid = parse_c_grid(grid_spec);

    const CVResult cv = select_bandwidth(data, window, grid, kernel, trim, fopt.threads);

    std::ostringstream csv;
    csv << "c,criterion\n";
    for (std::size_t k = 0; k < cv.c_grid.size(); ++k) {
        csv << fmt(cv.c_grid[k]) << ",";
        if (std::isfinite(cv.criterion[k])) {
            csv << fmt(cv.criterion[k]);
        } else {
            csv << "inf";
        }
        csv << "\n";
    }
    write_text(ctx.out("cv.csv"), csv.str());

    json out;
    out["c_star"] = cv.c_star;
    out["b_n_star"] = cv.b_n_star;
    out["c_grid"] = cv.c_grid;
    json crit = json::array();
    for (double v : cv.criterion) {
        if (std::isfinite(v)) {
            crit.push_back(v);
        } else {
            crit.push_back(nullptr);
        }
    }
    out["criterion"] = crit;
    write_json_file(ctx.out("cv.json"), out);
    ctx.write_manifest("cv", 0);
    return 0;
}

int run_contour(CliContext& ctx, const std::string& raster_path, bool origin_flip,
                const std::string& center_spec, std::size_t angles, const FitOpts& fopt) {
    std::size_t row = 0, col = 0;
    {
        std::istringstream in(center_spec);
        std::string a, b;
        if (!std::getline(in, a, ',') || !std::getline(in, b)) {
            throw UsageError("center must be row,col (1-based from the bottom row)");
        }
        try {
            row = static_cast<std::size_t>(std::stoul(a));
            col = static_cast<std::size_t>(std::stoul(b));
        } catch (const std::exception&) {
            throw UsageError("invalid center: " + center_spec);
        }
    }

    const RasterGrid grid = load_raster_grid(raster_path, origin_flip);
    if (row < 1 || col < 1 || row > static_cast<std::size_t>(grid.n_rows()) ||
        col > static_cast<std::size_t>(grid.n_cols())) {
        throw UsageError("center lies outside the raster");
    }
    const Dataset flat = grid.flatten();
    const double center_q = grid.q_of_row(static_cast<Eigen::Index>(row) - 1);
    const double center_s = grid.s_of_col(static_cast<Eigen::Index>(col) - 1);

    Dataset centered = flat;
    centered.q.array() -= center_q;
    centered.s.array() -= center_s;

    const KernelSpec kernel{parse_kernel_family(fopt.kernel)};
    const TrimSpec trim{fopt.trim_lo, fopt.trim_hi};
    const double b_n = resolve_bandwidth(fopt, centered.n());

    ContourEstimate contour =
        estimate_contour(centered, angles, b_n, kernel, trim, fopt.threads);
    contour.center_q = center_q;
    contour.center_s = center_s;

    std::ostringstream csv;
    csv << "angle_deg,radius,x,y\n";
    for (std::size_t k = 0; k < contour.angles_deg.size(); ++k) {
        csv << fmt(contour.angles_deg[k]) << ",";
        if (std::isnan(contour.radius_hat[k])) {
            csv << ",,";
        } else {
            const RotatedPoint p = contour.boundary_point(k);
            csv << fmt(contour.radius_hat[k]) << "," << fmt(center_s + p.s) << ","
                << fmt(center_q + p.q);
        }
        csv << "\n";
    }
    write_text(ctx.out("contour.csv"), csv.str());

    // Where the fitted inside level sits within the raster's intensities.
    double quantile = std::numeric_limits<double>::quiet_NaN();
    {
        std::size_t below = 0;
        for (Eigen::Index i = 0; i < flat.n(); ++i) {
            if (flat.y(i) <= contour.inner_mean) ++below;
        }
        quantile = static_cast<double>(below) / static_cast<double>(flat.n());
    }

    json out;
    out["inner_mean"] = contour.inner_mean;
    out["outer_mean"] = contour.outer_mean;
    out["inner_mean_quantile"] = quantile;
    out["n_angles"] = contour.angles_deg.size();
    out["n_failed"] = contour.n_failed;
    out["center"] = json{{"row", row}, {"col", col}, {"q", center_q}, {"s", center_s}};
    try {
        out["area"] = contour_area(contour);
    } catch (const Error&) {
        out["area"] = nullptr;
    }
    write_json_file(ctx.out("contour.json"), out);
    ctx.write_manifest("contour", 0);
    return 0;
}

struct SimulateOpts {
    std::string study;
    std::size_t n = 200;
    double delta = 2.0;
    double rho = 0.0;
    std::size_t m = 10;
    double c = 0.5;
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    std::vector<double> eval_s;
    double level = 0.95;
    bool adjusted = false;
    std::string mode = "zeta";
    double R = 0.0;
    double dr = 0.0;
    bool no_bridge = false;
    double varrho = 1.0;
    double slope = 0.0;
    double xi = 1.0;
    std::string kernel = "gaussian";
    std::string out = "report.json";
    std::size_t threads = 0;
};

json report_json(const SimReport& report) {
    json cells = json::array();
    for (const auto& cell : report.cells) {
        cells.push_back(json{{"label", cell.label},
                             {"value", cell.value},
                             {"n_ok", cell.n_ok},
                             {"n_failed", cell.n_failed}});
    }
    return json{{"cells", cells},
                {"reps_used", report.reps_used},
                {"runtime_seconds", report.runtime_seconds}};
}

int run_simulate(CliContext& ctx, const SimulateOpts& opt) {
    SimConfig cfg;
    cfg.n = opt.n;
    cfg.delta = opt.delta;
    cfg.rho = opt.rho;
    cfg.m = opt.m;
    cfg.c_bandwidth = opt.c;
    cfg.reps = opt.reps;
    cfg.seed = opt.seed;
    cfg.n_threads = opt.threads;
    if (!opt.eval_s.empty()) cfg.eval_s = opt.eval_s;

    json out;
    out["study"] = opt.study;
    if (opt.study == "rejection") {
        const SimReport report = run_rejection_study(cfg, opt.level);
        out["report"] = report_json(report);
        out["config"] = json{{"n", cfg.n},     {"delta", cfg.delta}, {"rho", cfg.rho},
                             {"m", cfg.m},     {"c", cfg.c_bandwidth},
                             {"level", opt.level}, {"eval_s", cfg.eval_s}};
    } else if (opt.study == "coverage") {
        const SimReport report = run_coverage_study(cfg, opt.adjusted, opt.level);
        out["report"] = report_json(report);
        out["config"] = json{{"n", cfg.n}, {"delta", cfg.delta},
                             {"rho", cfg.rho}, {"m", cfg.m},
                             {"c", cfg.c_bandwidth}, {"level", opt.level},
                             {"adjusted", opt.adjusted}};
    } else {
        const KernelSpec kernel{parse_kernel_family(opt.kernel)};
        if (opt.mode == "zeta") {
            const double R = opt.R > 0.0 ? opt.R : 100.0;
            const double dr = opt.dr > 0.0 ? opt.dr : 0.05;
            const std::vector<double> samples =
                simulate_argmax_zeta(R, dr, opt.reps, opt.seed, !opt.no_bridge, opt.threads);
            double mean = 0.0;
            for (double v : samples) mean += v;
            mean /= static_cast<double>(samples.size());
            json cdf = json::array();
            for (double z : {1.268, 2.074, 2.988}) {
                std::size_t below = 0;
                for (double v : samples) {
                    if (v <= z) ++below;
                }
                cdf.push_back(json{{"z", z},
                                   {"empirical",
                                    static_cast<double>(below) /
                                        static_cast<double>(samples.size())},
                                   {"analytic", zeta_null_cdf(z)}});
            }
            out["report"] = json{{"mode", "zeta"},
                                 {"reps", samples.size()},
                                 {"mean", mean},
                                 {"cdf", cdf},
                                 {"R", R},
                                 {"dr", dr},
                                 {"bridge_correction", !opt.no_bridge}};
        } else {
            DriftParams p;
            p.varrho = opt.varrho;
            p.gamma0_slope = opt.slope;
            p.xi = opt.xi;
            p.kernel = kernel;
            const double dr = opt.dr > 0.0 ? opt.dr : 0.01;
            const std::vector<double> samples =
                simulate_argmax_drift(p, opt.reps, opt.seed, opt.R, dr, opt.threads);
            double mean = 0.0, m2 = 0.0;
            for (double v : samples) mean += v;
            mean /= static_cast<double>(samples.size());
            for (double v : samples) m2 += (v - mean) * (v - mean);
            out["report"] = json{{"mode", "drift"},
                                 {"reps", samples.size()},
                                 {"mean", mean},
                                 {"variance", m2 / static_cast<double>(samples.size())},
                                 {"varrho", opt.varrho},
                                 {"gamma0_slope", opt.slope},
                                 {"xi", opt.xi},
                                 {"dr", dr}};
        }
    }
    write_json_file(fs::path(ctx.out_dir) / opt.out, out);
    ctx.outputs.push_back(opt.out);
    ctx.write_manifest("simulate", opt.seed);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"threshold regression with a nonparametrically varying split"};
    app.require_subcommand(1);

    DataOpts dopt;
    FitOpts fopt;

    // estimate
    auto* est = app.add_subcommand("estimate", "fit the threshold curve and regime coefficients");
    est->fallthrough();
    DataOpts est_d;
    FitOpts est_f;
    double est_ci_level = 0.0;
    bool est_vcov = false, est_adjusted = false;
    std::size_t est_lag = 5;
    add_data_opts(est, est_d);
    add_fit_opts(est, est_f);
    est->add_option("--ci-level", est_ci_level, "add inverted CI hull columns at this level");
    est->add_flag("--vcov", est_vcov, "report the spatially robust coefficient variance");
    est->add_option("--lag", est_lag, "spatial lag cutoff for the variance");
    est->add_flag("--adjusted", est_adjusted, "apply the truncation-fraction adjustment");

    // test
    auto* tst = app.add_subcommand("test", "pointwise likelihood-ratio test");
    tst->fallthrough();
    DataOpts tst_d;
    FitOpts tst_f;
    double tst_s = 0.0, tst_gamma = 0.0, tst_level = 0.95;
    std::string tst_mode = "homoskedastic";
    add_data_opts(tst, tst_d);
    add_fit_opts(tst, tst_f);
    tst->add_option("--s-at", tst_s, "evaluation point")->required();
    tst->add_option("--gamma-null", tst_gamma, "null threshold value")->required();
    tst->add_option("--level", tst_level, "test level");
    tst->add_option("--mode", tst_mode, "critical value scaling")
        ->check(CLI::IsMember({"homoskedastic", "scaled"}));

    // ci
    auto* civ = app.add_subcommand("ci", "confidence sets by test inversion over the grid");
    civ->fallthrough();
    DataOpts civ_d;
    FitOpts civ_f;
    double civ_level = 0.95;
    std::string civ_mode = "homoskedastic";
    add_data_opts(civ, civ_d);
    add_fit_opts(civ, civ_f);
    civ->add_option("--level", civ_level, "confidence level");
    civ->add_option("--mode", civ_mode, "critical value scaling")
        ->check(CLI::IsMember({"homoskedastic", "scaled"}));

    // cv
    auto* cvs = app.add_subcommand("cv", "leave-one-out bandwidth selection");
    cvs->fallthrough();
    DataOpts cvs_d;
    FitOpts cvs_f;
    std::string cvs_grid = "0.25:8:16log";
    add_data_opts(cvs, cvs_d);
    add_fit_opts(cvs, cvs_f, false);
    cvs->add_option("--grid", cvs_grid, "c grid: lo:hi:N, lo:hi:Nlog, or comma list");

    // contour
    auto* cnt = app.add_subcommand("contour", "closed-boundary estimation on a raster");
    cnt->fallthrough();
    FitOpts cnt_f;
    std::string cnt_raster, cnt_center;
    bool cnt_flip = false;
    std::size_t cnt_angles = 500;
    cnt->add_option("--raster", cnt_raster, "raster CSV (numeric matrix, no header)")
        ->required();
    cnt->add_flag("--origin-flip", cnt_flip, "first file row is the top (north) row");
    cnt->add_option("--center", cnt_center, "row,col of the center, 1-based from the bottom")
        ->required();
    cnt->add_option("--angles", cnt_angles, "number of rotation angles");
    add_fit_opts(cnt, cnt_f);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte Carlo studies and limit-law samplers");
    sim->fallthrough();
    SimulateOpts sopt;
    sim->add_option("--study", sopt.study, "study kind")
        ->required()
        ->check(CLI::IsMember({"rejection", "coverage", "argmax"}));
    sim->add_option("--n", sopt.n, "sample size");
    sim->add_option("--delta", sopt.delta, "regime shift size");
    sim->add_option("--rho", sopt.rho, "noise dependence parameter");
    sim->add_option("--m", sopt.m, "dependence radius scaler");
    sim->add_option("--c", sopt.c, "bandwidth constant")->check(CLI::PositiveNumber);
    sim->add_option("--reps", sopt.reps, "replications")->check(CLI::PositiveNumber);
    sim->add_option("--seed", sopt.seed, "RNG seed");
    sim->add_option("--eval-s", sopt.eval_s, "evaluation points (repeatable)");
    sim->add_option("--level", sopt.level, "nominal level");
    sim->add_flag("--adjusted", sopt.adjusted, "truncation-fraction LRV adjustment");
    sim->add_option("--mode", sopt.mode, "argmax sampler mode")
        ->check(CLI::IsMember({"zeta", "drift"}));
    sim->add_option("--R", sopt.R, "grid half width");
    sim->add_option("--dr", sopt.dr, "grid step");
    sim->add_flag("--no-bridge", sopt.no_bridge, "disable the within-interval max correction");
    sim->add_option("--varrho", sopt.varrho, "drift intensity parameter");
    sim->add_option("--slope", sopt.slope, "threshold slope at the evaluation point");
    sim->add_option("--xi", sopt.xi, "local scale parameter");
    sim->add_option("--kernel", sopt.kernel, "kernel family")
        ->check(CLI::IsMember({"gaussian", "uniform", "epanechnikov"}));
    sim->add_option("--out", sopt.out, "report file name");
    sim->add_option("--threads", sopt.threads, "worker threads (0 = auto)");

    std::string out_dir = ".";
    app.add_option("--out-dir", out_dir, "directory for outputs")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    CliContext ctx;
    ctx.out_dir = out_dir;
    for (int i = 0; i < argc; ++i) ctx.argv.push_back(argv[i]);

    try {
        fs::create_directories(out_dir);
        if (est->parsed()) {
            ctx.config = data_config(est_d);
            ctx.config.update(fit_config(est_f, est_f.b_n));
            return run_estimate(ctx, est_d, est_f, est_ci_level, est_vcov, est_lag,
                                est_adjusted);
        }
        if (tst->parsed()) {
            ctx.config = data_config(tst_d);
            ctx.config.update(fit_config(tst_f, tst_f.b_n));
            ctx.config["s_at"] = tst_s;
            ctx.config["gamma_null"] = tst_gamma;
            ctx.config["level"] = tst_level;
            ctx.config["mode"] = tst_mode;
            return run_test(ctx, tst_d, tst_f, tst_s, tst_gamma, tst_level, tst_mode);
        }
        if (civ->parsed()) {
            ctx.config = data_config(civ_d);
            ctx.config.update(fit_config(civ_f, civ_f.b_n));
            ctx.config["level"] = civ_level;
            ctx.config["mode"] = civ_mode;
            return run_ci(ctx, civ_d, civ_f, civ_level, civ_mode);
        }
        if (cvs->parsed()) {
            ctx.config = data_config(cvs_d);
            ctx.config["grid"] = cvs_grid;
            ctx.config["kernel"] = cvs_f.kernel;
            return run_cv(ctx, cvs_d, cvs_f, cvs_grid);
        }
        if (cnt->parsed()) {
            ctx.config = json{{"raster", cnt_raster},
                              {"center", cnt_center},
                              {"angles", cnt_angles},
                              {"origin_flip", cnt_flip},
                              {"kernel", cnt_f.kernel},
                              {"c", cnt_f.c},
                              {"b_n", cnt_f.b_n}};
            return run_contour(ctx, cnt_raster, cnt_flip, cnt_center, cnt_angles, cnt_f);
        }
        if (sim->parsed()) {
            ctx.config = json{{"study", sopt.study}, {"n", sopt.n},
                              {"delta", sopt.delta}, {"rho", sopt.rho},
                              {"m", sopt.m},         {"c", sopt.c},
                              {"reps", sopt.reps},   {"seed", sopt.seed},
                              {"mode", sopt.mode}};
            return run_simulate(ctx, sopt);
        }
        throw UsageError("no subcommand selected");
    } catch (const UsageError& e) {
        std::cerr << json{{"error", {{"type", "usage"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << json{{"error", {{"type", "compute"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"type", "internal"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 1;
    }
}
