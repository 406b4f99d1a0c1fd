#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <utility>

#include "threshsplit/bandwidth.hpp"
#include "threshsplit/contour.hpp"
#include "threshsplit/dataset.hpp"
#include "threshsplit/errors.hpp"
#include "threshsplit/inference.hpp"
#include "threshsplit/kernels.hpp"
#include "threshsplit/local_threshold.hpp"
#include "threshsplit/rng.hpp"
#include "threshsplit/simulation.hpp"
#include "threshsplit/two_step.hpp"
#include "threshsplit/version.hpp"

namespace py = pybind11;
using namespace threshsplit;

// Long-running entry points release the GIL; everything they touch is plain
// C++ state, and python callbacks reacquire it through the functional caster.
using release_gil = py::call_guard<py::gil_scoped_release>;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Two-regime threshold regression where the split point is a "
              "nonparametric function of an observed covariate: local "
              "estimation, truncated two-step slopes, pointwise tests and "
              "confidence sets, spatially robust covariances, bandwidth "
              "selection, contour extraction, and seeded simulation studies.";
    m.attr("__version__") = kVersion;

    // All library failures derive from one base so callers catch one type.
    py::register_exception<Error>(m, "ThreshsplitError");

    // ---- kernels ----
    py::enum_<KernelFamily>(m, "KernelFamily")
        .value("gaussian", KernelFamily::gaussian)
        .value("uniform", KernelFamily::uniform)
        .value("epanechnikov", KernelFamily::epanechnikov);

    py::class_<KernelSpec>(m, "KernelSpec")
        .def(py::init<>())
        .def(py::init([](KernelFamily f) { return KernelSpec{f}; }), py::arg("family"))
        .def(py::init([](const std::string& name) {
                 return KernelSpec{parse_kernel_family(name)};
             }),
             py::arg("family"))
        .def_readwrite("family", &KernelSpec::family)
        .def("support_radius", &KernelSpec::support_radius)
        .def("__repr__", [](const KernelSpec& k) {
            return "KernelSpec('" + kernel_family_name(k.family) + "')";
        });
    py::implicitly_convertible<KernelFamily, KernelSpec>();
    py::implicitly_convertible<std::string, KernelSpec>();

    m.def("eval_kernel", &eval_kernel, py::arg("kernel"), py::arg("v"));
    m.def("product_kernel", &product_kernel, py::arg("kernel"), py::arg("u"), py::arg("v"));
    m.def("kappa2", &kappa2, py::arg("kernel"),
          "Integral of the squared kernel, closed form per family.");

    // ---- data handling ----
    py::class_<NormMeta>(m, "NormMeta")
        .def(py::init<>())
        .def_readwrite("standardized", &NormMeta::standardized)
        .def_readwrite("q_mean", &NormMeta::q_mean)
        .def_readwrite("q_sd", &NormMeta::q_sd)
        .def_readwrite("s_mean", &NormMeta::s_mean)
        .def_readwrite("s_sd", &NormMeta::s_sd);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def(py::init([](Eigen::VectorXd y, Eigen::MatrixXd X, Eigen::VectorXd q,
                         Eigen::VectorXd s) {
                 if (X.rows() != y.size() || q.size() != y.size() || s.size() != y.size())
                     throw ShapeError("Dataset: y, X rows, q, s must share one length");
                 Dataset data;
                 data.y = std::move(y);
                 data.X = std::move(X);
                 data.q = std::move(q);
                 data.s = std::move(s);
                 return data;
             }),
             py::arg("y"), py::arg("X"), py::arg("q"), py::arg("s"))
        .def_readwrite("y", &Dataset::y)
        .def_readwrite("X", &Dataset::X)
        .def_readwrite("q", &Dataset::q)
        .def_readwrite("s", &Dataset::s)
        .def_readwrite("norm", &Dataset::norm)
        .def_property_readonly("n", &Dataset::n)
        .def_property_readonly("d", &Dataset::d)
        .def("__repr__", [](const Dataset& d) {
            return "Dataset(n=" + std::to_string(d.n()) + ", d=" + std::to_string(d.d()) + ")";
        });

    py::class_<ColumnMap>(m, "ColumnMap")
        .def(py::init<>())
        .def_readwrite("y", &ColumnMap::y)
        .def_readwrite("x", &ColumnMap::x)
        .def_readwrite("q", &ColumnMap::q)
        .def_readwrite("s", &ColumnMap::s)
        .def_readwrite("add_intercept", &ColumnMap::add_intercept);

    m.def("load_csv_dataset", &load_csv_dataset, py::arg("path"),
          py::arg("columns") = ColumnMap{}, py::arg("standardize") = true);
    m.def("write_csv_dataset", &write_csv_dataset, py::arg("data"), py::arg("path"));
    m.def("standardize_dataset", &standardize_dataset, py::arg("data"),
          "Centers and scales q and s by sample moments; idempotent.");
    m.def(
        "empirical_quantile",
        [](const Eigen::VectorXd& values, double p) { return empirical_quantile(values, p); },
        py::arg("values"), py::arg("p"));

    py::enum_<GridMode>(m, "GridMode")
        .value("equal", GridMode::equal)
        .value("observed", GridMode::observed);

    py::class_<EvalWindow>(m, "EvalWindow")
        .def(py::init<>())
        .def(py::init([](double lo, double hi, std::vector<double> grid) {
                 return EvalWindow{lo, hi, std::move(grid)};
             }),
             py::arg("s0_lo"), py::arg("s0_hi"), py::arg("grid"))
        .def_readwrite("s0_lo", &EvalWindow::s0_lo)
        .def_readwrite("s0_hi", &EvalWindow::s0_hi)
        .def_readwrite("grid", &EvalWindow::grid);

    m.def("make_eval_window", &make_eval_window, py::arg("data"), py::arg("coverage") = 0.7,
          py::arg("n_grid") = 100, py::arg("mode") = GridMode::equal);

    py::class_<RasterGrid>(m, "RasterGrid")
        .def(py::init<>())
        .def_readwrite("values", &RasterGrid::values)
        .def_readwrite("origin_flip", &RasterGrid::origin_flip)
        .def_property_readonly("n_rows", &RasterGrid::n_rows)
        .def_property_readonly("n_cols", &RasterGrid::n_cols)
        .def("q_of_row", &RasterGrid::q_of_row, py::arg("r"))
        .def("s_of_col", &RasterGrid::s_of_col, py::arg("c"))
        .def("flatten", &RasterGrid::flatten);

    m.def("load_raster_grid", &load_raster_grid, py::arg("path"),
          py::arg("origin_flip") = false);

    // ---- local threshold estimation ----
    py::class_<TrimSpec>(m, "TrimSpec")
        .def(py::init<>())
        .def(py::init([](double lo, double hi) { return TrimSpec{lo, hi}; }),
             py::arg("lo"), py::arg("hi"))
        .def_readwrite("lo", &TrimSpec::lo)
        .def_readwrite("hi", &TrimSpec::hi);

    py::enum_<CurveEval>(m, "CurveEval")
        .value("nearest", CurveEval::nearest)
        .value("linear", CurveEval::linear);

    py::class_<LocalFitPoint>(m, "LocalFitPoint")
        .def_readonly("s", &LocalFitPoint::s)
        .def_readonly("gamma_hat", &LocalFitPoint::gamma_hat)
        .def_readonly("sse_at_min", &LocalFitPoint::sse_at_min)
        .def_readonly("beta_local", &LocalFitPoint::beta_local)
        .def_readonly("delta_local", &LocalFitPoint::delta_local)
        .def_readonly("effective_n", &LocalFitPoint::effective_n)
        .def_readonly("candidate_count", &LocalFitPoint::candidate_count)
        .def_readonly("ok", &LocalFitPoint::ok)
        .def_readonly("message", &LocalFitPoint::message)
        .def("__repr__", [](const LocalFitPoint& p) {
            return p.ok ? "LocalFitPoint(s=" + std::to_string(p.s) +
                              ", gamma_hat=" + std::to_string(p.gamma_hat) + ")"
                        : "LocalFitPoint(s=" + std::to_string(p.s) + ", failed: " + p.message + ")";
        });

    py::class_<ThresholdCurve>(m, "ThresholdCurve")
        .def_readonly("points", &ThresholdCurve::points)
        .def_readonly("bandwidth", &ThresholdCurve::bandwidth)
        .def_readonly("kernel", &ThresholdCurve::kernel)
        .def_readonly("trim", &ThresholdCurve::trim)
        .def("n_failed", &ThresholdCurve::n_failed)
        .def("eval_at", &ThresholdCurve::eval_at, py::arg("s"),
             py::arg("mode") = CurveEval::nearest);

    py::class_<SseFit>(m, "SseFit")
        .def_readonly("sse", &SseFit::sse)
        .def_readonly("beta", &SseFit::beta)
        .def_readonly("delta", &SseFit::delta);

    py::class_<CandidateSse>(m, "CandidateSse")
        .def_readonly("gamma", &CandidateSse::gamma)
        .def_readonly("sse", &CandidateSse::sse);

    m.def("concentrated_sse", &concentrated_sse, py::arg("data"), py::arg("s"),
          py::arg("b_n"), py::arg("kernel"), py::arg("gamma"));
    m.def(
        "estimate_gamma_at",
        [](const Dataset& data, double s, double b_n, const KernelSpec& kernel,
           const TrimSpec& trim) { return estimate_gamma_at(data, s, b_n, kernel, trim); },
        py::arg("data"), py::arg("s"), py::arg("b_n"), py::arg("kernel") = KernelSpec{},
        py::arg("trim") = TrimSpec{}, release_gil());
    m.def(
        "gamma_profile_at",
        [](const Dataset& data, double s, double b_n, const KernelSpec& kernel,
           const TrimSpec& trim) {
            std::vector<CandidateSse> profile;
            LocalFitPoint fit = estimate_gamma_at(data, s, b_n, kernel, trim, &profile);
            return std::make_pair(fit, profile);
        },
        py::arg("data"), py::arg("s"), py::arg("b_n"), py::arg("kernel") = KernelSpec{},
        py::arg("trim") = TrimSpec{}, release_gil(),
        "Fit plus the full (gamma, sse) profile over admissible candidates.");
    m.def("estimate_threshold_curve", &estimate_threshold_curve, py::arg("data"),
          py::arg("window"), py::arg("b_n"), py::arg("kernel") = KernelSpec{},
          py::arg("trim") = TrimSpec{}, py::arg("n_threads") = std::size_t{0},
          release_gil());

    // ---- two-step slope estimation ----
    py::class_<ThetaEstimate>(m, "ThetaEstimate")
        .def_readonly("beta_hat", &ThetaEstimate::beta_hat)
        .def_readonly("delta_star_hat", &ThetaEstimate::delta_star_hat)
        .def_readonly("delta_hat", &ThetaEstimate::delta_hat)
        .def_readonly("n_plus", &ThetaEstimate::n_plus)
        .def_readonly("n_minus", &ThetaEstimate::n_minus)
        .def_readonly("n_window", &ThetaEstimate::n_window)
        .def_readonly("n_curve_failed", &ThetaEstimate::n_curve_failed)
        .def_readonly("truncation_fraction", &ThetaEstimate::truncation_fraction)
        .def_readonly("pi_n", &ThetaEstimate::pi_n);

    m.def("truncation_pi_n", &truncation_pi_n, py::arg("n"), py::arg("b_n"),
          "Truncation margin (n * b_n)^(-1/2).");
    m.def("estimate_theta", &estimate_theta, py::arg("data"), py::arg("curve"),
          py::arg("window"), py::arg("pi_n"), py::arg("eval_mode") = CurveEval::nearest,
          release_gil());

    // ---- tests, confidence sets, covariances ----
    py::enum_<TestMode>(m, "TestMode")
        .value("homoskedastic", TestMode::homoskedastic)
        .value("scaled", TestMode::scaled);

    py::class_<LRTestResult>(m, "LRTestResult")
        .def_readonly("s", &LRTestResult::s)
        .def_readonly("gamma_null", &LRTestResult::gamma_null)
        .def_readonly("gamma_hat", &LRTestResult::gamma_hat)
        .def_readonly("lr_stat", &LRTestResult::lr_stat)
        .def_readonly("xi_lr_hat", &LRTestResult::xi_lr_hat)
        .def_readonly("critical_value", &LRTestResult::critical_value)
        .def_readonly("reject", &LRTestResult::reject)
        .def_readonly("level", &LRTestResult::level)
        .def("__repr__", [](const LRTestResult& r) {
            return "LRTestResult(lr_stat=" + std::to_string(r.lr_stat) +
                   ", reject=" + (r.reject ? std::string("True") : std::string("False")) + ")";
        });

    py::class_<ConfidenceSet>(m, "ConfidenceSet")
        .def_readonly("s", &ConfidenceSet::s)
        .def_readonly("level", &ConfidenceSet::level)
        .def_readonly("gamma_hat", &ConfidenceSet::gamma_hat)
        .def_readonly("accepted", &ConfidenceSet::accepted)
        .def_readonly("hull_lo", &ConfidenceSet::hull_lo)
        .def_readonly("hull_hi", &ConfidenceSet::hull_hi);

    py::class_<NwBands>(m, "NwBands")
        .def(py::init<>())
        .def_readwrite("b_n", &NwBands::b_n)
        .def_readwrite("b_q", &NwBands::b_q)
        .def_readwrite("b_s", &NwBands::b_s);

    m.def("lr_statistic", &lr_statistic, py::arg("data"), py::arg("s"), py::arg("b_n"),
          py::arg("kernel"), py::arg("gamma_null"), py::arg("gamma_hat"));
    m.def("lr_critical_value", &lr_critical_value, py::arg("level"), py::arg("kappa2"));
    m.def("default_nw_bands", &default_nw_bands, py::arg("data"), py::arg("b_n"),
          py::arg("scale_q") = 1.0, py::arg("scale_s") = 1.0);
    m.def("model_residuals", &model_residuals, py::arg("data"), py::arg("curve"),
          py::arg("theta"), py::arg("eval_mode") = CurveEval::nearest);
    m.def("xi_lr_hat", &xi_lr_hat, py::arg("data"), py::arg("s"), py::arg("gamma_at_s"),
          py::arg("delta_hat"), py::arg("residuals"), py::arg("bands"), py::arg("kernel"));
    m.def("run_lr_test", &run_lr_test, py::arg("data"), py::arg("s"), py::arg("b_n"),
          py::arg("kernel"), py::arg("trim"), py::arg("gamma_null"), py::arg("level"),
          py::arg("mode"), py::arg("xi_value") = 0.0, release_gil());
    m.def("invert_ci", &invert_ci, py::arg("data"), py::arg("s"), py::arg("b_n"),
          py::arg("kernel"), py::arg("trim"), py::arg("level"), py::arg("cv_scale") = 1.0,
          release_gil());

    py::enum_<TaperKind>(m, "TaperKind")
        .value("bartlett", TaperKind::bartlett)
        .value("uniform", TaperKind::uniform);

    py::enum_<VcovIndicators>(m, "VcovIndicators")
        .value("truncated", VcovIndicators::truncated)
        .value("plain", VcovIndicators::plain);

    py::class_<VcovOptions>(m, "VcovOptions")
        .def(py::init<>())
        .def_readwrite("lag_cutoff", &VcovOptions::lag_cutoff)
        .def_readwrite("lag_scale", &VcovOptions::lag_scale)
        .def_readwrite("adjusted", &VcovOptions::adjusted)
        .def_readwrite("taper", &VcovOptions::taper)
        .def_readwrite("indicators", &VcovOptions::indicators)
        .def_readwrite("eval_mode", &VcovOptions::eval_mode)
        .def_readwrite("n_threads", &VcovOptions::n_threads);

    py::class_<VcovEstimate>(m, "VcovEstimate")
        .def_readonly("sigma_x_star", &VcovEstimate::sigma_x_star)
        .def_readonly("omega_star", &VcovEstimate::omega_star)
        .def_readonly("vcov_theta_star", &VcovEstimate::vcov_theta_star)
        .def_readonly("vcov_theta", &VcovEstimate::vcov_theta)
        .def_readonly("lag_cutoff", &VcovEstimate::lag_cutoff)
        .def_readonly("adjusted", &VcovEstimate::adjusted)
        .def_readonly("psd_clipped", &VcovEstimate::psd_clipped);

    m.def(
        "conley_lrv",
        [](const Eigen::MatrixXd& scores, const Eigen::MatrixXd& coords,
           std::size_t lag_cutoff, double lag_scale, TaperKind taper, std::size_t n_threads) {
            bool clipped = false;
            Eigen::MatrixXd omega =
                conley_lrv(scores, coords, lag_cutoff, lag_scale, taper, &clipped, n_threads);
            return std::make_pair(omega, clipped);
        },
        py::arg("scores"), py::arg("coords"), py::arg("lag_cutoff"),
        py::arg("lag_scale") = 1.0, py::arg("taper") = TaperKind::bartlett,
        py::arg("n_threads") = std::size_t{0}, release_gil(),
        "Spatial long-run variance; returns (omega, psd_clipped).");
    m.def("theta_vcov", &theta_vcov, py::arg("data"), py::arg("curve"), py::arg("window"),
          py::arg("theta"), py::arg("opts") = VcovOptions{}, release_gil());

    // ---- bandwidth selection ----
    py::class_<CVResult>(m, "CVResult")
        .def_readonly("c_grid", &CVResult::c_grid)
        .def_readonly("criterion", &CVResult::criterion)
        .def_readonly("c_star", &CVResult::c_star)
        .def_readonly("b_n_star", &CVResult::b_n_star);

    m.def("loo_cv_criterion", &loo_cv_criterion, py::arg("data"), py::arg("window"),
          py::arg("c"), py::arg("kernel") = KernelSpec{}, py::arg("trim") = TrimSpec{},
          py::arg("n_threads") = std::size_t{0}, release_gil());
    m.def("default_c_grid", &default_c_grid, py::arg("lo") = 0.25, py::arg("hi") = 8.0,
          py::arg("count") = std::size_t{16});
    m.def("select_bandwidth", &select_bandwidth, py::arg("data"), py::arg("window"),
          py::arg("c_grid"), py::arg("kernel") = KernelSpec{}, py::arg("trim") = TrimSpec{},
          py::arg("n_threads") = std::size_t{0}, release_gil());

    // ---- contour extraction ----
    py::class_<PolarObservation>(m, "PolarObservation")
        .def_readonly("l", &PolarObservation::l)
        .def_readonly("a_deg", &PolarObservation::a_deg)
        .def_readonly("q", &PolarObservation::q)
        .def_readonly("s", &PolarObservation::s);

    py::class_<RotatedPoint>(m, "RotatedPoint")
        .def_readonly("q", &RotatedPoint::q)
        .def_readonly("s", &RotatedPoint::s);

    py::class_<ContourEstimate>(m, "ContourEstimate")
        .def_readonly("angles_deg", &ContourEstimate::angles_deg)
        .def_readonly("radius_hat", &ContourEstimate::radius_hat)
        .def_readonly("messages", &ContourEstimate::messages)
        .def_readonly("inner_mean", &ContourEstimate::inner_mean)
        .def_readonly("outer_mean", &ContourEstimate::outer_mean)
        .def_readonly("center_q", &ContourEstimate::center_q)
        .def_readonly("center_s", &ContourEstimate::center_s)
        .def_readonly("n_failed", &ContourEstimate::n_failed)
        .def("boundary_point", &ContourEstimate::boundary_point, py::arg("k"));

    m.def("polar_transform", &polar_transform, py::arg("q"), py::arg("s"));
    m.def("rotate", &rotate, py::arg("q"), py::arg("s"), py::arg("a_deg"));
    m.def("contour_area", &contour_area, py::arg("contour"),
          "Shoelace area of the boundary over the successful angles.");
    m.def("estimate_contour", &estimate_contour, py::arg("centered"), py::arg("angles"),
          py::arg("b_n"), py::arg("kernel") = KernelSpec{}, py::arg("trim") = TrimSpec{},
          py::arg("n_threads") = std::size_t{0}, release_gil());

    // ---- simulation ----
    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def_static("derive", &Rng::derive, py::arg("seed"), py::arg("stream"))
        .def("next_u64", &Rng::next_u64)
        .def("uniform", &Rng::uniform)
        .def("normal", &Rng::normal);

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("n", &SimConfig::n)
        .def_readwrite("delta", &SimConfig::delta)
        .def_readwrite("rho", &SimConfig::rho)
        .def_readwrite("m", &SimConfig::m)
        .def_readwrite("beta0", &SimConfig::beta0)
        .def_readwrite("gamma0", &SimConfig::gamma0)
        .def_readwrite("c_bandwidth", &SimConfig::c_bandwidth)
        .def_readwrite("reps", &SimConfig::reps)
        .def_readwrite("seed", &SimConfig::seed)
        .def_readwrite("eval_s", &SimConfig::eval_s)
        .def_readwrite("u_scale", &SimConfig::u_scale)
        .def_readwrite("n_threads", &SimConfig::n_threads);

    py::class_<DgpDraw>(m, "DgpDraw")
        .def_readonly("data", &DgpDraw::data)
        .def_readonly("gamma_true", &DgpDraw::gamma_true)
        .def_readonly("psd_repaired", &DgpDraw::psd_repaired)
        .def_readonly("min_eigenvalue", &DgpDraw::min_eigenvalue);

    py::class_<SimCell>(m, "SimCell")
        .def_readonly("label", &SimCell::label)
        .def_readonly("value", &SimCell::value)
        .def_readonly("n_ok", &SimCell::n_ok)
        .def_readonly("n_failed", &SimCell::n_failed)
        .def("__repr__", [](const SimCell& c) {
            return "SimCell('" + c.label + "', value=" + std::to_string(c.value) + ")";
        });

    py::class_<SimReport>(m, "SimReport")
        .def_readonly("cells", &SimReport::cells)
        .def_readonly("reps_used", &SimReport::reps_used)
        .def_readonly("runtime_seconds", &SimReport::runtime_seconds);

    m.def("gamma0_value", &gamma0_value, py::arg("tag"), py::arg("s"));
    m.def(
        "gen_dgp", [](const SimConfig& cfg, Rng& rng) { return gen_dgp(cfg, rng); },
        py::arg("cfg"), py::arg("rng"));
    m.def(
        "gen_dgp",
        [](const SimConfig& cfg, std::optional<std::uint64_t> seed) {
            Rng rng(seed.value_or(cfg.seed));
            return gen_dgp(cfg, rng);
        },
        py::arg("cfg"), py::arg("seed") = py::none(),
        "One draw from the spatially correlated two-regime design; the seed "
        "defaults to cfg.seed.");
    m.def("run_rejection_study", &run_rejection_study, py::arg("cfg"),
          py::arg("level") = 0.95, release_gil());
    m.def("run_coverage_study", &run_coverage_study, py::arg("cfg"), py::arg("adjusted"),
          py::arg("level") = 0.95, release_gil());

    py::class_<DriftParams>(m, "DriftParams")
        .def(py::init<>())
        .def_readwrite("varrho", &DriftParams::varrho)
        .def_readwrite("gamma0_slope", &DriftParams::gamma0_slope)
        .def_readwrite("xi", &DriftParams::xi)
        .def_readwrite("kernel", &DriftParams::kernel);

    m.def("drift_mu", &drift_mu, py::arg("params"), py::arg("r"));
    m.def("simulate_argmax_zeta", &simulate_argmax_zeta, py::arg("R"), py::arg("dr"),
          py::arg("reps"), py::arg("seed"), py::arg("bridge_correction") = true,
          py::arg("n_threads") = std::size_t{0}, release_gil());
    m.def("zeta_null_cdf", &zeta_null_cdf, py::arg("z"));
    m.def("simulate_argmax_drift", &simulate_argmax_drift, py::arg("params"),
          py::arg("reps"), py::arg("seed"), py::arg("R") = 0.0, py::arg("dr") = 0.01,
          py::arg("n_threads") = std::size_t{0}, release_gil());
    m.def("simulate_argmax_drift_fn", &simulate_argmax_drift_fn, py::arg("mu"),
          py::arg("R"), py::arg("dr"), py::arg("reps"), py::arg("seed"),
          py::arg("n_threads") = std::size_t{0}, release_gil());
    m.def("normal_quantile", &normal_quantile, py::arg("p"));
}
