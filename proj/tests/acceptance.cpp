// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

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
#include "test_util.hpp"

using namespace threshsplit;

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

int g_failures = 0;

void report(int id, bool ok, const std::string& what, double t0, double budget = 0.0) {
    const double secs = now_seconds() - t0;
    bool pass = ok;
    std::string line = what;
    if (budget > 0.0 && secs > budget) {
        pass = false;
        line += " [over time budget]";
    }
    std::printf("[%s] criterion %d: %s (%.2fs)\n", pass ? "PASS" : "FAIL", id, line.c_str(),
                secs);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double ecdf_at(const std::vector<double>& v, double z) {
    std::size_t cnt = 0;
    for (double x : v) {
        if (x <= z) ++cnt;
    }
    return static_cast<double>(cnt) / static_cast<double>(v.size());
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

// ---- criterion 6 helpers: exhaustive reference minimizer ----

Dataset random_instance(Rng& rng, std::size_t n, Eigen::Index d) {
    Dataset data;
    data.y.resize(n);
    data.X.resize(n, d);
    data.q.resize(n);
    data.s.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.q(i) = rng.normal();
        data.s(i) = 0.5 * rng.normal();
        data.X(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < d; ++j) data.X(i, j) = rng.normal();
        data.y(i) = rng.normal() + (data.q(i) <= 0.3 ? 1.5 : 0.0);
    }
    return data;
}

double brute_sse_at(const Dataset& data, double b_n, const KernelSpec& kernel,
                    double gamma) {
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = eval_kernel(kernel, data.s(i) / b_n);
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, 2 * d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (data.q(i) <= gamma) {
            Z.row(i).tail(d) = data.X.row(i);
        } else {
            Z.row(i).head(d) = data.X.row(i);
        }
    }
    Eigen::MatrixXd A = Z.transpose() * w.asDiagonal() * Z;
    Eigen::VectorXd b = Z.transpose() * (w.array() * data.y.array()).matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double cutoff = 1e-10 * es.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::VectorXd inv_eigs = es.eigenvalues();
    for (Eigen::Index k = 0; k < inv_eigs.size(); ++k) {
        inv_eigs(k) = inv_eigs(k) > cutoff ? 1.0 / inv_eigs(k) : 0.0;
    }
    const Eigen::VectorXd coef =
        es.eigenvectors() * inv_eigs.asDiagonal() * es.eigenvectors().transpose() * b;
    const Eigen::VectorXd resid = data.y - Z * coef;
    return (w.array() * resid.array().square()).sum();
}

// Reference search: score every admissible distinct candidate independently
// and keep the first strict minimizer.
bool brute_argmin(const Dataset& data, double b_n, const KernelSpec& kernel,
                  const TrimSpec& trim, double* gamma_out, double* sse_out) {
    const double q_lo = empirical_quantile(data.q, trim.lo);
    const double q_hi = empirical_quantile(data.q, trim.hi);
    std::vector<double> cands;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (data.q(i) >= q_lo && data.q(i) <= q_hi) cands.push_back(data.q(i));
    }
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

    const Eigen::Index d = data.d();
    const double floor_w = 1e-8 * eval_kernel(kernel, 0.0);
    double best_sse = std::numeric_limits<double>::infinity();
    double best_gamma = 0.0;
    for (double gamma : cands) {
        Eigen::Index n_low = 0, n_up = 0;
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            const double w = eval_kernel(kernel, data.s(i) / b_n);
            if (w < floor_w) continue;
            (data.q(i) <= gamma ? n_low : n_up) += 1;
        }
        if (n_low < d || n_up < d) continue;
        const double sse = brute_sse_at(data, b_n, kernel, gamma);
        if (!std::isfinite(best_sse) ||
            sse < best_sse - 1e-10 * std::max(best_sse, sse)) {
            best_sse = sse;
            best_gamma = gamma;
        }
    }
    if (!std::isfinite(best_sse)) return false;
    *gamma_out = best_gamma;
    *sse_out = best_sse;
    return true;
}

double rel_diff(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / scale;
}

// ---- criterion 9: representative invariant battery ----

int check_invariants() {
    int bad = 0;
    auto expect = [&](bool ok, const char* what) {
        if (!ok) {
            std::printf("  [invariant failed] %s\n", what);
            ++bad;
        }
    };

    const KernelSpec gauss{KernelFamily::gaussian};
    const TrimSpec trim;

    // Dataset: standardization moments, quantile endpoints, window bounds.
    Dataset raw = test_util::make_two_regime(
        160, 2, Eigen::Vector2d(1.0, 0.5), Eigen::Vector2d(2.0, 1.0),
        [](double s) { return std::sin(s) / 2.0; }, 0.8, 5);
    Dataset data = standardize_dataset(raw);
    expect(std::abs(data.q.mean()) < 1e-12, "standardized q has mean zero");
    expect(std::abs(data.s.mean()) < 1e-12, "standardized s has mean zero");
    const double n1 = static_cast<double>(data.n() - 1);
    expect(std::abs(data.q.squaredNorm() / n1 - 1.0) < 1e-10,
           "standardized q has unit variance");
    std::vector<double> sorted(data.q.data(), data.q.data() + data.n());
    std::sort(sorted.begin(), sorted.end());
    expect(empirical_quantile(sorted, 0.0) == sorted.front(), "quantile p=0 is the minimum");
    expect(empirical_quantile(sorted, 1.0) == sorted.back(), "quantile p=1 is the maximum");
    EvalWindow window = make_eval_window(data, 0.7, 50);
    expect(window.grid.front() >= window.s0_lo - 1e-12, "grid starts inside the window");
    expect(window.grid.back() <= window.s0_hi + 1e-12, "grid ends inside the window");
    expect(std::is_sorted(window.grid.begin(), window.grid.end()), "grid is sorted");

    // Local threshold fit: scale invariance and tie-break to the left.
    const double b_n = 0.8;
    LocalFitPoint base = estimate_gamma_at(data, 0.0, b_n, gauss, trim);
    Dataset scaled = data;
    scaled.y *= 3.0;
    LocalFitPoint big = estimate_gamma_at(scaled, 0.0, b_n, gauss, trim);
    expect(big.gamma_hat == base.gamma_hat, "rescaling y keeps the same minimizer");
    expect(rel_diff(big.sse_at_min, 9.0 * base.sse_at_min) < 1e-10,
           "rescaling y scales the SSE quadratically");
    expect((big.delta_local - 3.0 * base.delta_local).cwiseAbs().maxCoeff() < 1e-8,
           "rescaling y scales the regime difference linearly");
    Dataset flat = data;
    flat.y.setZero();
    LocalFitPoint tie = estimate_gamma_at(flat, 0.0, b_n, gauss, trim);
    const double q_lo = empirical_quantile(flat.q, trim.lo);
    double leftmost = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < flat.n(); ++i) {
        if (flat.q(i) >= q_lo) leftmost = std::min(leftmost, flat.q(i));
    }
    expect(tie.gamma_hat == leftmost, "all-tied objective keeps the leftmost candidate");

    // Two-step: identity between the regime contrasts and monotone truncation.
    ThresholdCurve curve = estimate_threshold_curve(data, window, b_n, gauss, trim, 1);
    ThetaEstimate t0 = estimate_theta(data, curve, window, 0.0);
    expect((t0.delta_hat - (t0.delta_star_hat - t0.beta_hat)).cwiseAbs().maxCoeff() == 0.0,
           "regime difference is exactly the coefficient gap");
    ThetaEstimate t1 = estimate_theta(data, curve, window, 0.25);
    expect(t1.n_plus <= t0.n_plus && t1.n_minus <= t0.n_minus,
           "wider truncation keeps fewer observations");
    expect(t1.truncation_fraction <= t0.truncation_fraction,
           "wider truncation lowers the kept fraction");

    // Inference: nonnegative statistic, self-test at the minimizer, nesting.
    LRTestResult self = run_lr_test(data, 0.0, b_n, gauss, trim, base.gamma_hat, 0.95,
                                    TestMode::homoskedastic);
    expect(self.lr_stat == 0.0, "statistic vanishes at the fitted threshold");
    expect(!self.reject, "fitted threshold is never rejected against itself");
    LRTestResult off = run_lr_test(data, 0.0, b_n, gauss, trim, base.gamma_hat + 0.4, 0.95,
                                   TestMode::homoskedastic);
    expect(off.lr_stat >= 0.0, "statistic is nonnegative");
    ConfidenceSet c90 = invert_ci(data, 0.0, b_n, gauss, trim, 0.90);
    ConfidenceSet c95 = invert_ci(data, 0.0, b_n, gauss, trim, 0.95);
    expect(std::find(c95.accepted.begin(), c95.accepted.end(), c95.gamma_hat) !=
               c95.accepted.end(),
           "confidence set contains the point estimate");
    bool nested = true;
    for (double g : c90.accepted) {
        if (std::find(c95.accepted.begin(), c95.accepted.end(), g) == c95.accepted.end()) {
            nested = false;
        }
    }
    expect(nested, "90 percent set is nested in the 95 percent set");
    VcovEstimate vc = theta_vcov(data, curve, window, t0);
    expect((vc.vcov_theta - vc.vcov_theta.transpose()).cwiseAbs().maxCoeff() < 1e-10,
           "coefficient covariance is symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(vc.vcov_theta_star);
    expect(es.eigenvalues().minCoeff() > -1e-8, "sandwich covariance is positive semidefinite");

    // Curve failure markers survive into the output.
    Dataset bimodal = data;
    for (Eigen::Index i = 0; i < bimodal.n() / 2; ++i) bimodal.s(i) += 50.0;
    EvalWindow wide;
    wide.s0_lo = -1.0;
    wide.s0_hi = 51.0;
    wide.grid = {0.0, 25.0, 50.0};
    ThresholdCurve marked = estimate_threshold_curve(bimodal, wide, 0.5,
                                                     KernelSpec{KernelFamily::uniform},
                                                     trim, 1);
    bool markers_ok = true;
    for (const LocalFitPoint& p : marked.points) {
        if (p.ok && !std::isfinite(p.gamma_hat)) markers_ok = false;
        if (!p.ok && (p.message.empty() || !std::isnan(p.gamma_hat))) markers_ok = false;
    }
    expect(marked.n_failed() > 0, "isolated grid points are reported as failures");
    expect(markers_ok, "failed points carry NaN values and a message");

    // Bandwidth grid: endpoints and geometric spacing.
    std::vector<double> grid = default_c_grid();
    expect(grid.size() == 16, "default constant grid has 16 points");
    expect(std::abs(grid.front() - 0.25) < 1e-15 && grid.back() == 8.0,
           "default constant grid spans [0.25, 8]");
    bool geometric = true;
    for (std::size_t k = 2; k < grid.size(); ++k) {
        if (std::abs(grid[k] / grid[k - 1] - grid[1] / grid[0]) > 1e-10) geometric = false;
    }
    expect(geometric, "default constant grid is log spaced");

    // Contour geometry: polar range, isometry, boundary round trip.
    PolarObservation po = polar_transform(1.0, 1.0);
    expect(std::abs(po.l - std::sqrt(2.0)) < 1e-12 && std::abs(po.a_deg - 45.0) < 1e-12,
           "polar transform of (1,1)");
    for (double a : {0.0, 37.0, 180.0, 271.5}) {
        RotatedPoint rp = rotate(0.3, -0.7, a);
        expect(std::abs(std::hypot(rp.q, rp.s) - std::hypot(0.3, -0.7)) < 1e-12,
               "rotation preserves length");
    }

    // Randomness plumbing: thread-count invariance and quantile symmetry.
    std::vector<double> z1 = simulate_argmax_zeta(10.0, 0.05, 100, 9, true, 1);
    std::vector<double> z4 = simulate_argmax_zeta(10.0, 0.05, 100, 9, true, 4);
    expect(z1 == z4, "samplers are independent of the thread count");
    expect(std::abs(normal_quantile(0.8) + normal_quantile(0.2)) < 1e-12,
           "normal quantile is antisymmetric");
    double prev = 0.0;
    bool monotone = true;
    for (double z = 0.05; z < 8.0; z += 0.05) {
        const double cur = zeta_null_cdf(z);
        if (cur <= prev) monotone = false;
        prev = cur;
    }
    expect(monotone, "null distribution function is strictly increasing");

    return bad;
}

}  // namespace

int main() {
    const KernelSpec gauss{KernelFamily::gaussian};

    {  // 1: closed-form tail critical values
        const double t0 = now_seconds();
        const double k2 = kappa2(gauss);
        const std::vector<std::pair<double, double>> table = {
            {0.800, 1.268}, {0.850, 1.439}, {0.900, 1.675}, {0.925, 1.842},
            {0.950, 2.074}, {0.975, 2.469}, {0.990, 2.988}};
        double worst = 0.0;
        for (const auto& [level, ref] : table) {
            worst = std::max(worst, std::abs(lr_critical_value(level, k2) - ref));
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "seven tail critical values match the reference table (max dev %.2e)",
                      worst);
        report(1, worst <= 1e-3, buf, t0, 1.0);
    }

    {  // 2: simulated null law of the max statistic vs its closed form
        const double t0 = now_seconds();
        std::vector<double> draws = simulate_argmax_zeta(100.0, 0.05, 20000, 424242);
        double worst = 0.0;
        for (double z : {1.268, 2.074, 2.988}) {
            worst = std::max(worst, std::abs(ecdf_at(draws, z) - zeta_null_cdf(z)));
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "max-statistic sampler matches the analytic law (max cdf dev %.4f)",
                      worst);
        report(2, worst <= 0.02, buf, t0, 120.0);
    }

    {  // 3: drifted argmax sampler is centered at unit drift scale
        const double t0 = now_seconds();
        DriftParams p;
        p.varrho = 1.0;
        p.gamma0_slope = 1.0;
        p.xi = 1.0;
        p.kernel = gauss;
        std::vector<double> draws = simulate_argmax_drift(p, 20000, 31337);
        const double m = mean_of(draws);
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "drifted argmax sampler is centered (mean %.4f over 20000 draws)", m);
        report(3, std::abs(m) <= 0.05, buf, t0, 180.0);
    }

    {  // 4: pointwise test size across regime shifts
        const double t0 = now_seconds();
        const std::vector<std::pair<double, double>> cases = {
            {2.0, 0.05}, {3.0, 0.05}, {4.0, 0.06}};
        bool ok = true;
        std::string detail;
        for (const auto& [delta, target] : cases) {
            SimConfig cfg;
            cfg.n = 500;
            cfg.delta = delta;
            cfg.rho = 0.0;
            cfg.c_bandwidth = 0.5;
            cfg.reps = 500;
            cfg.seed = 20240815;
            cfg.eval_s = {0.0};
            SimReport rep = run_rejection_study(cfg);
            const double v = rep.cells[0].value;
            if (rep.cells[0].n_ok < 450 || std::abs(v - target) > 0.03) ok = false;
            char piece[48];
            std::snprintf(piece, sizeof(piece), " %.3f/%.2f", v, target);
            detail += piece;
        }
        report(4, ok, "rejection rates at the true threshold:" + detail, t0, 1800.0);
    }

    {  // 5: sandwich interval coverage under spatial noise
        const double t0 = now_seconds();
        SimConfig cfg;
        cfg.n = 200;
        cfg.delta = 4.0;
        cfg.rho = 0.5;
        cfg.m = 3;
        cfg.c_bandwidth = 0.5;
        cfg.reps = 500;
        cfg.seed = 20240815;
        SimReport rep = run_coverage_study(cfg, true);
        const std::vector<double> targets = {0.96, 0.96, 0.97};
        bool ok = rep.cells.size() == 3;
        std::string detail;
        for (std::size_t k = 0; k < rep.cells.size(); ++k) {
            const double v = rep.cells[k].value;
            if (rep.cells[k].n_ok < 450 || std::abs(v - targets[k]) > 0.03) ok = false;
            char piece[48];
            std::snprintf(piece, sizeof(piece), " %.3f/%.2f", v, targets[k]);
            detail += piece;
        }
        report(5, ok, "adjusted interval coverage:" + detail, t0, 1800.0);
    }

    {  // 6: sweep minimizer equals the exhaustive reference on random inputs
        const double t0 = now_seconds();
        Rng rng(606060);
        int checked = 0, mismatches = 0, attempts = 0;
        const std::vector<KernelFamily> fams = {
            KernelFamily::gaussian, KernelFamily::uniform, KernelFamily::epanechnikov};
        while (checked < 200 && attempts < 500) {
            ++attempts;
            const std::size_t n = 10 + static_cast<std::size_t>(rng.uniform() * 51);
            const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform() * 3.0);
            Dataset data = random_instance(rng, n, d);
            const KernelSpec kernel{fams[static_cast<std::size_t>(attempts) % 3]};
            const double b_n = 0.5 + rng.uniform();
            const TrimSpec trim;
            LocalFitPoint fit;
            try {
                fit = estimate_gamma_at(data, 0.0, b_n, kernel, trim);
            } catch (const Error&) {
                continue;
            }
            double ref_gamma = 0.0, ref_sse = 0.0;
            if (!brute_argmin(data, b_n, kernel, trim, &ref_gamma, &ref_sse)) continue;
            ++checked;
            if (fit.gamma_hat != ref_gamma || rel_diff(fit.sse_at_min, ref_sse) > 1e-8) {
                ++mismatches;
            }
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "sweep equals exhaustive search on %d random instances (%d mismatches)",
                      checked, mismatches);
        report(6, checked == 200 && mismatches == 0, buf, t0);
    }

    {  // 7: threshold curve sup error shrinks with the sample size
        const double t0 = now_seconds();
        auto median_sup = [&](std::size_t n) {
            std::vector<double> sups;
            for (std::uint64_t seed = 1; seed <= 20; ++seed) {
                SimConfig cfg;
                cfg.n = n;
                cfg.delta = 4.0;
                cfg.rho = 0.0;
                Rng rng(seed);
                DgpDraw draw = gen_dgp(cfg, rng);
                Dataset data = standardize_dataset(draw.data);
                const double b_n = 2.0 / std::sqrt(static_cast<double>(n));
                EvalWindow window = make_eval_window(data, 0.7, 100);
                ThresholdCurve curve =
                    estimate_threshold_curve(data, window, b_n, gauss, TrimSpec{}, 1);
                double sup = 0.0;
                for (std::size_t k = 0; k < window.grid.size(); ++k) {
                    if (!curve.points[k].ok) {
                        sup = std::numeric_limits<double>::infinity();
                        break;
                    }
                    const double s_raw =
                        window.grid[k] * data.norm.s_sd + data.norm.s_mean;
                    const double g_std =
                        (std::sin(s_raw) / 2.0 - data.norm.q_mean) / data.norm.q_sd;
                    sup = std::max(sup, std::abs(curve.points[k].gamma_hat - g_std));
                }
                sups.push_back(sup);
            }
            std::sort(sups.begin(), sups.end());
            return 0.5 * (sups[9] + sups[10]);
        };
        const double m500 = median_sup(500);
        const double m2000 = median_sup(2000);
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "median sup curve error falls from %.3f (n=500) to %.3f (n=2000)",
                      m500, m2000);
        report(7, m2000 <= 0.2 && m2000 < m500, buf, t0);
    }

    {  // 8: disk boundary recovery from a raster
        const double t0 = now_seconds();
        RasterGrid grid;
        grid.values.resize(100, 100);
        for (Eigen::Index r = 0; r < 100; ++r) {
            for (Eigen::Index c = 0; c < 100; ++c) {
                const double dist = std::hypot(grid.q_of_row(r) - 0.5,
                                               grid.s_of_col(c) - 0.5);
                grid.values(r, c) = dist <= 0.3 ? 10.0 : 0.0;
            }
        }
        Dataset flat = grid.flatten();
        const double cq = grid.q_of_row(49), cs = grid.s_of_col(49);
        for (Eigen::Index i = 0; i < flat.n(); ++i) {
            flat.q(i) -= cq;
            flat.s(i) -= cs;
        }
        ContourEstimate est = estimate_contour(flat, 128, 0.01, gauss);
        std::size_t within = 0;
        for (double r : est.radius_hat) {
            if (!std::isnan(r) && std::abs(r - 0.3) <= 0.05) ++within;
        }
        const double area = contour_area(est);
        const double target = 3.14159265358979323846 * 0.09;
        const bool ok = within >= 116 && std::abs(area - target) <= 0.15 * target;
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "disk boundary: %zu/128 radii within 0.05, area %.4f vs %.4f",
                      within, area, target);
        report(8, ok, buf, t0, 300.0);
    }

    {  // 9: module invariant battery
        const double t0 = now_seconds();
        const int bad = check_invariants();
        char buf[160];
        std::snprintf(buf, sizeof(buf), "module invariant battery (%d violations)", bad);
        report(9, bad == 0, buf, t0);
    }

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
