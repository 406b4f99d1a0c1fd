#include "threshsplit/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "threshsplit/errors.hpp"
#include "threshsplit/inference.hpp"
#include "threshsplit/local_threshold.hpp"
#include "threshsplit/threads.hpp"
#include "threshsplit/two_step.hpp"

namespace threshsplit {

namespace {

constexpr double kSqrt2Pi = 2.50662827463100050242;

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

Eigen::VectorXd default_beta0(const SimConfig& cfg) {
    if (cfg.beta0.size() == 2) return cfg.beta0;
    if (cfg.beta0.size() != 0) throw ShapeError("beta0 must have length 2");
    return Eigen::VectorXd::Zero(2);
}

// Recursive adaptive Simpson quadrature.
double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                            double fa, double fm, double fb, double whole, double tol,
                            int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double split = left + right;
    if (depth <= 0 || std::abs(split - whole) <= 15.0 * tol) {
        return split + (split - whole) / 15.0;
    }
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol) {
    if (!(b > a)) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
}

struct TriStateTally {
    std::size_t n_ok = 0;
    std::size_t n_hits = 0;
    std::size_t n_failed = 0;
};

TriStateTally tally(const std::vector<signed char>& flags) {
    TriStateTally t;
    for (signed char f : flags) {
        if (f < 0) {
            ++t.n_failed;
        } else {
            ++t.n_ok;
            if (f > 0) ++t.n_hits;
        }
    }
    return t;
}

SimCell make_cell(const std::string& label, const TriStateTally& t) {
    SimCell cell;
    cell.label = label;
    cell.n_ok = t.n_ok;
    cell.n_failed = t.n_failed;
    cell.value = t.n_ok > 0 ? static_cast<double>(t.n_hits) / static_cast<double>(t.n_ok)
                            : std::numeric_limits<double>::quiet_NaN();
    return cell;
}

}  // namespace

double gamma0_value(const std::string& tag, double s) {
    if (tag == "sin_half") return std::sin(s) / 2.0;
    if (tag == "zero") return 0.0;
    throw SchemaError("unknown threshold-function tag: " + tag);
}

DgpDraw gen_dgp(const SimConfig& cfg, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(cfg.n);
    if (n < 1) throw SizeError("sample size must be at least 1");
    if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0)) throw SizeError("rho must lie in [0,1]");
    const Eigen::VectorXd beta0 = default_beta0(cfg);

    DgpDraw draw;
    Dataset& data = draw.data;
    data.q.resize(n);
    data.s.resize(n);
    data.y.resize(n);
    data.X.resize(n, 2);
    draw.gamma_true.resize(n);

    for (Eigen::Index i = 0; i < n; ++i) data.q(i) = rng.normal();
    for (Eigen::Index i = 0; i < n; ++i) data.s(i) = rng.normal();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double scale =
            1.0 / std::sqrt(1.0 + cfg.rho * (data.s(i) * data.s(i) + data.q(i) * data.q(i)));
        data.X(i, 0) = 1.0;
        data.X(i, 1) = scale * rng.normal();
    }

    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();

    Eigen::VectorXd u;
    if (cfg.rho == 0.0) {
        u = z;
    } else {
        // Distance-decaying covariance with a hard cutoff at m/n.
        const double cutoff = static_cast<double>(cfg.m) / static_cast<double>(cfg.n);
        Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double dq = data.q(i) - data.q(j);
                const double ds = data.s(i) - data.s(j);
                const double dist = std::sqrt(dq * dq + ds * ds);
                if (dist < cutoff) {
                    const double lag = std::floor(dist * static_cast<double>(cfg.n));
                    const double v = std::pow(cfg.rho, lag);
                    sigma(i, j) = v;
                    sigma(j, i) = v;
                }
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(sigma);
        if (llt.info() == Eigen::Success) {
            u = llt.matrixL() * z;
        } else {
            // Not PSD (possible: within-cutoff correlations can hit 1); clip.
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
            if (es.info() != Eigen::Success) {
                throw SingularMomentError("noise covariance eigendecomposition failed");
            }
            draw.psd_repaired = true;
            draw.min_eigenvalue = es.eigenvalues().minCoeff();
            Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
            u = es.eigenvectors() * (root.asDiagonal() * (es.eigenvectors().transpose() * z));
        }
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        draw.gamma_true(i) = gamma0_value(cfg.gamma0, data.s(i));
        double mean = data.X.row(i).dot(beta0);
        if (data.q(i) <= draw.gamma_true(i)) {
            mean += cfg.delta * data.X.row(i).sum();  // delta0 = delta * (1,1)
        }
        data.y(i) = mean + cfg.u_scale * u(i);
    }
    return draw;
}

SimReport run_rejection_study(const SimConfig& cfg, double level) {
    if (cfg.reps < 1) throw SizeError("need at least one replication");
    if (cfg.eval_s.empty()) throw SizeError("need at least one evaluation point");
    const double t0 = now_seconds();

    const KernelSpec kernel{KernelFamily::gaussian};
    const TrimSpec trim;
    const double b_n = cfg.c_bandwidth / std::sqrt(static_cast<double>(cfg.n));
    const std::size_t n_eval = cfg.eval_s.size();

    // flags[rep * n_eval + k]: 1 reject, 0 accept, -1 failed
    std::vector<signed char> flags(cfg.reps * n_eval, -1);

    parallel_for(
        cfg.reps,
        [&](std::size_t rep) {
            Rng rng = Rng::derive(cfg.seed, rep);
            Dataset std_data;
            try {
                const DgpDraw draw = gen_dgp(cfg, rng);
                std_data = standardize_dataset(draw.data);
            } catch (const Error&) {
                return;  // all eval cells stay failed
            }
            for (std::size_t k = 0; k < n_eval; ++k) {
                const double s_raw = cfg.eval_s[k];
                const double s_std = (s_raw - std_data.norm.s_mean) / std_data.norm.s_sd;
                const double gamma_null =
                    (gamma0_value(cfg.gamma0, s_raw) - std_data.norm.q_mean) /
                    std_data.norm.q_sd;
                try {
                    const LRTestResult res =
                        run_lr_test(std_data, s_std, b_n, kernel, trim, gamma_null, level,
                                    TestMode::homoskedastic);
                    flags[rep * n_eval + k] = res.reject ? 1 : 0;
                } catch (const Error&) {
                    // cell stays failed
                }
            }
        },
        cfg.n_threads);

    SimReport report;
    report.reps_used = cfg.reps;
    for (std::size_t k = 0; k < n_eval; ++k) {
        std::vector<signed char> col(cfg.reps);
        for (std::size_t rep = 0; rep < cfg.reps; ++rep) col[rep] = flags[rep * n_eval + k];
        report.cells.push_back(make_cell("s=" + std::to_string(cfg.eval_s[k]), tally(col)));
    }
    report.runtime_seconds = now_seconds() - t0;
    return report;
}

SimReport run_coverage_study(const SimConfig& cfg, bool adjusted, double level) {
    if (cfg.reps < 1) throw SizeError("need at least one replication");
    const double t0 = now_seconds();

    const KernelSpec kernel{KernelFamily::gaussian};
    const TrimSpec trim;
    const double b_n = cfg.c_bandwidth / std::sqrt(static_cast<double>(cfg.n));
    const double pi_n = truncation_pi_n(cfg.n, b_n);
    const double z = normal_quantile(0.5 + level / 2.0);
    const Eigen::VectorXd beta0 = default_beta0(cfg);

    const double truth_beta2 = beta0(1);
    const double truth_dstar2 = beta0(1) + cfg.delta;
    const double truth_delta2 = cfg.delta;

    std::vector<signed char> cov_beta(cfg.reps, -1), cov_dstar(cfg.reps, -1),
        cov_delta(cfg.reps, -1);

    parallel_for(
        cfg.reps,
        [&](std::size_t rep) {
            Rng rng = Rng::derive(cfg.seed, rep);
            try {
                const DgpDraw draw = gen_dgp(cfg, rng);
                const Dataset data = standardize_dataset(draw.data);
                const EvalWindow window =
                    make_eval_window(data, 0.7, cfg.n, GridMode::observed);
                const ThresholdCurve curve =
                    estimate_threshold_curve(data, window, b_n, kernel, trim, 1);
                const ThetaEstimate theta = estimate_theta(data, curve, window, pi_n);
                VcovOptions opts;
                opts.lag_cutoff = 5;
                opts.adjusted = adjusted;
                opts.n_threads = 1;
                const VcovEstimate vc = theta_vcov(data, curve, window, theta, opts);

                const Eigen::Index d = data.d();
                // Tiny absolute slack keeps the zero-noise variant covered.
                auto covered = [&](double est, double truth, double var) {
                    const double se = std::sqrt(std::max(0.0, var));
                    return std::abs(est - truth) <= z * se + 1e-10 ? 1 : 0;
                };
                cov_beta[rep] =
                    covered(theta.beta_hat(1), truth_beta2, vc.vcov_theta_star(1, 1));
                cov_dstar[rep] = covered(theta.delta_star_hat(1), truth_dstar2,
                                         vc.vcov_theta_star(d + 1, d + 1));
                cov_delta[rep] =
                    covered(theta.delta_hat(1), truth_delta2, vc.vcov_theta(d + 1, d + 1));
            } catch (const Error&) {
                // rep stays failed for all three cells
            }
        },
        cfg.n_threads);

    SimReport report;
    report.reps_used = cfg.reps;
    report.cells.push_back(make_cell("beta2", tally(cov_beta)));
    report.cells.push_back(make_cell("beta2_plus_delta2", tally(cov_dstar)));
    report.cells.push_back(make_cell("delta2", tally(cov_delta)));
    report.runtime_seconds = now_seconds() - t0;
    return report;
}

double drift_mu(const DriftParams& p, double r) {
    if (!(p.varrho > 0.0)) throw SizeError("varrho must be positive");
    if (!(p.xi > 0.0)) throw SizeError("xi must be positive");
    const double ar = std::abs(r);
    if (ar == 0.0) return 0.0;

    const double slope = std::abs(p.gamma0_slope);
    if (slope == 0.0) {
        // Flat threshold limit: psi0 -> integral of K over [0, inf) = 1/2
        // and the slope term vanishes.
        return -ar / 2.0;
    }

    const double g = p.xi / (p.varrho * slope);
    double upper = ar * g;
    const double radius = p.kernel.support_radius();
    if (std::isfinite(radius)) {
        upper = std::min(upper, radius);
    } else {
        upper = std::min(upper, 40.0);  // gaussian tail beyond this is nil
    }
    const auto k0 = [&](double t) { return eval_kernel(p.kernel, t); };
    const auto k1 = [&](double t) { return t * eval_kernel(p.kernel, t); };
    const double psi0 = adaptive_simpson(k0, 0.0, upper, 1e-12);
    const double psi1 = adaptive_simpson(k1, 0.0, upper, 1e-12);
    return -ar * psi0 + psi1 / g;
}

double zeta_null_cdf(double z) {
    if (z <= 0.0) return 0.0;
    const double t = 1.0 - std::exp(-z / 2.0);
    return t * t;
}

std::vector<double> simulate_argmax_zeta(double R, double dr, std::size_t reps,
                                         std::uint64_t seed, bool bridge_correction,
                                         std::size_t n_threads) {
    if (!(R > 0.0 && dr > 0.0 && dr <= R)) throw SizeError("invalid grid for the max sampler");
    if (reps < 1) throw SizeError("need at least one replication");
    const auto steps = static_cast<std::size_t>(std::llround(R / dr));
    const double sqdr = std::sqrt(dr);

    std::vector<double> out(reps);
    parallel_for(
        reps,
        [&](std::size_t rep) {
            Rng rng = Rng::derive(seed, rep);
            double best = 0.0;  // value at r = 0
            for (int side = 0; side < 2; ++side) {
                double w = 0.0;
                double prev = 0.0;
                for (std::size_t k = 1; k <= steps; ++k) {
                    w += sqdr * rng.normal();
                    const double cur = 2.0 * w - static_cast<double>(k) * dr;
                    if (bridge_correction) {
                        // Exact max of the Brownian path on the interval given
                        // the endpoints; variance rate of 2W(r) is 4.
                        const double u = 1.0 - rng.uniform();
                        const double gap = prev - cur;
                        const double m =
                            0.5 * (prev + cur +
                                   std::sqrt(gap * gap - 8.0 * dr * std::log(u)));
                        if (m > best) best = m;
                    } else if (cur > best) {
                        best = cur;
                    }
                    prev = cur;
                }
            }
            out[rep] = best;
        },
        n_threads);
    return out;
}

std::vector<double> simulate_argmax_drift_fn(const std::function<double(double)>& mu,
                                             double R, double dr, std::size_t reps,
                                             std::uint64_t seed, std::size_t n_threads) {
    if (!(R > 0.0 && dr > 0.0 && dr <= R)) throw SizeError("invalid grid for the argmax sampler");
    if (reps < 1) throw SizeError("need at least one replication");
    const auto steps = static_cast<std::size_t>(std::llround(R / dr));
    const double sqdr = std::sqrt(dr);

    // Drift precomputed once per grid offset for each side.
    std::vector<double> mu_right(steps + 1), mu_left(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        const double r = static_cast<double>(k) * dr;
        mu_right[k] = mu(r);
        mu_left[k] = mu(-r);
    }

    std::vector<double> out(reps);
    parallel_for(
        reps,
        [&](std::size_t rep) {
            Rng rng = Rng::derive(seed, rep);
            double best_val = mu_right[0];  // W(0) = 0
            double best_arg = 0.0;
            for (int side = 0; side < 2; ++side) {
                const auto& mu_side = side == 0 ? mu_right : mu_left;
                const double sign = side == 0 ? 1.0 : -1.0;
                double w = 0.0;
                for (std::size_t k = 1; k <= steps; ++k) {
                    w += sqdr * rng.normal();
                    const double v = w + mu_side[k];
                    if (v > best_val) {
                        best_val = v;
                        best_arg = sign * static_cast<double>(k) * dr;
                    }
                }
            }
            out[rep] = best_arg;
        },
        n_threads);
    return out;
}

std::vector<double> simulate_argmax_drift(const DriftParams& p, std::size_t reps,
                                          std::uint64_t seed, double R, double dr,
                                          std::size_t n_threads) {
    if (R <= 0.0) {
        double inv_scale = 1.0;
        if (p.gamma0_slope != 0.0) {
            const double g = p.xi / (p.varrho * std::abs(p.gamma0_slope));
            inv_scale = std::max(1.0, 1.0 / g);
        }
        R = 30.0 * inv_scale;
    }
    return simulate_argmax_drift_fn([&](double r) { return drift_mu(p, r); }, R, dr, reps,
                                    seed, n_threads);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw SizeError("quantile level must lie in (0,1)");
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double dd[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double qv = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * qv + c[1]) * qv + c[2]) * qv + c[3]) * qv + c[4]) * qv + c[5]) /
            ((((dd[0] * qv + dd[1]) * qv + dd[2]) * qv + dd[3]) * qv + 1.0);
    } else if (p <= 1.0 - plow) {
        const double qv = p - 0.5;
        const double r = qv * qv;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * qv /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double qv = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * qv + c[1]) * qv + c[2]) * qv + c[3]) * qv + c[4]) * qv + c[5]) /
            ((((dd[0] * qv + dd[1]) * qv + dd[2]) * qv + dd[3]) * qv + 1.0);
    }
    // One Halley refinement against the exact CDF.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * kSqrt2Pi * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

}  // namespace threshsplit
