#include "threshsplit/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "threshsplit/errors.hpp"
#include "threshsplit/threads.hpp"

namespace threshsplit {

namespace {

double sum_kernel_weights(const Dataset& data, double s, double b_n,
                          const KernelSpec& kernel) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        total += eval_kernel(kernel, (data.s(i) - s) / b_n);
    }
    return total;
}

double sample_sd(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    if (n < 2) return 0.0;
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
}

Eigen::MatrixXd invert_moment_block(const Eigen::MatrixXd& block, const char* name) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block);
    if (es.info() != Eigen::Success) {
        throw SingularMomentError(std::string("eigendecomposition failed for ") + name);
    }
    const double emax = es.eigenvalues().cwiseAbs().maxCoeff();
    const double cutoff = 1e-12 * std::max(emax, 1e-300);
    if (es.eigenvalues().minCoeff() <= cutoff) {
        throw SingularMomentError(std::string("singular moment block: ") + name);
    }
    Eigen::VectorXd inv = es.eigenvalues().cwiseInverse();
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double lr_statistic(const Dataset& data, double s, double b_n, const KernelSpec& kernel,
                    double gamma_null, double gamma_hat) {
    const double sse_null = concentrated_sse(data, s, b_n, kernel, gamma_null).sse;
    const double sse_hat = concentrated_sse(data, s, b_n, kernel, gamma_hat).sse;
    if (!(sse_hat > 0.0)) {
        throw DegenerateFitError("fitted model has zero residual sum of squares at s=" +
                                 std::to_string(s));
    }
    const double sum_w = sum_kernel_weights(data, s, b_n, kernel);
    // The minimizer property makes this nonnegative; clamp tiny fp negatives.
    return std::max(0.0, sum_w * (sse_null - sse_hat) / sse_hat);
}

double lr_critical_value(double level, double kappa2) {
    if (!(level > 0.0 && level < 1.0)) throw SizeError("test level must lie in (0,1)");
    if (!(kappa2 > 0.0)) throw SizeError("kappa2 must be positive");
    return -2.0 * kappa2 * std::log(1.0 - std::sqrt(level));
}

NwBands default_nw_bands(const Dataset& data, double b_n, double scale_q, double scale_s) {
    const auto n = static_cast<double>(data.n());
    NwBands bands;
    bands.b_n = b_n;
    bands.b_q = scale_q * sample_sd(data.q) * std::pow(n, -0.2);
    bands.b_s = scale_s * sample_sd(data.s) * std::pow(n, -1.0 / 6.0);
    return bands;
}

Eigen::VectorXd model_residuals(const Dataset& data, const ThresholdCurve& curve,
                                const ThetaEstimate& theta, CurveEval eval_mode) {
    Eigen::VectorXd resid(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double gi = curve.eval_at(data.s(i), eval_mode);
        if (std::isnan(gi)) {
            resid(i) = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        double fit = data.X.row(i).dot(theta.beta_hat);
        if (data.q(i) <= gi) fit += data.X.row(i).dot(theta.delta_hat);
        resid(i) = data.y(i) - fit;
    }
    return resid;
}

double xi_lr_hat(const Dataset& data, double s, double gamma_at_s,
                 const Eigen::VectorXd& delta_hat, const Eigen::VectorXd& residuals,
                 const NwBands& bands, const KernelSpec& kernel) {
    if (residuals.size() != data.n()) throw ShapeError("residual vector length mismatch");
    if (!(bands.b_n > 0.0 && bands.b_q > 0.0 && bands.b_s > 0.0)) {
        throw SizeError("scale-estimator bandwidths must be positive");
    }
    const Eigen::Index d = data.d();
    if (delta_hat.size() != d) throw ShapeError("delta vector length mismatch");

    double w1_sum = 0.0, sigma2_num = 0.0;
    double w2_sum = 0.0;
    Eigen::MatrixXd d_num = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd v_num = Eigen::MatrixXd::Zero(d, d);

    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double ui = residuals(i);
        if (!std::isfinite(ui)) continue;
        const double w1 = eval_kernel(kernel, (data.s(i) - s) / bands.b_n);
        w1_sum += w1;
        sigma2_num += w1 * ui * ui;
        const double w2 = product_kernel(kernel, (data.q(i) - gamma_at_s) / bands.b_q,
                                         (data.s(i) - s) / bands.b_s);
        if (w2 > 0.0) {
            const auto xi = data.X.row(i).transpose();
            w2_sum += w2;
            d_num.noalias() += w2 * xi * xi.transpose();
            v_num.noalias() += w2 * ui * ui * xi * xi.transpose();
        }
    }

    if (!(w1_sum > 0.0) || !(w2_sum > 0.0)) {
        throw EmptyNeighborhoodError("no kernel mass near (gamma_hat(s), s) for the scale estimator");
    }
    const double sigma2 = sigma2_num / w1_sum;
    const double dDd = delta_hat.dot((d_num / w2_sum) * delta_hat);
    const double dVd = delta_hat.dot((v_num / w2_sum) * delta_hat);
    if (!(sigma2 > 0.0) || !(dDd > 0.0)) {
        throw DegenerateFitError("degenerate variance components in the scale estimator");
    }
    return kappa2(kernel) * dVd / (sigma2 * dDd);
}

LRTestResult run_lr_test(const Dataset& data, double s, double b_n,
                         const KernelSpec& kernel, const TrimSpec& trim,
                         double gamma_null, double level, TestMode mode,
                         double xi_value) {
    const LocalFitPoint fit = estimate_gamma_at(data, s, b_n, kernel, trim);
    const double k2 = kappa2(kernel);

    LRTestResult result;
    result.s = s;
    result.gamma_null = gamma_null;
    result.gamma_hat = fit.gamma_hat;
    result.level = level;
    result.lr_stat = lr_statistic(data, s, b_n, kernel, gamma_null, fit.gamma_hat);
    result.critical_value = lr_critical_value(level, k2);
    if (mode == TestMode::homoskedastic) {
        result.xi_lr_hat = k2;
    } else {
        if (!(xi_value > 0.0)) throw SizeError("scaled test requires a positive xi estimate");
        result.xi_lr_hat = xi_value;
    }
    result.reject = result.lr_stat > result.critical_value * (result.xi_lr_hat / k2);
    return result;
}

ConfidenceSet invert_ci(const Dataset& data, double s, double b_n,
                        const KernelSpec& kernel, const TrimSpec& trim, double level,
                        double cv_scale) {
    if (!(cv_scale > 0.0)) throw SizeError("critical-value scale must be positive");

    std::vector<CandidateSse> profile;
    const LocalFitPoint fit = estimate_gamma_at(data, s, b_n, kernel, trim, &profile);
    const double sum_w = sum_kernel_weights(data, s, b_n, kernel);
    const double cv = lr_critical_value(level, kappa2(kernel)) * cv_scale;

    ConfidenceSet set;
    set.s = s;
    set.level = level;
    set.gamma_hat = fit.gamma_hat;
    for (const auto& cand : profile) {
        double lr;
        if (fit.sse_at_min > 0.0) {
            lr = std::max(0.0, sum_w * (cand.sse - fit.sse_at_min) / fit.sse_at_min);
        } else {
            // Perfect fit: only candidates that also fit perfectly survive.
            lr = cand.sse > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        }
        if (lr <= cv) set.accepted.push_back(cand.gamma);
    }
    std::sort(set.accepted.begin(), set.accepted.end());
    set.hull_lo = set.accepted.front();
    set.hull_hi = set.accepted.back();
    return set;
}

Eigen::MatrixXd conley_lrv(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& coords,
                           std::size_t lag_cutoff, double lag_scale, TaperKind taper,
                           bool* psd_clipped, std::size_t n_threads) {
    const Eigen::Index n = scores.rows();
    const Eigen::Index p = scores.cols();
    if (coords.rows() != n) throw ShapeError("scores and coordinates disagree on n");
    if (n == 0) throw EmptyDataError("no score rows");
    if (!(lag_scale > 0.0)) throw SizeError("lag scale must be positive");
    if (psd_clipped) *psd_clipped = false;

    const double band = static_cast<double>(lag_cutoff) + 1.0;
    const Eigen::Index n_coord = coords.cols();

    // v_i = sum_j w_ij g_j, computed per row in parallel; the final product
    // G' V is a deterministic single reduction.
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, p);
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t iu) {
            const auto i = static_cast<Eigen::Index>(iu);
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(p);
            for (Eigen::Index j = 0; j < n; ++j) {
                double w = 1.0;
                for (Eigen::Index k = 0; k < n_coord && w > 0.0; ++k) {
                    const double lag = lag_scale * std::abs(coords(i, k) - coords(j, k));
                    if (taper == TaperKind::bartlett) {
                        w *= std::max(0.0, 1.0 - lag / band);
                    } else if (lag > static_cast<double>(lag_cutoff)) {
                        w = 0.0;
                    }
                }
                if (w > 0.0) acc += w * scores.row(j);
            }
            v.row(i) = acc;
        },
        n_threads);

    Eigen::MatrixXd omega = (scores.transpose() * v) / static_cast<double>(n);
    omega = ((omega + omega.transpose()) / 2.0).eval();

    if (taper == TaperKind::uniform) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
        if (es.info() == Eigen::Success && es.eigenvalues().minCoeff() < 0.0) {
            Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
            omega = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
            if (psd_clipped) *psd_clipped = true;
        }
    }
    return omega;
}

VcovEstimate theta_vcov(const Dataset& data, const ThresholdCurve& curve,
                        const EvalWindow& window, const ThetaEstimate& theta,
                        const VcovOptions& opts) {
    const Eigen::Index d = data.d();
    const double pi_n = theta.pi_n;

    std::vector<Eigen::Index> rows;
    rows.reserve(static_cast<std::size_t>(data.n()));
    std::vector<double> gamma_at;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double si = data.s(i);
        if (si < window.s0_lo || si > window.s0_hi) continue;
        const double gi = curve.eval_at(si, opts.eval_mode);
        if (std::isnan(gi)) continue;
        rows.push_back(i);
        gamma_at.push_back(gi);
    }
    const auto nw = static_cast<Eigen::Index>(rows.size());
    if (nw == 0) throw EmptyWindowError("no usable observations inside the window");

    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(nw, 2 * d);
    Eigen::MatrixXd coords(nw, 2);
    Eigen::MatrixXd m_up = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd m_low = Eigen::MatrixXd::Zero(d, d);

    for (Eigen::Index r = 0; r < nw; ++r) {
        const Eigen::Index i = rows[static_cast<std::size_t>(r)];
        const double gi = gamma_at[static_cast<std::size_t>(r)];
        const double qi = data.q(i);
        bool in_up, in_low;
        if (opts.indicators == VcovIndicators::truncated) {
            in_up = qi > gi + pi_n;
            in_low = qi < gi - pi_n;
        } else {
            in_up = qi > gi;
            in_low = qi <= gi;
        }
        double fit = data.X.row(i).dot(theta.beta_hat);
        if (qi <= gi) fit += data.X.row(i).dot(theta.delta_hat);
        const double ui = data.y(i) - fit;

        const auto xi = data.X.row(i).transpose();
        if (in_up) {
            m_up.noalias() += xi * xi.transpose();
            scores.block(r, 0, 1, d) = (ui * xi).transpose();
        }
        if (in_low) {
            m_low.noalias() += xi * xi.transpose();
            scores.block(r, d, 1, d) = (ui * xi).transpose();
        }
        coords(r, 0) = qi;
        coords(r, 1) = data.s(i);
    }

    const auto nwd = static_cast<double>(nw);
    VcovEstimate out;
    out.lag_cutoff = opts.lag_cutoff;
    out.adjusted = opts.adjusted;
    out.sigma_x_star = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    out.sigma_x_star.topLeftCorner(d, d) = m_up / nwd;
    out.sigma_x_star.bottomRightCorner(d, d) = m_low / nwd;

    const double lag_scale = opts.lag_scale > 0.0 ? opts.lag_scale
                                                  : static_cast<double>(data.n());
    out.omega_star = conley_lrv(scores, coords, opts.lag_cutoff, lag_scale, opts.taper,
                                &out.psd_clipped, opts.n_threads);
    if (opts.adjusted) {
        if (!(theta.truncation_fraction > 0.0)) {
            throw SizeError("truncation fraction must be positive for the adjustment");
        }
        out.omega_star /= theta.truncation_fraction;
    }

    Eigen::MatrixXd sx_inv = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    sx_inv.topLeftCorner(d, d) = invert_moment_block(m_up / nwd, "upper regime");
    sx_inv.bottomRightCorner(d, d) = invert_moment_block(m_low / nwd, "lower regime");

    out.vcov_theta_star = sx_inv * out.omega_star * sx_inv / nwd;
    out.vcov_theta_star = ((out.vcov_theta_star + out.vcov_theta_star.transpose()) / 2.0).eval();

    // theta = T theta_star with T = [[I,0],[-I,I]].
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    t.topLeftCorner(d, d) = Eigen::MatrixXd::Identity(d, d);
    t.bottomLeftCorner(d, d) = -Eigen::MatrixXd::Identity(d, d);
    t.bottomRightCorner(d, d) = Eigen::MatrixXd::Identity(d, d);
    out.vcov_theta = t * out.vcov_theta_star * t.transpose();
    return out;
}

}  // namespace threshsplit
