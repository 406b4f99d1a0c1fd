#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "threshsplit/dataset.hpp"
#include "threshsplit/kernels.hpp"
#include "threshsplit/local_threshold.hpp"
#include "threshsplit/two_step.hpp"

namespace threshsplit {

enum class TestMode { homoskedastic, scaled };

struct LRTestResult {
    double s = 0.0;
    double gamma_null = 0.0;
    double gamma_hat = 0.0;
    double lr_stat = 0.0;
    double xi_lr_hat = 0.0;  // equals kappa2 in homoskedastic mode
    double critical_value = 0.0;
    bool reject = false;
    double level = 0.0;
};

struct ConfidenceSet {
    double s = 0.0;
    double level = 0.0;
    double gamma_hat = 0.0;
    std::vector<double> accepted;  // sorted candidate thresholds kept by the test
    double hull_lo = 0.0;
    double hull_hi = 0.0;
};

struct VcovEstimate {
    Eigen::MatrixXd sigma_x_star;     // 2d x 2d block diagonal moment matrix
    Eigen::MatrixXd omega_star;       // 2d x 2d spatial long-run variance
    Eigen::MatrixXd vcov_theta_star;  // sandwich for (beta, delta_star)
    Eigen::MatrixXd vcov_theta;      // congruence transform to (beta, delta)
    std::size_t lag_cutoff = 0;
    bool adjusted = false;
    bool psd_clipped = false;
};

// Pointwise likelihood-ratio statistic: sum of kernel weights times the
// relative SSE gap between the null threshold and the fitted one.
double lr_statistic(const Dataset& data, double s, double b_n, const KernelSpec& kernel,
                    double gamma_null, double gamma_hat);

// Critical value from the closed-form null distribution (1-exp(-z/2k2))^2.
double lr_critical_value(double level, double kappa2);

// Bandwidths for the plug-in scale estimator. Defaults follow rule-of-thumb
// rates: b_q = scale_q * sd(q) * n^(-1/5), b_s = scale_s * sd(s) * n^(-1/6).
struct NwBands {
    double b_n = 0.0;  // band over the splitting covariate for sigma^2(s)
    double b_q = 0.0;  // product-kernel band over the threshold variable
    double b_s = 0.0;  // product-kernel band over the splitting covariate
};

NwBands default_nw_bands(const Dataset& data, double b_n, double scale_q = 1.0,
                         double scale_s = 1.0);

// Residuals of the fitted two-regime model, using the curve to place each
// observation; NaN where the curve evaluation failed.
Eigen::VectorXd model_residuals(const Dataset& data, const ThresholdCurve& curve,
                                const ThetaEstimate& theta,
                                CurveEval eval_mode = CurveEval::nearest);

// Plug-in scale ratio kappa2 * d'Vd / (sigma2(s) * d'Dd) with Nadaraya-Watson
// weights; equals kappa2 under conditional homoskedasticity.
double xi_lr_hat(const Dataset& data, double s, double gamma_at_s,
                 const Eigen::VectorXd& delta_hat, const Eigen::VectorXd& residuals,
                 const NwBands& bands, const KernelSpec& kernel);

// Convenience wrapper running one pointwise test at (s, gamma_null).
LRTestResult run_lr_test(const Dataset& data, double s, double b_n,
                         const KernelSpec& kernel, const TrimSpec& trim,
                         double gamma_null, double level, TestMode mode,
                         double xi_value = 0.0);

// Confidence set by test inversion over the admissible candidate profile.
// cv_scale multiplies the critical value (xi_hat/kappa2 for the scaled test).
ConfidenceSet invert_ci(const Dataset& data, double s, double b_n,
                        const KernelSpec& kernel, const TrimSpec& trim, double level,
                        double cv_scale = 1.0);

enum class TaperKind { bartlett, uniform };

// Spatial long-run variance of score rows: (1/n) sum_ij w(d_ij) g_i g_j' with
// per-coordinate taper weights on lag_scale * |coordinate difference|.
Eigen::MatrixXd conley_lrv(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& coords,
                           std::size_t lag_cutoff, double lag_scale = 1.0,
                           TaperKind taper = TaperKind::bartlett,
                           bool* psd_clipped = nullptr, std::size_t n_threads = 0);

// Which regime indicators enter the moment blocks and scores: the truncated
// regression subsamples (default) or the plain split at the fitted threshold.
enum class VcovIndicators { truncated, plain };

struct VcovOptions {
    std::size_t lag_cutoff = 5;
    double lag_scale = 0.0;  // 0 means the sample size n
    bool adjusted = false;
    TaperKind taper = TaperKind::bartlett;
    VcovIndicators indicators = VcovIndicators::truncated;
    CurveEval eval_mode = CurveEval::nearest;
    std::size_t n_threads = 0;
};

VcovEstimate theta_vcov(const Dataset& data, const ThresholdCurve& curve,
                        const EvalWindow& window, const ThetaEstimate& theta,
                        const VcovOptions& opts = VcovOptions{});

}  // namespace threshsplit
