#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "threshsplit/dataset.hpp"
#include "threshsplit/kernels.hpp"
#include "threshsplit/rng.hpp"

namespace threshsplit {

// Spatially correlated two-regime design: (q,s) iid standard bivariate
// normal, x = (1, x2) with conditionally scaled x2, noise u ~ N(0, Sigma)
// where Sigma_ij = rho^floor(l_ij * n) inside the cutoff l_ij < m/n.
struct SimConfig {
    std::size_t n = 200;
    double delta = 2.0;
    double rho = 0.0;
    std::size_t m = 10;
    Eigen::VectorXd beta0;               // default zeros(2)
    std::string gamma0 = "sin_half";     // "sin_half" or "zero"
    double c_bandwidth = 0.5;            // b_n = c * n^(-1/2)
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    std::vector<double> eval_s = {0.0};  // raw-scale evaluation points
    double u_scale = 1.0;                // 0 gives the degenerate noiseless variant
    std::size_t n_threads = 0;
};

struct DgpDraw {
    Dataset data;                 // raw (unstandardized) draw
    Eigen::VectorXd gamma_true;   // true threshold value at each s_i
    bool psd_repaired = false;    // noise covariance needed eigenvalue clipping
    double min_eigenvalue = 1.0;  // smallest Sigma eigenvalue when repaired
};

double gamma0_value(const std::string& tag, double s);

DgpDraw gen_dgp(const SimConfig& cfg, Rng& rng);

struct SimCell {
    std::string label;
    double value = 0.0;        // frequency over successful replications
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
};

struct SimReport {
    std::vector<SimCell> cells;
    std::size_t reps_used = 0;
    double runtime_seconds = 0.0;
};

// Frequency of rejecting the true threshold function with the pointwise LR
// test (homoskedastic critical value) at each raw-scale evaluation point.
SimReport run_rejection_study(const SimConfig& cfg, double level = 0.95);

// Coverage of normal confidence intervals for the slope coefficients in the
// upper regime, lower regime, and their difference, using the spatially
// robust sandwich with lag 5 and optional truncation adjustment.
SimReport run_coverage_study(const SimConfig& cfg, bool adjusted, double level = 0.95);

// Drift of the limiting argmax process. psi_j integrals are evaluated by
// adaptive quadrature; slope 0 uses the flat-threshold limit -|r|/2.
struct DriftParams {
    double varrho = 1.0;       // local sampling intensity parameter
    double gamma0_slope = 0.0; // derivative of the threshold function at s
    double xi = 1.0;           // local scale
    KernelSpec kernel;
};

double drift_mu(const DriftParams& p, double r);

// Samples of max over r of 2W(r) - |r| on a two-sided grid of half-width R
// and step dr. With bridge_correction the within-interval maximum of the
// Brownian path is sampled exactly, removing the grid discretization bias.
std::vector<double> simulate_argmax_zeta(double R, double dr, std::size_t reps,
                                         std::uint64_t seed, bool bridge_correction = true,
                                         std::size_t n_threads = 0);

// CDF of the limiting statistic above: (1 - exp(-z/2))^2 for z >= 0.
double zeta_null_cdf(double z);

// Samples of argmax over r of W(r) + mu(r) on a two-sided grid. R = 0 picks
// 30 * max(1, inverse drift length scale) automatically.
std::vector<double> simulate_argmax_drift(const DriftParams& p, std::size_t reps,
                                          std::uint64_t seed, double R = 0.0,
                                          double dr = 0.01, std::size_t n_threads = 0);

// Same sampler with a caller-supplied drift function.
std::vector<double> simulate_argmax_drift_fn(const std::function<double(double)>& mu,
                                             double R, double dr, std::size_t reps,
                                             std::uint64_t seed, std::size_t n_threads = 0);

// Inverse standard normal CDF (Acklam's rational approximation plus one
// Halley refinement); used for CI half-widths.
double normal_quantile(double p);

}  // namespace threshsplit
