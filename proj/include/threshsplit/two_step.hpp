#pragma once

#include <Eigen/Dense>
#include <cstddef>

#include "threshsplit/dataset.hpp"
#include "threshsplit/local_threshold.hpp"

namespace threshsplit {

// Regime coefficients estimated on observations at least pi_n away from the
// fitted threshold, restricted to s inside the evaluation window.
struct ThetaEstimate {
    Eigen::VectorXd beta_hat;        // upper regime (q > gamma + pi_n)
    Eigen::VectorXd delta_star_hat;  // lower regime (q < gamma - pi_n)
    Eigen::VectorXd delta_hat;       // delta_star - beta
    std::size_t n_plus = 0;
    std::size_t n_minus = 0;
    std::size_t n_window = 0;        // observations with s in the window
    std::size_t n_curve_failed = 0;  // window obs mapped to failed curve points
    double truncation_fraction = 0.0;
    double pi_n = 0.0;
};

// Truncation margin (n * b_n)^(-1/2).
double truncation_pi_n(std::size_t n, double b_n);

ThetaEstimate estimate_theta(const Dataset& data, const ThresholdCurve& curve,
                             const EvalWindow& window, double pi_n,
                             CurveEval eval_mode = CurveEval::nearest);

}  // namespace threshsplit
