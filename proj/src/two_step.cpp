#include "threshsplit/two_step.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "threshsplit/errors.hpp"

namespace threshsplit {

namespace {

Eigen::VectorXd ols(const Dataset& data, const std::vector<Eigen::Index>& rows,
                    const char* side) {
    const Eigen::Index d = data.d();
    if (rows.size() < static_cast<std::size_t>(d)) {
        throw InsufficientRegimeError(std::string(side) + " subsample has " +
                                      std::to_string(rows.size()) +
                                      " observations, need at least " + std::to_string(d));
    }
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i : rows) {
        const auto xi = data.X.row(i).transpose();
        gram.noalias() += xi * xi.transpose();
        rhs.noalias() += data.y(i) * xi;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd coef = ldlt.solve(rhs);
    const double resid = (gram * coef - rhs).norm();
    const double scale = gram.norm() * coef.norm() + rhs.norm();
    if (ldlt.info() != Eigen::Success || !coef.allFinite() ||
        resid > 1e-8 * std::max(scale, 1e-300)) {
        throw InsufficientRegimeError(std::string(side) +
                                      " subsample design matrix is rank deficient");
    }
    return coef;
}

}  // namespace

double truncation_pi_n(std::size_t n, double b_n) {
    if (n < 1) throw SizeError("sample size must be at least 1");
    if (!(b_n > 0.0)) throw SizeError("bandwidth must be positive");
    return 1.0 / std::sqrt(static_cast<double>(n) * b_n);
}

ThetaEstimate estimate_theta(const Dataset& data, const ThresholdCurve& curve,
                             const EvalWindow& window, double pi_n,
                             CurveEval eval_mode) {
    if (pi_n < 0.0) throw SizeError("truncation margin must be nonnegative");

    ThetaEstimate theta;
    theta.pi_n = pi_n;

    std::vector<Eigen::Index> upper, lower;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double si = data.s(i);
        if (si < window.s0_lo || si > window.s0_hi) continue;
        ++theta.n_window;
        const double gi = curve.eval_at(si, eval_mode);
        if (std::isnan(gi)) {
            ++theta.n_curve_failed;
            continue;
        }
        if (data.q(i) > gi + pi_n) {
            upper.push_back(i);
        } else if (data.q(i) < gi - pi_n) {
            lower.push_back(i);
        }
    }

    if (theta.n_window == 0) {
        throw EmptyWindowError("no observations with s inside the evaluation window");
    }

    theta.beta_hat = ols(data, upper, "upper");
    theta.delta_star_hat = ols(data, lower, "lower");
    theta.delta_hat = theta.delta_star_hat - theta.beta_hat;
    theta.n_plus = upper.size();
    theta.n_minus = lower.size();
    theta.truncation_fraction =
        static_cast<double>(theta.n_plus + theta.n_minus) / static_cast<double>(theta.n_window);
    return theta;
}

}  // namespace threshsplit
