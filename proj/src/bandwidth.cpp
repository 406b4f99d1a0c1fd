#include "threshsplit/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "threshsplit/errors.hpp"
#include "threshsplit/threads.hpp"
#include "threshsplit/two_step.hpp"

namespace threshsplit {

namespace {

Dataset drop_row(const Dataset& data, Eigen::Index drop) {
    const Eigen::Index n = data.n();
    Dataset out;
    out.norm = data.norm;
    out.y.resize(n - 1);
    out.q.resize(n - 1);
    out.s.resize(n - 1);
    out.X.resize(n - 1, data.d());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i == drop) continue;
        out.y(r) = data.y(i);
        out.q(r) = data.q(i);
        out.s(r) = data.s(i);
        out.X.row(r) = data.X.row(i);
        ++r;
    }
    return out;
}

// Window with the same S0 bounds but the grid restricted to the remaining
// observed s values, so the curve is fitted exactly where it is consumed.
EvalWindow observed_window(const Dataset& subdata, const EvalWindow& window) {
    EvalWindow out;
    out.s0_lo = window.s0_lo;
    out.s0_hi = window.s0_hi;
    std::vector<double> pts;
    for (Eigen::Index j = 0; j < subdata.n(); ++j) {
        const double sj = subdata.s(j);
        if (sj >= window.s0_lo && sj <= window.s0_hi) pts.push_back(sj);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    out.grid = std::move(pts);
    return out;
}

double local_mean_fallback(const Dataset& subdata, double s, double b_n,
                           const KernelSpec& kernel) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < subdata.n(); ++j) {
        const double w = eval_kernel(kernel, (subdata.s(j) - s) / b_n);
        num += w * subdata.y(j);
        den += w;
    }
    if (den > 0.0) return num / den;
    return subdata.y.mean();
}

}  // namespace

double loo_cv_criterion(const Dataset& data, const EvalWindow& window, double c,
                        const KernelSpec& kernel, const TrimSpec& trim,
                        std::size_t n_threads) {
    if (!(c > 0.0)) throw SizeError("bandwidth constant must be positive");
    const auto n = static_cast<std::size_t>(data.n());
    if (n < 3) throw SizeError("leave-one-out needs at least 3 observations");

    const double b_n = c / std::sqrt(static_cast<double>(n));
    const double pi_n = truncation_pi_n(n, b_n);

    std::vector<Eigen::Index> held;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (data.s(i) >= window.s0_lo && data.s(i) <= window.s0_hi) held.push_back(i);
    }
    if (held.empty()) throw EmptyWindowError("no observations with s inside the window");

    std::vector<double> sq_err(held.size(), 0.0);
    std::vector<char> fit_ok(held.size(), 0);

    parallel_for(
        held.size(),
        [&](std::size_t k) {
            const Eigen::Index i = held[k];
            const Dataset subdata = drop_row(data, i);
            double pred;
            try {
                const EvalWindow sub_window = observed_window(subdata, window);
                const ThresholdCurve curve =
                    estimate_threshold_curve(subdata, sub_window, b_n, kernel, trim, 1);
                const ThetaEstimate theta =
                    estimate_theta(subdata, curve, sub_window, pi_n);
                const double gamma_i =
                    estimate_gamma_at(subdata, data.s(i), b_n, kernel, trim).gamma_hat;
                pred = data.X.row(i).dot(theta.beta_hat);
                if (data.q(i) <= gamma_i) pred += data.X.row(i).dot(theta.delta_hat);
                fit_ok[k] = 1;
            } catch (const Error&) {
                pred = local_mean_fallback(subdata, data.s(i), b_n, kernel);
            }
            const double err = data.y(i) - pred;
            sq_err[k] = err * err;
        },
        n_threads);

    std::size_t n_ok = 0;
    double total = 0.0;
    for (std::size_t k = 0; k < held.size(); ++k) {
        total += sq_err[k];
        n_ok += fit_ok[k];
    }
    if (n_ok == 0) {
        throw CvInfeasibleError("every leave-one-out fit failed at c=" + std::to_string(c));
    }
    return total;
}

std::vector<double> default_c_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0 && hi > lo) || count < 1) throw SizeError("invalid bandwidth grid");
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lo;
        return grid;
    }
    const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) {
        grid[k] = std::exp(std::log(lo) + step * static_cast<double>(k));
    }
    grid.back() = hi;
    return grid;
}

CVResult select_bandwidth(const Dataset& data, const EvalWindow& window,
                          const std::vector<double>& c_grid, const KernelSpec& kernel,
                          const TrimSpec& trim, std::size_t n_threads) {
    if (c_grid.empty()) throw SizeError("bandwidth grid is empty");
    std::vector<double> grid = c_grid;
    std::sort(grid.begin(), grid.end());

    CVResult result;
    result.c_grid = grid;
    result.criterion.assign(grid.size(), std::numeric_limits<double>::infinity());

    for (std::size_t k = 0; k < grid.size(); ++k) {
        try {
            result.criterion[k] = loo_cv_criterion(data, window, grid[k], kernel, trim,
                                                   n_threads);
        } catch (const Error&) {
            // infeasible c stays at +inf
        }
    }

    std::size_t best = grid.size();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (std::isfinite(result.criterion[k]) &&
            (best == grid.size() || result.criterion[k] < result.criterion[best])) {
            best = k;
        }
    }
    if (best == grid.size()) {
        throw CvInfeasibleError("cross-validation failed at every grid value");
    }
    result.c_star = grid[best];
    result.b_n_star = result.c_star / std::sqrt(static_cast<double>(data.n()));
    return result;
}

}  // namespace threshsplit
