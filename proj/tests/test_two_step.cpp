#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "threshsplit/dataset.hpp"
#include "threshsplit/errors.hpp"
#include "threshsplit/local_threshold.hpp"
#include "threshsplit/rng.hpp"
#include "threshsplit/two_step.hpp"

using namespace threshsplit;

namespace {

// Curve that reports a constant threshold at a single successful grid point;
// nearest-point evaluation then returns it everywhere.
ThresholdCurve flat_curve(double gamma) {
    ThresholdCurve curve;
    LocalFitPoint p;
    p.s = 0.0;
    p.gamma_hat = gamma;
    p.sse_at_min = 0.0;
    p.ok = true;
    curve.points.push_back(p);
    return curve;
}

EvalWindow wide_window() {
    EvalWindow w;
    w.s0_lo = -1e9;
    w.s0_hi = 1e9;
    w.grid = {0.0};
    return w;
}

Eigen::VectorXd ols_oracle(const Dataset& data, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd X(rows.size(), data.d());
    Eigen::VectorXd y(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        X.row(static_cast<Eigen::Index>(k)) = data.X.row(rows[k]);
        y(static_cast<Eigen::Index>(k)) = data.y(rows[k]);
    }
    return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

}  // namespace

TEST_CASE("truncation margin arithmetic") {
    CHECK(truncation_pi_n(4, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(truncation_pi_n(100, 1.0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(truncation_pi_n(10, 1.0) == doctest::Approx(0.31622776601683794).epsilon(1e-15));
    CHECK(truncation_pi_n(100, 0.25) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(truncation_pi_n(0, 1.0), SizeError);
    CHECK_THROWS_AS(truncation_pi_n(10, 0.0), SizeError);
    CHECK_THROWS_AS(truncation_pi_n(10, -1.0), SizeError);
}

TEST_CASE("noiseless flat split recovers the exact coefficients") {
    const std::size_t n = 80;
    Dataset data;
    data.y.resize(n);
    data.X = Eigen::MatrixXd::Ones(n, 1);
    data.q.resize(n);
    data.s.resize(n);
    Rng rng(31);
    for (std::size_t i = 0; i < n; ++i) {
        data.q(i) = rng.normal();
        data.s(i) = rng.normal();
        data.y(i) = 1.0 + (data.q(i) <= 0.0 ? 3.0 : 0.0);
    }
    ThetaEstimate theta = estimate_theta(data, flat_curve(0.0), wide_window(), 0.0);
    CHECK(theta.beta_hat(0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(theta.delta_star_hat(0) == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(theta.delta_hat(0) == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(theta.n_plus + theta.n_minus == n);
    CHECK(theta.n_window == n);
    CHECK(theta.n_curve_failed == 0);
    CHECK(theta.truncation_fraction == doctest::Approx(1.0));
    CHECK(theta.pi_n == 0.0);
}

TEST_CASE("regime estimates match an independent least squares oracle") {
    Rng rng(32);
    Dataset data = test_util::make_two_regime_flat(
        120, 2, Eigen::Vector2d(0.5, -1.0), Eigen::Vector2d(2.0, 1.5), 0.2, 0.7, 32);
    (void)rng;
    const double pi_n = 0.1;
    ThetaEstimate theta = estimate_theta(data, flat_curve(0.2), wide_window(), pi_n);

    std::vector<Eigen::Index> upper, lower;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (data.q(i) > 0.2 + pi_n) upper.push_back(i);
        if (data.q(i) < 0.2 - pi_n) lower.push_back(i);
    }
    Eigen::VectorXd beta_ref = ols_oracle(data, upper);
    Eigen::VectorXd dstar_ref = ols_oracle(data, lower);

    CHECK((theta.beta_hat - beta_ref).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((theta.delta_star_hat - dstar_ref).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((theta.delta_hat - (dstar_ref - beta_ref)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(theta.n_plus == upper.size());
    CHECK(theta.n_minus == lower.size());
}

TEST_CASE("delta equals the difference of the two regressions by construction") {
    Dataset data = test_util::make_two_regime_flat(
        60, 2, Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 2.0), -0.3, 1.0, 33);
    ThetaEstimate theta = estimate_theta(data, flat_curve(-0.3), wide_window(), 0.05);
    CHECK((theta.delta_hat - (theta.delta_star_hat - theta.beta_hat)).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("larger truncation margins keep fewer observations") {
    Dataset data = test_util::make_two_regime_flat(
        200, 1, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 0.0, 0.5, 34);
    std::size_t prev = data.n() + 1;
    for (double pi : {0.0, 0.1, 0.3, 0.6}) {
        ThetaEstimate theta = estimate_theta(data, flat_curve(0.0), wide_window(), pi);
        const std::size_t kept = theta.n_plus + theta.n_minus;
        CHECK(kept < prev);
        CHECK(theta.truncation_fraction ==
              doctest::Approx(static_cast<double>(kept) / static_cast<double>(data.n())));
        prev = kept;
    }
}

TEST_CASE("an oversized margin raises an insufficient-regime error naming the side") {
    Dataset data = test_util::make_two_regime_flat(
        50, 1, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 0.0, 0.5, 35);
    try {
        estimate_theta(data, flat_curve(0.0), wide_window(), 1e6);
        FAIL("expected InsufficientRegimeError");
    } catch (const InsufficientRegimeError& e) {
        const std::string msg = e.what();
        CHECK((msg.find("upper") != std::string::npos ||
               msg.find("lower") != std::string::npos));
    }
}

TEST_CASE("negative margin is rejected") {
    Dataset data = test_util::make_two_regime_flat(
        30, 1, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 0.0, 0.5, 36);
    CHECK_THROWS_AS(estimate_theta(data, flat_curve(0.0), wide_window(), -0.1), SizeError);
}

TEST_CASE("observations at failed curve points are excluded and counted") {
    Dataset data;
    const std::size_t n = 40;
    data.y.resize(n);
    data.X = Eigen::MatrixXd::Ones(n, 1);
    data.q.resize(n);
    data.s.resize(n);
    Rng rng(37);
    for (std::size_t i = 0; i < n; ++i) {
        data.q(i) = rng.normal();
        // Half the sample sits near s = 0, half near s = 10.
        data.s(i) = (i % 2 == 0 ? 0.0 : 10.0) + 0.1 * rng.normal();
        data.y(i) = 1.0 + (data.q(i) <= 0.0 ? 2.0 : 0.0);
    }
    ThresholdCurve curve;
    LocalFitPoint ok_pt;
    ok_pt.s = 0.0;
    ok_pt.gamma_hat = 0.0;
    ok_pt.ok = true;
    LocalFitPoint bad_pt;
    bad_pt.s = 10.0;
    bad_pt.gamma_hat = std::numeric_limits<double>::quiet_NaN();
    bad_pt.ok = false;
    bad_pt.message = "synthetic failure";
    curve.points = {ok_pt, bad_pt};

    ThetaEstimate theta = estimate_theta(data, curve, wide_window(), 0.0);
    CHECK(theta.n_window == n);
    CHECK(theta.n_curve_failed == n / 2);
    CHECK(theta.n_plus + theta.n_minus == n / 2);
    // Truncation fraction is relative to the window population.
    CHECK(theta.truncation_fraction == doctest::Approx(0.5));
    CHECK(theta.beta_hat(0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("observations outside the window are not used") {
    Dataset data = test_util::make_two_regime_flat(
        100, 1, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 0.0, 0.3, 38);
    EvalWindow narrow;
    narrow.s0_lo = -0.5;
    narrow.s0_hi = 0.5;
    narrow.grid = {0.0};
    ThetaEstimate theta = estimate_theta(data, flat_curve(0.0), narrow, 0.0);
    std::size_t inside = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (data.s(i) >= -0.5 && data.s(i) <= 0.5) ++inside;
    }
    CHECK(theta.n_window == inside);
    CHECK(theta.n_plus + theta.n_minus <= inside);

    EvalWindow empty_win;
    empty_win.s0_lo = 100.0;
    empty_win.s0_hi = 101.0;
    empty_win.grid = {100.5};
    CHECK_THROWS_AS(estimate_theta(data, flat_curve(0.0), empty_win, 0.0),
                    EmptyWindowError);
}
