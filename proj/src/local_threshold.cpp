#include "threshsplit/local_threshold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "threshsplit/errors.hpp"
#include "threshsplit/threads.hpp"

namespace threshsplit {

namespace {

constexpr double kWeightFloorRel = 1e-8;   // admissibility floor relative to K(0)
constexpr double kPinvCutoffRel = 1e-10;   // eigenvalue cutoff relative to the largest
constexpr double kTieRel = 1e-10;          // relative SSE tie tolerance

// Solves the symmetric PSD normal equations M x = b, falling back to a
// spectral pseudo-inverse when the direct factorization is unreliable.
Eigen::VectorXd solve_gram(const Eigen::MatrixXd& M, const Eigen::VectorXd& b) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() == Eigen::Success) {
        Eigen::VectorXd x = ldlt.solve(b);
        const double resid = (M * x - b).norm();
        const double scale = M.norm() * x.norm() + b.norm();
        if (x.allFinite() && resid <= 1e-8 * std::max(scale, 1e-300)) return x;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) {
        throw SingularDesignError("eigendecomposition of local Gram matrix failed");
    }
    const Eigen::VectorXd& evals = es.eigenvalues();
    const double emax = evals.cwiseAbs().maxCoeff();
    if (!(emax > 0.0)) {
        throw SingularDesignError("local Gram matrix is numerically zero");
    }
    const double cutoff = kPinvCutoffRel * emax;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(evals.size());
    for (Eigen::Index k = 0; k < evals.size(); ++k) {
        if (evals(k) > cutoff) inv(k) = 1.0 / evals(k);
    }
    return es.eigenvectors() * (inv.asDiagonal() * (es.eigenvectors().transpose() * b));
}

// Closed-form solve for the d <= 2 hot path; returns false when the system
// is not comfortably nonsingular so the caller can take the careful path.
bool solve_fast(const Eigen::MatrixXd& M, const Eigen::VectorXd& b, Eigen::VectorXd& out) {
    const Eigen::Index d = M.rows();
    if (d == 1) {
        if (!(M(0, 0) > 1e-300)) return false;
        out(0) = b(0) / M(0, 0);
        return true;
    }
    if (d == 2) {
        const double m00 = M(0, 0), m01 = M(0, 1), m11 = M(1, 1);
        const double det = m00 * m11 - m01 * m01;
        const double tr = m00 + m11;
        if (!(det > kPinvCutoffRel * tr * tr)) return false;
        out(0) = (m11 * b(0) - m01 * b(1)) / det;
        out(1) = (m00 * b(1) - m01 * b(0)) / det;
        return true;
    }
    return false;
}

void solve_into(const Eigen::MatrixXd& M, const Eigen::VectorXd& b, Eigen::VectorXd& out) {
    if (!solve_fast(M, b, out)) out = solve_gram(M, b);
}

struct WeightedView {
    Eigen::VectorXd w;          // kernel weights, all observations
    double k0 = 0.0;            // K(0)
    double floor = 0.0;         // admissibility weight floor
    double effective_n = 0.0;   // sum(w)/K(0)
};

WeightedView make_weights(const Dataset& data, double s, double b_n,
                          const KernelSpec& kernel) {
    if (!(b_n > 0.0)) throw SizeError("bandwidth must be positive");
    WeightedView view;
    view.k0 = eval_kernel(kernel, 0.0);
    view.floor = kWeightFloorRel * view.k0;
    view.w.resize(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        view.w(i) = eval_kernel(kernel, (data.s(i) - s) / b_n);
    }
    view.effective_n = view.w.sum() / view.k0;
    return view;
}

std::vector<Eigen::Index> q_order(const Dataset& data) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.n()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return data.q(a) < data.q(b); });
    return order;
}

// Sweep over sorted candidates with incremental cross-product updates. The
// order and trim bounds are precomputed so a curve fit shares them across
// evaluation points.
LocalFitPoint sweep_gamma(const Dataset& data, const std::vector<Eigen::Index>& order,
                          double q_lo, double q_hi, double s, double b_n,
                          const KernelSpec& kernel, std::vector<CandidateSse>* profile) {
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();
    const WeightedView view = make_weights(data, s, b_n, kernel);

    Eigen::MatrixXd m_tot = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b_tot = Eigen::VectorXd::Zero(d);
    double syy = 0.0;
    std::size_t cnt_tot = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double wi = view.w(i);
        if (wi <= 0.0) continue;
        const auto xi = data.X.row(i).transpose();
        m_tot.noalias() += wi * xi * xi.transpose();
        b_tot.noalias() += wi * data.y(i) * xi;
        syy += wi * data.y(i) * data.y(i);
        if (wi >= view.floor) ++cnt_tot;
    }

    Eigen::MatrixXd m_low = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b_low = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd m_up(d, d);
    Eigen::VectorXd b_up(d);
    Eigen::VectorXd theta_low(d), theta_up(d);
    std::size_t cnt_low = 0;

    LocalFitPoint best;
    best.s = s;
    best.effective_n = view.effective_n;
    best.sse_at_min = std::numeric_limits<double>::infinity();
    bool found = false;
    std::size_t n_admissible = 0;

    std::size_t k = 0;
    const auto nu = static_cast<std::size_t>(n);
    while (k < nu) {
        const double gamma = data.q(order[k]);
        // Absorb the whole tie group so every obs with q <= gamma is inside.
        while (k < nu && data.q(order[k]) == gamma) {
            const Eigen::Index i = order[k];
            const double wi = view.w(i);
            if (wi > 0.0) {
                const auto xi = data.X.row(i).transpose();
                m_low.noalias() += wi * xi * xi.transpose();
                b_low.noalias() += wi * data.y(i) * xi;
                if (wi >= view.floor) ++cnt_low;
            }
            ++k;
        }
        if (gamma < q_lo || gamma > q_hi) continue;
        const std::size_t cnt_up = cnt_tot - cnt_low;
        const auto du = static_cast<std::size_t>(d);
        if (cnt_low < du || cnt_up < du) continue;

        ++n_admissible;
        m_up = m_tot - m_low;
        b_up = b_tot - b_low;
        solve_into(m_low, b_low, theta_low);
        solve_into(m_up, b_up, theta_up);
        const double sse = std::max(0.0, syy - b_low.dot(theta_low) - b_up.dot(theta_up));
        if (profile) profile->push_back({gamma, sse});

        // Accept only strict improvements so ties keep the smallest gamma.
        const double tol = kTieRel * std::max(best.sse_at_min, sse);
        if (!found || sse < best.sse_at_min - tol) {
            found = true;
            best.gamma_hat = gamma;
            best.sse_at_min = sse;
            best.beta_local = theta_up;
            best.delta_local = theta_low - theta_up;
        }
    }

    if (!found) {
        throw NoCandidateError("no admissible threshold candidate in trim range [" +
                               std::to_string(q_lo) + ", " + std::to_string(q_hi) +
                               "] at s=" + std::to_string(s));
    }
    best.candidate_count = n_admissible;
    return best;
}

}  // namespace

SseFit concentrated_sse(const Dataset& data, double s, double b_n,
                        const KernelSpec& kernel, double gamma) {
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();
    if (n == 0) throw EmptyDataError("empty dataset");

    const WeightedView view = make_weights(data, s, b_n, kernel);

    Eigen::MatrixXd m_low = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd m_up = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b_low = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd b_up = Eigen::VectorXd::Zero(d);
    double syy = 0.0;
    std::size_t cnt_low = 0, cnt_up = 0, cnt_any = 0;

    for (Eigen::Index i = 0; i < n; ++i) {
        const double wi = view.w(i);
        if (wi <= 0.0) continue;
        if (wi >= view.floor) {
            ++cnt_any;
            (data.q(i) <= gamma ? cnt_low : cnt_up)++;
        }
        const auto xi = data.X.row(i).transpose();
        syy += wi * data.y(i) * data.y(i);
        if (data.q(i) <= gamma) {
            m_low.noalias() += wi * xi * xi.transpose();
            b_low.noalias() += wi * data.y(i) * xi;
        } else {
            m_up.noalias() += wi * xi * xi.transpose();
            b_up.noalias() += wi * data.y(i) * xi;
        }
    }

    if (cnt_any == 0) {
        throw EmptyWindowError("all kernel weights below floor at this evaluation point");
    }
    if (cnt_low == 0 || cnt_up == 0) {
        throw SingularDesignError(std::string("empty ") +
                                  (cnt_low == 0 ? "lower" : "upper") +
                                  " regime at this candidate threshold");
    }

    SseFit fit;
    fit.beta.resize(d);
    fit.delta.resize(d);
    Eigen::VectorXd theta_low(d), theta_up(d);
    solve_into(m_low, b_low, theta_low);
    solve_into(m_up, b_up, theta_up);
    fit.beta = theta_up;
    fit.delta = theta_low - theta_up;
    fit.sse = std::max(0.0, syy - b_low.dot(theta_low) - b_up.dot(theta_up));
    return fit;
}

LocalFitPoint estimate_gamma_at(const Dataset& data, double s, double b_n,
                                const KernelSpec& kernel, const TrimSpec& trim,
                                std::vector<CandidateSse>* profile) {
    if (data.n() == 0) throw EmptyDataError("empty dataset");
    if (!(trim.lo >= 0.0 && trim.lo < trim.hi && trim.hi <= 1.0)) {
        throw SizeError("invalid candidate trim quantiles");
    }
    const double q_lo = empirical_quantile(data.q, trim.lo);
    const double q_hi = empirical_quantile(data.q, trim.hi);
    return sweep_gamma(data, q_order(data), q_lo, q_hi, s, b_n, kernel, profile);
}

std::size_t ThresholdCurve::n_failed() const {
    std::size_t c = 0;
    for (const auto& p : points) {
        if (!p.ok) ++c;
    }
    return c;
}

double ThresholdCurve::eval_at(double s, CurveEval mode) const {
    if (points.empty()) throw CurveEstimationError("curve has no points");
    const double nan = std::numeric_limits<double>::quiet_NaN();

    if (mode == CurveEval::nearest) {
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < points.size(); ++k) {
            const double dist = std::abs(points[k].s - s);
            if (dist < best_dist) {
                best_dist = dist;
                best = k;
            }
        }
        return points[best].ok ? points[best].gamma_hat : nan;
    }

    // Linear interpolation over successful points, clamped at the ends.
    std::vector<const LocalFitPoint*> ok_pts;
    ok_pts.reserve(points.size());
    for (const auto& p : points) {
        if (p.ok) ok_pts.push_back(&p);
    }
    if (ok_pts.empty()) throw CurveEstimationError("curve has no successful points");
    if (s <= ok_pts.front()->s) return ok_pts.front()->gamma_hat;
    if (s >= ok_pts.back()->s) return ok_pts.back()->gamma_hat;
    for (std::size_t k = 1; k < ok_pts.size(); ++k) {
        if (s <= ok_pts[k]->s) {
            const double s0 = ok_pts[k - 1]->s, s1 = ok_pts[k]->s;
            const double g0 = ok_pts[k - 1]->gamma_hat, g1 = ok_pts[k]->gamma_hat;
            if (s1 == s0) return g0;
            const double t = (s - s0) / (s1 - s0);
            return g0 + t * (g1 - g0);
        }
    }
    return ok_pts.back()->gamma_hat;
}

ThresholdCurve estimate_threshold_curve(const Dataset& data, const EvalWindow& window,
                                        double b_n, const KernelSpec& kernel,
                                        const TrimSpec& trim, std::size_t n_threads) {
    if (window.grid.empty()) throw EmptyWindowError("evaluation grid is empty");
    if (data.n() == 0) throw EmptyDataError("empty dataset");
    if (!(trim.lo >= 0.0 && trim.lo < trim.hi && trim.hi <= 1.0)) {
        throw SizeError("invalid candidate trim quantiles");
    }

    ThresholdCurve curve;
    curve.bandwidth = b_n;
    curve.kernel = kernel;
    curve.trim = trim;
    curve.points.resize(window.grid.size());

    // Candidate order and trim bounds are shared by every evaluation point.
    const std::vector<Eigen::Index> order = q_order(data);
    const double q_lo = empirical_quantile(data.q, trim.lo);
    const double q_hi = empirical_quantile(data.q, trim.hi);

    parallel_for(
        window.grid.size(),
        [&](std::size_t k) {
            const double s = window.grid[k];
            try {
                curve.points[k] = sweep_gamma(data, order, q_lo, q_hi, s, b_n, kernel, nullptr);
            } catch (const Error& e) {
                LocalFitPoint fail;
                fail.s = s;
                fail.gamma_hat = std::numeric_limits<double>::quiet_NaN();
                fail.sse_at_min = std::numeric_limits<double>::quiet_NaN();
                fail.effective_n = 0.0;
                fail.ok = false;
                fail.message = e.what();
                curve.points[k] = fail;
            }
        },
        n_threads);

    if (curve.n_failed() == curve.points.size()) {
        throw CurveEstimationError("estimation failed at every grid point: " +
                                   curve.points.front().message);
    }
    return curve;
}

}  // namespace threshsplit
