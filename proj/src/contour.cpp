#include "threshsplit/contour.hpp"

#include <cmath>
#include <limits>

#include "threshsplit/errors.hpp"
#include "threshsplit/threads.hpp"

namespace threshsplit {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

PolarObservation polar_transform(double q, double s) {
    PolarObservation p;
    p.q = q;
    p.s = s;
    p.l = std::hypot(q, s);
    if (p.l == 0.0) {
        p.a_deg = 0.0;
        return p;
    }
    double a = std::atan2(q, s) * 180.0 / kPi;
    if (a < 0.0) a += 360.0;
    if (a >= 360.0) a -= 360.0;
    p.a_deg = a;
    return p;
}

RotatedPoint rotate(double q, double s, double a_deg) {
    const double rad = a_deg * kPi / 180.0;
    const double c = std::cos(rad), sn = std::sin(rad);
    return {q * c - s * sn, s * c + q * sn};
}

RotatedPoint ContourEstimate::boundary_point(std::size_t k) const {
    const double r = radius_hat[k];
    const double rad = angles_deg[k] * kPi / 180.0;
    // The fitted radius lies on the rotated vertical axis; rotating back by
    // -a places it at (q,s) = r * (cos a, -sin a) in the centered frame.
    return {r * std::cos(rad), -r * std::sin(rad)};
}

double contour_area(const ContourEstimate& contour) {
    std::vector<RotatedPoint> pts;
    for (std::size_t k = 0; k < contour.angles_deg.size(); ++k) {
        if (std::isnan(contour.radius_hat[k])) continue;
        pts.push_back(contour.boundary_point(k));
    }
    if (pts.size() < 3) throw ContourError("need at least 3 boundary points for an area");
    double twice = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto& a = pts[k];
        const auto& b = pts[(k + 1) % pts.size()];
        twice += a.s * b.q - b.s * a.q;
    }
    return std::abs(twice) / 2.0;
}

ContourEstimate estimate_contour(const Dataset& centered, std::size_t angles, double b_n,
                                 const KernelSpec& kernel, const TrimSpec& trim,
                                 std::size_t n_threads) {
    if (angles < 4) throw ContourError("need at least 4 angles");
    const Eigen::Index n = centered.n();
    if (n == 0) throw EmptyDataError("empty dataset");

    ContourEstimate out;
    out.angles_deg.resize(angles);
    out.radius_hat.assign(angles, std::numeric_limits<double>::quiet_NaN());
    out.messages.assign(angles, std::string());
    std::vector<double> inner(angles, 0.0), outer(angles, 0.0);
    std::vector<char> ok(angles, 0);

    parallel_for(
        angles,
        [&](std::size_t k) {
            const double a = 360.0 * static_cast<double>(k) / static_cast<double>(angles);
            out.angles_deg[k] = a;
            const double rad = a * kPi / 180.0;
            const double c = std::cos(rad), sn = std::sin(rad);

            // Rotate and keep the upper half plane q(a) >= 0.
            std::vector<Eigen::Index> keep;
            keep.reserve(static_cast<std::size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) {
                const double qa = centered.q(i) * c - centered.s(i) * sn;
                if (qa >= 0.0) keep.push_back(i);
            }
            try {
                if (keep.size() < 2 * static_cast<std::size_t>(centered.d())) {
                    throw NoCandidateError("too few observations in the half plane");
                }
                Dataset sub;
                sub.norm = centered.norm;
                const auto m = static_cast<Eigen::Index>(keep.size());
                sub.y.resize(m);
                sub.q.resize(m);
                sub.s.resize(m);
                sub.X.resize(m, centered.d());
                for (Eigen::Index r = 0; r < m; ++r) {
                    const Eigen::Index i = keep[static_cast<std::size_t>(r)];
                    sub.y(r) = centered.y(i);
                    sub.X.row(r) = centered.X.row(i);
                    sub.q(r) = centered.q(i) * c - centered.s(i) * sn;
                    sub.s(r) = centered.s(i) * c + centered.q(i) * sn;
                }
                const LocalFitPoint fit = estimate_gamma_at(sub, 0.0, b_n, kernel, trim);
                out.radius_hat[k] = fit.gamma_hat;
                outer[k] = fit.beta_local(0);
                inner[k] = fit.beta_local(0) + fit.delta_local(0);
                ok[k] = 1;
            } catch (const Error& e) {
                out.messages[k] = e.what();
            }
        },
        n_threads);

    std::size_t n_ok = 0;
    double inner_sum = 0.0, outer_sum = 0.0;
    for (std::size_t k = 0; k < angles; ++k) {
        if (ok[k]) {
            ++n_ok;
            inner_sum += inner[k];
            outer_sum += outer[k];
        }
    }
    out.n_failed = angles - n_ok;
    if (n_ok == 0) {
        throw ContourError("boundary estimation failed at every angle: " + out.messages[0]);
    }
    out.inner_mean = inner_sum / static_cast<double>(n_ok);
    out.outer_mean = outer_sum / static_cast<double>(n_ok);
    return out;
}

}  // namespace threshsplit
