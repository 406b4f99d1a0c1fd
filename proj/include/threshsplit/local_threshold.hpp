#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "threshsplit/dataset.hpp"
#include "threshsplit/kernels.hpp"

namespace threshsplit {

// Candidate thresholds are observed q values between these global quantiles.
struct TrimSpec {
    double lo = 0.05;
    double hi = 0.95;
};

// Local fit at one evaluation point s. When ok is false the numeric fields
// are NaN and message explains the failure; failed points are kept so that
// downstream consumers can count them instead of silently losing them.
struct LocalFitPoint {
    double s = 0.0;
    double gamma_hat = 0.0;
    double sse_at_min = 0.0;
    Eigen::VectorXd beta_local;   // upper-regime coefficients (q > gamma)
    Eigen::VectorXd delta_local;  // regime difference (lower minus upper)
    double effective_n = 0.0;     // sum of kernel weights / K(0)
    std::size_t candidate_count = 0;
    bool ok = true;
    std::string message;
};

enum class CurveEval { nearest, linear };

struct ThresholdCurve {
    std::vector<LocalFitPoint> points;  // ordered by s
    double bandwidth = 0.0;
    KernelSpec kernel;
    TrimSpec trim;

    std::size_t n_failed() const;

    // Threshold value at an arbitrary s. In nearest mode this is the value
    // at the closest grid point; NaN if that point failed. In linear mode it
    // interpolates between successful points, clamping beyond the ends.
    double eval_at(double s, CurveEval mode = CurveEval::nearest) const;
};

struct SseFit {
    double sse = 0.0;
    Eigen::VectorXd beta;   // upper-regime coefficients
    Eigen::VectorXd delta;  // lower minus upper
};

// Kernel-weighted concentrated SSE at a fixed candidate threshold: weighted
// least squares of y on [X, X*1(q<=gamma)] with weights K((s_i-s)/b_n).
SseFit concentrated_sse(const Dataset& data, double s, double b_n,
                        const KernelSpec& kernel, double gamma);

struct CandidateSse {
    double gamma = 0.0;
    double sse = 0.0;
};

// Minimizes the concentrated SSE over admissible candidates via one sorted
// sweep with incremental cross-product updates. If profile is non-null it
// receives (gamma, sse) for every admissible candidate in ascending gamma.
LocalFitPoint estimate_gamma_at(const Dataset& data, double s, double b_n,
                                const KernelSpec& kernel, const TrimSpec& trim,
                                std::vector<CandidateSse>* profile = nullptr);

// Runs estimate_gamma_at over the window grid, in parallel. Per-point
// failures become failure markers; throws only if every point fails.
ThresholdCurve estimate_threshold_curve(const Dataset& data, const EvalWindow& window,
                                        double b_n, const KernelSpec& kernel,
                                        const TrimSpec& trim = TrimSpec{},
                                        std::size_t n_threads = 0);

}  // namespace threshsplit
