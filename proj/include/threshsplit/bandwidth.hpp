#pragma once

#include <cstddef>
#include <vector>

#include "threshsplit/dataset.hpp"
#include "threshsplit/kernels.hpp"
#include "threshsplit/local_threshold.hpp"

namespace threshsplit {

struct CVResult {
    std::vector<double> c_grid;
    std::vector<double> criterion;  // +inf marks an infeasible c
    double c_star = 0.0;
    double b_n_star = 0.0;
};

// Sum of squared leave-one-out prediction errors over observations with s in
// the window, under b_n = c * n^(-1/2). Each held-out fit is an exact refit:
// threshold curve at the remaining observed s values, then the truncated
// two-step with this candidate's own pi_n, then gamma fitted directly at s_i.
// Held-out points whose refit fails fall back to the kernel-weighted local
// mean of y as the predictor.
double loo_cv_criterion(const Dataset& data, const EvalWindow& window, double c,
                        const KernelSpec& kernel, const TrimSpec& trim = TrimSpec{},
                        std::size_t n_threads = 0);

std::vector<double> default_c_grid(double lo = 0.25, double hi = 8.0,
                                   std::size_t count = 16);

CVResult select_bandwidth(const Dataset& data, const EvalWindow& window,
                          const std::vector<double>& c_grid, const KernelSpec& kernel,
                          const TrimSpec& trim = TrimSpec{}, std::size_t n_threads = 0);

}  // namespace threshsplit
