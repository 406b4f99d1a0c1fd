#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "threshsplit/dataset.hpp"
#include "threshsplit/kernels.hpp"
#include "threshsplit/local_threshold.hpp"

namespace threshsplit {

// Polar view of a centered observation. The splitting covariate s is the
// horizontal axis and the threshold variable q the vertical axis.
struct PolarObservation {
    double l = 0.0;      // radius
    double a_deg = 0.0;  // angle in [0, 360)
    double q = 0.0;
    double s = 0.0;
};

PolarObservation polar_transform(double q, double s);

// Counterclockwise rotation by a_deg degrees of the (q,s) frame.
struct RotatedPoint {
    double q = 0.0;
    double s = 0.0;
};

RotatedPoint rotate(double q, double s, double a_deg);

struct ContourEstimate {
    std::vector<double> angles_deg;        // equally spaced on [0, 360)
    std::vector<double> radius_hat;        // NaN where the angle failed
    std::vector<std::string> messages;     // empty where ok
    double inner_mean = 0.0;               // mean fitted level inside the boundary
    double outer_mean = 0.0;               // mean fitted level outside
    double center_q = 0.0;                 // echoed center used by the caller
    double center_s = 0.0;
    std::size_t n_failed = 0;

    // Boundary point in the centered frame for the angle at index k.
    RotatedPoint boundary_point(std::size_t k) const;
};

// Shoelace area of the boundary polyline over the successful angles.
double contour_area(const ContourEstimate& contour);

// Estimates a star-shaped boundary around the origin of an already centered
// dataset. For each rotation angle the data are rotated, restricted to the
// upper half plane q(a) >= 0, and a pointwise threshold in q(a) is fitted at
// s(a) = 0; the fitted threshold is the boundary radius at that angle.
ContourEstimate estimate_contour(const Dataset& centered, std::size_t angles, double b_n,
                                 const KernelSpec& kernel, const TrimSpec& trim = TrimSpec{},
                                 std::size_t n_threads = 0);

}  // namespace threshsplit
