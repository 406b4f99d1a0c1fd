#pragma once

#include <limits>
#include <string>

namespace threshsplit {

enum class KernelFamily { gaussian, uniform, epanechnikov };

// Second-order symmetric kernels used throughout. The uniform kernel is
// normalized to height 1 on [-1/2, 1/2] so that both its integral and its
// squared integral equal 1; critical values scale with kappa2 accordingly.
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;

    // Half-width of the support; infinity for the gaussian.
    double support_radius() const {
        switch (family) {
            case KernelFamily::gaussian:
                return std::numeric_limits<double>::infinity();
            case KernelFamily::uniform:
                return 0.5;
            case KernelFamily::epanechnikov:
                return 1.0;
        }
        return std::numeric_limits<double>::infinity();
    }
};

double eval_kernel(const KernelSpec& spec, double v);

// kappa2 = integral of K(v)^2, closed form per family.
double kappa2(const KernelSpec& spec);

// Separable bivariate kernel K(u) * K(v).
double product_kernel(const KernelSpec& spec, double u, double v);

KernelFamily parse_kernel_family(const std::string& name);
std::string kernel_family_name(KernelFamily family);

}  // namespace threshsplit
