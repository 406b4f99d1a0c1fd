#include "threshsplit/kernels.hpp"

#include <cmath>

#include "threshsplit/errors.hpp"

namespace threshsplit {

namespace {
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvTwoSqrtPi = 0.28209479177387814347;  // 1/(2*sqrt(pi))
}  // namespace

double eval_kernel(const KernelSpec& spec, double v) {
    switch (spec.family) {
        case KernelFamily::gaussian:
            return kInvSqrt2Pi * std::exp(-0.5 * v * v);
        case KernelFamily::uniform:
            return std::abs(v) <= 0.5 ? 1.0 : 0.0;
        case KernelFamily::epanechnikov:
            return std::abs(v) <= 1.0 ? 0.75 * (1.0 - v * v) : 0.0;
    }
    return 0.0;
}

double kappa2(const KernelSpec& spec) {
    switch (spec.family) {
        case KernelFamily::gaussian:
            return kInvTwoSqrtPi;
        case KernelFamily::uniform:
            return 1.0;
        case KernelFamily::epanechnikov:
            return 0.6;
    }
    return kInvTwoSqrtPi;
}

double product_kernel(const KernelSpec& spec, double u, double v) {
    return eval_kernel(spec, u) * eval_kernel(spec, v);
}

KernelFamily parse_kernel_family(const std::string& name) {
    if (name == "gaussian") return KernelFamily::gaussian;
    if (name == "uniform") return KernelFamily::uniform;
    if (name == "epanechnikov") return KernelFamily::epanechnikov;
    throw SchemaError("unknown kernel family: " + name);
}

std::string kernel_family_name(KernelFamily family) {
    switch (family) {
        case KernelFamily::gaussian:
            return "gaussian";
        case KernelFamily::uniform:
            return "uniform";
        case KernelFamily::epanechnikov:
            return "epanechnikov";
    }
    return "gaussian";
}

}  // namespace threshsplit
