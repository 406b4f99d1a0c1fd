#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "threshsplit/errors.hpp"
#include "threshsplit/kernels.hpp"

using namespace threshsplit;

namespace {

// Composite Simpson quadrature, fine enough for 1e-9 accuracy on these
// smooth integrands.
double simpson(const std::function<double(double)>& f, double lo, double hi,
               std::size_t panels) {
    const double h = (hi - lo) / static_cast<double>(panels);
    double acc = f(lo) + f(hi);
    for (std::size_t k = 1; k < panels; ++k) {
        acc += f(lo + h * static_cast<double>(k)) * (k % 2 == 1 ? 4.0 : 2.0);
    }
    return acc * h / 3.0;
}

const std::vector<KernelFamily> kFamilies = {
    KernelFamily::gaussian, KernelFamily::uniform, KernelFamily::epanechnikov};

}  // namespace

// Integrate over the exact support when it is finite so that the panel
// boundaries line up with the jump of the uniform kernel.
static double quad_limit(const KernelSpec& spec) {
    const double r = spec.support_radius();
    return std::isfinite(r) ? r : 12.0;
}

TEST_CASE("kernels integrate to one") {
    for (auto family : kFamilies) {
        KernelSpec spec{family};
        const double lim = quad_limit(spec);
        const double mass = simpson([&](double v) { return eval_kernel(spec, v); },
                                    -lim, lim, 40000);
        CHECK(std::abs(mass - 1.0) < 1e-6);
    }
}

TEST_CASE("kappa2 matches the quadrature of K squared") {
    for (auto family : kFamilies) {
        KernelSpec spec{family};
        const double lim = quad_limit(spec);
        const double k2 = simpson(
            [&](double v) {
                const double k = eval_kernel(spec, v);
                return k * k;
            },
            -lim, lim, 40000);
        CHECK(std::abs(k2 - kappa2(spec)) < 1e-6);
    }
}

TEST_CASE("kappa2 closed forms") {
    CHECK(kappa2(KernelSpec{KernelFamily::gaussian}) ==
          doctest::Approx(0.28209479177387814).epsilon(1e-12));
    CHECK(kappa2(KernelSpec{KernelFamily::uniform}) == doctest::Approx(1.0));
    CHECK(kappa2(KernelSpec{KernelFamily::epanechnikov}) == doctest::Approx(0.6));
}

TEST_CASE("kernel values at zero") {
    CHECK(eval_kernel(KernelSpec{KernelFamily::gaussian}, 0.0) ==
          doctest::Approx(0.3989422804014327).epsilon(1e-12));
    CHECK(eval_kernel(KernelSpec{KernelFamily::uniform}, 0.0) == doctest::Approx(1.0));
    CHECK(eval_kernel(KernelSpec{KernelFamily::epanechnikov}, 0.0) ==
          doctest::Approx(0.75));
}

TEST_CASE("kernels are symmetric and nonincreasing in |v|") {
    for (auto family : kFamilies) {
        KernelSpec spec{family};
        double prev = eval_kernel(spec, 0.0);
        for (int k = 0; k <= 300; ++k) {
            const double v = 0.01 * k;
            const double kv = eval_kernel(spec, v);
            CHECK(kv == doctest::Approx(eval_kernel(spec, -v)).epsilon(1e-15));
            CHECK(kv <= prev + 1e-15);
            CHECK(kv >= 0.0);
            prev = kv;
        }
    }
}

TEST_CASE("compact kernels vanish outside their support") {
    KernelSpec uni{KernelFamily::uniform};
    KernelSpec epa{KernelFamily::epanechnikov};
    CHECK(eval_kernel(uni, 0.5001) == 0.0);
    CHECK(eval_kernel(uni, -0.5001) == 0.0);
    CHECK(eval_kernel(epa, 1.0001) == 0.0);
    CHECK(eval_kernel(epa, -1.0001) == 0.0);
    CHECK(uni.support_radius() == doctest::Approx(0.5));
    CHECK(epa.support_radius() == doctest::Approx(1.0));
    CHECK(std::isinf(KernelSpec{KernelFamily::gaussian}.support_radius()));
}

TEST_CASE("product kernel factorizes and is symmetric in its arguments") {
    for (auto family : kFamilies) {
        KernelSpec spec{family};
        for (double u : {-0.7, 0.0, 0.2, 0.45}) {
            for (double v : {-0.3, 0.1, 0.4}) {
                CHECK(product_kernel(spec, u, v) ==
                      doctest::Approx(eval_kernel(spec, u) * eval_kernel(spec, v))
                          .epsilon(1e-15));
                CHECK(product_kernel(spec, u, v) ==
                      doctest::Approx(product_kernel(spec, v, u)).epsilon(1e-15));
            }
        }
    }
}

TEST_CASE("kernel family names round trip and bad names throw") {
    for (auto family : kFamilies) {
        CHECK(parse_kernel_family(kernel_family_name(family)) == family);
    }
    CHECK_THROWS_AS(parse_kernel_family("triangular"), SchemaError);
}
