#include "icf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace icf::ad {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

double grad_check(const ScalarFunction& f, const Tensor& point, double epsilon, std::span<const std::size_t> coords) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");

    Tensor analytic;
    {
        Tape tape;
        Var x = tape.leaf(point);
        tape.backward(f(tape, x));
        analytic = tape.grad(x);
    }

    auto evaluate = [&](const Tensor& at) {
        Tape tape;
        return f(tape, tape.leaf(at)).value().item();
    };

    std::vector<std::size_t> all;
    if (coords.empty()) {
        all.resize(point.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        coords = all;
    }

    double worst = 0.0;
    Tensor probe = point;
    for (std::size_t i : coords) {
        const double x0 = point[i];
        probe[i] = x0 + epsilon;
        const double plus = evaluate(probe);
        probe[i] = x0 - epsilon;
        const double minus = evaluate(probe);
        probe[i] = x0;
        const double numeric = (plus - minus) / (2.0 * epsilon);
        worst = std::max(worst, relative_error(analytic[i], numeric));
    }
    return worst;
}

}  // namespace icf::ad
