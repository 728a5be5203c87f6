#include "vat/gradcheck.hpp"

#include <cmath>

namespace vat {

double grad_check(const ScalarGraphBuilder& build, const Tensor& x, double eps) {
    Tensor analytic;
    {
        Tape tape;
        NodeId leaf = tape.constant(x);
        NodeId root = build(tape, leaf);
        if (!tape.value(root).is_scalar()) {
            throw ContractError("grad_check: builder must produce a scalar, got " +
                                tape.value(root).shape_str());
        }
        tape.backward(root);
        analytic = tape.grad(leaf);
    }
    auto eval = [&](const Tensor& probe) {
        Tape tape;
        NodeId leaf = tape.constant(probe);
        return tape.value(build(tape, leaf))[0];
    };
    double worst = 0.0;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        probe[i] = x[i] + eps;
        const double up = eval(probe);
        probe[i] = x[i] - eps;
        const double down = eval(probe);
        probe[i] = x[i];
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace vat
