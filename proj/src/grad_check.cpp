#include "ipro/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipro {

namespace {

double eval_scalar(const GraphBuilder& f, const Tensor& point) {
    Tape tape;
    Var x = tape.leaf(point);
    Var root = f(tape, x);
    const Tensor& v = tape.value(root);
    if (!v.is_scalar()) throw std::invalid_argument("finite_diff_check: builder must produce a scalar");
    return v.item();
}

}  // namespace

double finite_diff_check(const GraphBuilder& f, const Tensor& point, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");

    Tape tape;
    Var x = tape.leaf(point);
    Var root = f(tape, x);
    if (!tape.value(root).is_scalar())
        throw std::invalid_argument("finite_diff_check: builder must produce a scalar");
    tape.backward(root);
    const Array analytic = tape.adjoint(x);

    double worst = 0.0;
    Tensor probe = point;
    for (std::int64_t i = 0; i < point.size(); ++i) {
        const double orig = probe.data(i);
        probe.data(i) = orig + h;
        const double fp = eval_scalar(f, probe);
        probe.data(i) = orig - h;
        const double fm = eval_scalar(f, probe);
        probe.data(i) = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
    }
    return worst;
}

}  // namespace ipro
