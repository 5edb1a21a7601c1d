#pragma once

#include "ipro/tape.hpp"

#include <functional>

namespace ipro {

/// Builds a scalar root from a probe leaf on the given tape.
using GraphBuilder = std::function<Var(Tape&, Var)>;

/// Central-difference validation of the reverse-mode gradient at `point`.
/// Returns the max over coordinates of
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double finite_diff_check(const GraphBuilder& f, const Tensor& point, double h);

}  // namespace ipro
