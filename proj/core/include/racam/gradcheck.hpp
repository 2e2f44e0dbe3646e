#pragma once

#include <functional>

#include "racam/tensor.hpp"

namespace racam {

/// Central finite differences: (f(x + h*e_i) - f(x - h*e_i)) / (2h) per
/// element. Independent of the reverse-mode path; used as its oracle.
Tensor finite_diff_gradient(const std::function<float(const Tensor&)>& f, const Tensor& x, float h);

}  // namespace racam
