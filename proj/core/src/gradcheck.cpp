#include "racam/gradcheck.hpp"

#include <stdexcept>

namespace racam {

Tensor finite_diff_gradient(const std::function<float(const Tensor&)>& f, const Tensor& x, float h) {
    if (!(h > 0.0f)) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
    Tensor g(x.shape());
    Tensor probe = x;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const float orig = probe[i];
        probe[i] = orig + h;
        const double fp = double(f(probe));
        probe[i] = orig - h;
        const double fm = double(f(probe));
        probe[i] = orig;
        g[i] = float((fp - fm) / (2.0 * double(h)));
    }
    return g;
}

}  // namespace racam
