#include "racam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace racam {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument(fmt::format("non-positive dimension {} in shape", d));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(std::size_t(shape_numel(shape_)), 0.0f);
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data) {
    if (shape_numel(shape) != std::int64_t(data.size())) {
        throw std::invalid_argument(fmt::format("data length {} does not match shape product {}",
                                                data.size(), shape_numel(shape)));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

float Tensor::min() const {
    return *std::min_element(data_.begin(), data_.end());
}

float Tensor::max() const {
    return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const {
    double s = 0.0;
    for (float v : data_) s += double(v);
    return s;
}

std::int64_t Tensor::count_nonzero() const {
    std::int64_t n = 0;
    for (float v : data_) n += (v != 0.0f);
    return n;
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

void throw_shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(
        fmt::format("{}: shape mismatch {} vs {}", op, a.shape_str(), b.shape_str()));
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw_shape_error(op, a, b);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    Tensor out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Tensor out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    Tensor out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, float s) {
    Tensor out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0f ? out[i] : 0.0f;
    return out;
}

Tensor abs(const Tensor& a) {
    Tensor out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(out[i]);
    return out;
}

Tensor normalize_minmax(const Tensor& a) {
    if (a.empty()) return a;
    const float lo = a.min();
    const float hi = a.max();
    Tensor out = a;
    if (hi == lo) {
        std::fill(out.vec().begin(), out.vec().end(), 0.0f);
        return out;
    }
    const float range = hi - lo;
    // Division keeps the max at exactly 1.
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - lo) / range;
    return out;
}

}  // namespace racam
