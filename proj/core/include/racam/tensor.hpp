#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace racam {

/// Dense N-dimensional array of float32, row-major.
///
/// Activations, gradients, images and masks all travel through this one
/// type. Data length always equals the product of the shape.
class Tensor {
  public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<int> shape);

    static Tensor full(std::vector<int> shape, float value);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data);

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[std::size_t(i)]; }
    int ndim() const { return int(shape_.size()); }
    std::int64_t numel() const { return std::int64_t(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](std::int64_t i) { return data_[std::size_t(i)]; }
    float operator[](std::int64_t i) const { return data_[std::size_t(i)]; }

    // [C,H,W] indexing.
    float& at(int c, int i, int j) {
        return data_[std::size_t((std::int64_t(c) * shape_[1] + i) * shape_[2] + j)];
    }
    float at(int c, int i, int j) const {
        return data_[std::size_t((std::int64_t(c) * shape_[1] + i) * shape_[2] + j)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    float min() const;
    float max() const;
    /// Sum of all elements, accumulated in double in storage order.
    double sum() const;
    std::int64_t count_nonzero() const;
    bool all_finite() const;

    std::string shape_str() const;

  private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

std::int64_t shape_numel(const std::vector<int>& shape);

/// Throws std::invalid_argument describing both shapes.
[[noreturn]] void throw_shape_error(const std::string& op, const Tensor& a, const Tensor& b);

// Elementwise helpers. Shapes must match where two tensors are involved.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);

/// (x - min) / (max - min); a constant input maps to all zeros.
Tensor normalize_minmax(const Tensor& a);

}  // namespace racam
