#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace afford {

/// Dense row-major tensor of 64-bit floats. Shapes are small (rank <= 4 in
/// practice); data lives in one contiguous buffer so kernels can hand slices
/// straight to BLAS.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Rank-3 [C,H,W] accessors, the common case for feature maps.
  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(double v);
  bool all_finite() const;

  static std::int64_t numel(const std::vector<int>& shape);
  static std::string shape_string(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

/// Trainable tensor: value plus persistent gradient accumulator of the same
/// shape. Gradients are accumulated by Graph::backward and consumed by Adam.
struct Parameter {
  Tensor value;
  Tensor grad;
  int id = -1;
  std::string name;

  Parameter() = default;
  Parameter(Tensor v, int id_, std::string name_);

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace afford
