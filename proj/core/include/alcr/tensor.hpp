#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace alcr::autodiff {

/// Dense row-major array of 64-bit reals. Rank 0 (scalar), 1 and 2 cover
/// everything the model needs; no general broadcasting.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  int rows() const;
  int cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(int r, int c);
  double at(int r, int c) const;

  double scalar_value() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool rg) {
    requires_grad_ = rg;
    return *this;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  /// Throws if any value is non-finite. `what` names the producing op.
  void check_finite(const char* what) const;

  double l2_norm_squared() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Eigen-backed kernels. out must be preallocated to the result shape.
// accumulate=true adds into out instead of overwriting.
void matmul_into(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b,
                 bool accumulate, Tensor& out);

/// Mapping from parameter name to gradient tensor; absent names mean zero.
struct Gradients {
  std::map<std::string, Tensor> by_name;

  bool contains(const std::string& name) const { return by_name.count(name) > 0; }
  Tensor& operator[](const std::string& name) { return by_name[name]; }
  double global_l2_norm() const;
};

/// Ordered collection of named parameters; order is the checkpoint order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::int64_t total_elements() const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> values_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace alcr::autodiff
