#include "alcr/tensor.hpp"

#include <Eigen/Core>

#include <cmath>

namespace alcr::autodiff {

namespace {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;
}  // namespace

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)),
      data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
    throw std::invalid_argument("tensor shape/data mismatch: " + shape_str(shape_) +
                                " vs " + std::to_string(data_.size()) + " values");
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape_ = {};
  t.data_ = {v};
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) throw std::logic_error("rows() on non-matrix tensor");
  return shape_[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw std::logic_error("cols() on non-matrix tensor");
  return shape_[1];
}

double& Tensor::at(int r, int c) {
  return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

double Tensor::at(int r, int c) const {
  return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

double Tensor::scalar_value() const {
  if (size() != 1) throw std::logic_error("scalar_value() on tensor of size " +
                                          std::to_string(size()));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::check_finite(const char* what) const {
  if (!all_finite())
    throw std::runtime_error(std::string("non-finite value produced by ") + what);
}

double Tensor::l2_norm_squared() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

void matmul_into(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b,
                 bool accumulate, Tensor& out) {
  if (a.rank() != 2 || b.rank() != 2 || out.rank() != 2)
    throw std::invalid_argument("matmul requires rank-2 tensors");
  MapC ma(a.raw(), a.rows(), a.cols());
  MapC mb(b.raw(), b.rows(), b.cols());
  MapM mo(out.raw(), out.rows(), out.cols());
  if (!trans_a && !trans_b) {
    if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols())
      throw std::invalid_argument("matmul shape mismatch");
    if (accumulate)
      mo.noalias() += ma * mb;
    else
      mo.noalias() = ma * mb;
  } else if (trans_a && !trans_b) {
    if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
      throw std::invalid_argument("matmul shape mismatch");
    if (accumulate)
      mo.noalias() += ma.transpose() * mb;
    else
      mo.noalias() = ma.transpose() * mb;
  } else if (!trans_a && trans_b) {
    if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows())
      throw std::invalid_argument("matmul shape mismatch");
    if (accumulate)
      mo.noalias() += ma * mb.transpose();
    else
      mo.noalias() = ma * mb.transpose();
  } else {
    if (a.rows() != b.cols() || out.rows() != a.cols() || out.cols() != b.rows())
      throw std::invalid_argument("matmul shape mismatch");
    if (accumulate)
      mo.noalias() += ma.transpose() * mb.transpose();
    else
      mo.noalias() = ma.transpose() * mb.transpose();
  }
}

double Gradients::global_l2_norm() const {
  double s = 0.0;
  for (const auto& [name, g] : by_name) s += g.l2_norm_squared();
  return std::sqrt(s);
}

Tensor& ParameterStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
  index_[name] = order_.size();
  order_.push_back(name);
  auto [it, ok] = values_.emplace(name, std::move(value));
  it->second.set_requires_grad(true);
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::int64_t ParameterStore::total_elements() const {
  std::int64_t n = 0;
  for (const auto& name : order_) n += at(name).size();
  return n;
}

}  // namespace alcr::autodiff
