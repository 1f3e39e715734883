#pragma once

// Dense real matrices, the parameter/gradient registry and the
// finite-difference gradient checker everything else is tested against.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eclip/errors.hpp"

namespace eclip {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Real = double;
using Mat = Matrix<Real>;
using Vec = Vector<Real>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Matrix product with a fixed reduction order: every output entry is
/// accumulated over k from left to right, independent of blocking or
/// vectorization width. Results are bit-reproducible for a given build.
template <typename Scalar>
Matrix<Scalar> matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a.rows(), a.cols()) + " * " +
                         shape_string(b.rows(), b.cols()));
  }
  const Eigen::Index n = a.rows(), inner = a.cols(), m = b.cols();
  Matrix<Scalar> c = Matrix<Scalar>::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar* out = c.data() + i * m;
    for (Eigen::Index k = 0; k < inner; ++k) {
      const Scalar aik = a(i, k);
      const Scalar* brow = b.data() + k * m;
      for (Eigen::Index j = 0; j < m; ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

/// aᵀ·b with the same left-to-right reduction over the shared row index.
template <typename Scalar>
Matrix<Scalar> matmul_tn(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: (" + shape_string(a.rows(), a.cols()) + ")^T * " +
                         shape_string(b.rows(), b.cols()));
  }
  const Eigen::Index n = a.cols(), inner = a.rows(), m = b.cols();
  Matrix<Scalar> c = Matrix<Scalar>::Zero(n, m);
  for (Eigen::Index k = 0; k < inner; ++k) {
    const Scalar* arow = a.data() + k * n;
    const Scalar* brow = b.data() + k * m;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar aki = arow[i];
      Scalar* out = c.data() + i * m;
      for (Eigen::Index j = 0; j < m; ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

/// a·bᵀ, each entry a left-to-right dot product of two rows.
template <typename Scalar>
Matrix<Scalar> matmul_nt(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + shape_string(a.rows(), a.cols()) + " * (" +
                         shape_string(b.rows(), b.cols()) + ")^T");
  }
  const Eigen::Index n = a.rows(), inner = a.cols(), m = b.rows();
  Matrix<Scalar> c(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar* arow = a.data() + i * inner;
    for (Eigen::Index j = 0; j < m; ++j) {
      const Scalar* brow = b.data() + j * inner;
      Scalar acc = 0;
      for (Eigen::Index k = 0; k < inner; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

/// Column sums accumulated top to bottom.
template <typename Scalar>
RowVector<Scalar> column_sums(const Matrix<Scalar>& a) {
  RowVector<Scalar> s = RowVector<Scalar>::Zero(a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += a.row(i);
  return s;
}

template <typename Scalar>
struct Tensor {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  // Subject to decoupled weight decay (weights yes, biases/temperature no).
  bool decay = true;
};

/// Named, ordered collection of parameter tensors with gradient accumulators.
template <typename Scalar>
class BasicParamSet {
 public:
  using TensorType = Tensor<Scalar>;

  TensorType& add(std::string name, Matrix<Scalar> value, bool decay = true) {
    if (find(name) != nullptr) throw ParameterError("duplicate tensor name: " + name);
    Matrix<Scalar> grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
    tensors_.push_back({std::move(name), std::move(value), std::move(grad), decay});
    return tensors_.back();
  }

  TensorType* find(std::string_view name) {
    for (auto& t : tensors_)
      if (t.name == name) return &t;
    return nullptr;
  }
  const TensorType* find(std::string_view name) const {
    for (const auto& t : tensors_)
      if (t.name == name) return &t;
    return nullptr;
  }
  TensorType& at(std::string_view name) {
    if (auto* t = find(name)) return *t;
    throw ParameterError("no tensor named " + std::string(name));
  }
  const TensorType& at(std::string_view name) const {
    if (const auto* t = find(name)) return *t;
    throw ParameterError("no tensor named " + std::string(name));
  }

  TensorType& operator[](std::size_t i) { return tensors_[i]; }
  const TensorType& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  void zero_grad() {
    for (auto& t : tensors_) t.grad.setZero();
  }

  void accumulate(std::size_t i, const Matrix<Scalar>& g) {
    auto& t = tensors_.at(i);
    if (g.rows() != t.value.rows() || g.cols() != t.value.cols()) {
      throw DimensionError("gradient for " + t.name + " is " + shape_string(g.rows(), g.cols()) +
                           ", tensor is " + shape_string(t.value.rows(), t.value.cols()));
    }
    t.grad += g;
  }

  std::size_t coefficient_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }

  std::vector<Matrix<Scalar>> gradients() const {
    std::vector<Matrix<Scalar>> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back(t.grad);
    return out;
  }

 private:
  std::vector<TensorType> tensors_;
};

using ParamSet = BasicParamSet<Real>;

/// Central-difference gradient audit. Perturbs every coordinate of every
/// tensor by ±eps and returns
///   max |g_fd - g_an| / max(1e-8, |g_fd| + |g_an|).
/// `f` takes a const ParamSet& and returns the scalar objective.
template <typename Scalar, typename Objective>
Scalar finite_diff_check(Objective&& f, BasicParamSet<Scalar> params,
                         std::span<const Matrix<Scalar>> analytic, Scalar eps = Scalar(1e-5)) {
  if (analytic.size() != params.size()) {
    throw DimensionError("finite_diff_check: " + std::to_string(analytic.size()) +
                         " gradients for " + std::to_string(params.size()) + " tensors");
  }
  if (!(eps > 0)) throw ParameterError("finite_diff_check: eps must be positive");
  auto eval = [&](const BasicParamSet<Scalar>& p) {
    const Scalar v = f(p);
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: objective is not finite");
    return v;
  };
  eval(params);

  Scalar worst = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& value = params[t].value;
    const auto& g = analytic[t];
    if (g.rows() != value.rows() || g.cols() != value.cols()) {
      throw DimensionError("finite_diff_check: gradient shape mismatch for " + params[t].name);
    }
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      Scalar& x = value.data()[i];
      const Scalar saved = x;
      x = saved + eps;
      const Scalar up = eval(params);
      x = saved - eps;
      const Scalar down = eval(params);
      x = saved;
      const Scalar fd = (up - down) / (2 * eps);
      const Scalar an = g.data()[i];
      const Scalar err =
          std::abs(fd - an) / std::max(Scalar(1e-8), std::abs(fd) + std::abs(an));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace eclip
