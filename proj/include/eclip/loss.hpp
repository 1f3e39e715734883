#pragma once

// Symmetric contrastive objective with catalog-aware soft targets.
//
// For a batch of N paired (image, text) embeddings with unit rows, the
// similarity matrix sim = x·yᵀ is scaled by 1/τ and scored with row
// (image→text) and column (text→image) softmax cross-entropy against a
// soft target matrix z̃ that spreads mass uniformly over all batch members
// sharing the anchor's catalog id.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <unordered_map>

#include "eclip/tensor.hpp"

namespace eclip {

/// z̃_ij = 1/|{k : id_k = id_i}| when id_i = id_j, else 0.
template <typename Id, typename Scalar = Real>
Matrix<Scalar> soft_label_matrix(std::span<const Id> catalog_ids) {
  const auto n = static_cast<Eigen::Index>(catalog_ids.size());
  std::unordered_map<Id, Eigen::Index> counts;
  for (const auto& id : catalog_ids) ++counts[id];
  Matrix<Scalar> z = Matrix<Scalar>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar w = Scalar(1) / static_cast<Scalar>(counts[catalog_ids[i]]);
    for (Eigen::Index j = 0; j < n; ++j)
      if (catalog_ids[j] == catalog_ids[i]) z(i, j) = w;
  }
  return z;
}

/// Classic one-positive-per-row targets.
template <typename Scalar = Real>
Matrix<Scalar> hard_label_matrix(Eigen::Index n) {
  return Matrix<Scalar>::Identity(n, n);
}

template <typename Scalar>
Matrix<Scalar> similarity_matrix(const Matrix<Scalar>& x, const Matrix<Scalar>& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw DimensionError("similarity_matrix: " + shape_string(x.rows(), x.cols()) + " vs " +
                         shape_string(y.rows(), y.cols()));
  }
  return matmul_nt(x, y);
}

/// Same result as similarity_matrix, assembled from row blocks of
/// `shard_rows` image embeddings at a time (one block per accelerator in a
/// multi-device run).
template <typename Scalar>
Matrix<Scalar> similarity_matrix_sharded(const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                                         Eigen::Index shard_rows) {
  if (shard_rows < 1) throw ParameterError("similarity_matrix_sharded: shard_rows < 1");
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw DimensionError("similarity_matrix_sharded: shape mismatch");
  }
  Matrix<Scalar> sim(x.rows(), y.rows());
  for (Eigen::Index start = 0; start < x.rows(); start += shard_rows) {
    const Eigen::Index len = std::min(shard_rows, x.rows() - start);
    Matrix<Scalar> block = x.middleRows(start, len);
    sim.middleRows(start, len) = matmul_nt(block, y);
  }
  return sim;
}

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Scalar image_to_text = 0;
  Scalar text_to_image = 0;
  Matrix<Scalar> d_sim;  // ∂loss/∂sim
};

/// Soft-label symmetric InfoNCE. logits = sim/τ; log-sum-exp uses
/// max-subtraction. The gradient uses the label column sums, which equal one
/// for the (symmetric) catalog soft labels.
template <typename Scalar>
LossResult<Scalar> eclip_loss(const Matrix<Scalar>& sim, const Matrix<Scalar>& labels, Scalar tau) {
  if (!(tau > 0) || !std::isfinite(tau)) throw ParameterError("eclip_loss: tau must be positive");
  const Eigen::Index n = sim.rows();
  if (sim.cols() != n || labels.rows() != n || labels.cols() != n || n == 0) {
    throw DimensionError("eclip_loss: sim " + shape_string(sim.rows(), sim.cols()) + ", labels " +
                         shape_string(labels.rows(), labels.cols()));
  }
  const Matrix<Scalar> logits = sim / tau;
  Matrix<Scalar> p_row(n, n), p_col(n, n);
  Vector<Scalar> lse_row(n), lse_col(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    Scalar s = 0;
    for (Eigen::Index j = 0; j < n; ++j) s += std::exp(logits(i, j) - mx);
    lse_row(i) = mx + std::log(s);
    for (Eigen::Index j = 0; j < n; ++j) p_row(i, j) = std::exp(logits(i, j) - lse_row(i));
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar mx = logits.col(j).maxCoeff();
    Scalar s = 0;
    for (Eigen::Index i = 0; i < n; ++i) s += std::exp(logits(i, j) - mx);
    lse_col(j) = mx + std::log(s);
    for (Eigen::Index i = 0; i < n; ++i) p_col(i, j) = std::exp(logits(i, j) - lse_col(j));
  }

  Scalar i2t = 0, t2i = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar z = labels(i, j);
      if (z == 0) continue;
      i2t -= z * (logits(i, j) - lse_row(i));
      t2i -= z * (logits(i, j) - lse_col(j));
    }
  }
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  i2t *= inv_n;
  t2i *= inv_n;

  const RowVector<Scalar> label_col_sums = column_sums(labels);
  Matrix<Scalar> d_sim(n, n);
  const Scalar scale = Scalar(0.5) * inv_n / tau;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar row_mass = labels.row(i).sum();
    for (Eigen::Index j = 0; j < n; ++j) {
      d_sim(i, j) = scale * ((p_row(i, j) * row_mass - labels(i, j)) +
                             (p_col(i, j) * label_col_sums(j) - labels(i, j)));
    }
  }

  LossResult<Scalar> r;
  r.image_to_text = i2t;
  r.text_to_image = t2i;
  r.loss = Scalar(0.5) * (i2t + t2i);
  r.d_sim = std::move(d_sim);
  if (!std::isfinite(r.loss)) throw NumericError("eclip_loss: non-finite loss");
  return r;
}

/// ∂loss/∂log τ given ∂loss/∂sim: logits = sim·e^{-log τ}, so the
/// derivative is -Σ_ij sim_ij · ∂loss/∂sim_ij.
template <typename Scalar>
Scalar log_tau_gradient(const Matrix<Scalar>& sim, const Matrix<Scalar>& d_sim) {
  Scalar acc = 0;
  for (Eigen::Index i = 0; i < sim.size(); ++i) acc -= sim.data()[i] * d_sim.data()[i];
  return acc;
}

}  // namespace eclip
