#pragma once

// Small dual-tower encoders: per-token MLP, mean pooling over tokens, a
// linear projection into the shared embedding space and row-wise L2
// normalization. Forward and backward passes are written out by hand.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "eclip/tensor.hpp"

namespace eclip {

/// Columnwise mean of a T×d block of step representations.
template <typename Scalar>
RowVector<Scalar> pool_mean(const Matrix<Scalar>& token_reprs) {
  if (token_reprs.rows() == 0) throw DegenerateError("pool_mean: empty sequence");
  return column_sums(token_reprs) / static_cast<Scalar>(token_reprs.rows());
}

template <typename Scalar>
inline constexpr Scalar kMinNorm = Scalar(1e-12);

template <typename Derived>
auto l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar norm = v.norm();
  if (!(norm > kMinNorm<Scalar>)) throw DegenerateError("l2_normalize: near-zero norm");
  return (v / norm).eval();
}

/// Normalizes every row; `norms` receives the pre-normalization row norms.
template <typename Scalar>
Matrix<Scalar> l2_normalize_rows(const Matrix<Scalar>& m, Vector<Scalar>* norms = nullptr) {
  Matrix<Scalar> out(m.rows(), m.cols());
  if (norms) norms->resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Scalar n = m.row(i).norm();
    if (!(n > kMinNorm<Scalar>)) {
      throw DegenerateError("l2_normalize_rows: near-zero norm in row " + std::to_string(i));
    }
    out.row(i) = m.row(i) / n;
    if (norms) (*norms)(i) = n;
  }
  return out;
}

/// Pulls ∂L/∂e back through e = z/‖z‖: ∂L/∂z = (g − e⟨e,g⟩)/‖z‖ per row.
template <typename Scalar>
Matrix<Scalar> l2_normalize_rows_backward(const Matrix<Scalar>& normalized,
                                          const Vector<Scalar>& norms,
                                          const Matrix<Scalar>& d_normalized) {
  Matrix<Scalar> dz(normalized.rows(), normalized.cols());
  for (Eigen::Index i = 0; i < normalized.rows(); ++i) {
    const Scalar proj = normalized.row(i).dot(d_normalized.row(i));
    dz.row(i) = (d_normalized.row(i) - proj * normalized.row(i)) / norms(i);
  }
  return dz;
}

enum class Activation { relu, tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct EncoderSpec {
  Eigen::Index input_dim = 0;  // full row width, tokens × token width
  std::vector<Eigen::Index> hidden_dims;
  Eigen::Index output_dim = 0;
  Activation activation = Activation::tanh;
  // Row is split into `tokens` equal steps that share the hidden layers and
  // are mean-pooled before projection. 1 means plain vector input.
  Eigen::Index tokens = 1;

  Eigen::Index token_width() const { return input_dim / tokens; }
  void validate() const;
  bool operator==(const EncoderSpec&) const = default;
};

/// Initializes weights N(0, 1/fan_in) and zero biases. Tensor names are
/// hidden<i>.weight, hidden<i>.bias, proj.weight, proj.bias.
ParamSet init_encoder(const EncoderSpec& spec, std::mt19937_64& rng);

/// Checks tensor names and shapes against `spec`.
void check_encoder_params(const ParamSet& params, const EncoderSpec& spec);

/// Live bookkeeping of activation matrices held by tapes.
struct ActivationStats {
  std::size_t live_matrices = 0;
  std::size_t live_elements = 0;
  std::size_t peak_matrices = 0;
  std::size_t peak_elements = 0;
};

ActivationStats activation_stats();
// Sets peaks to the current live values.
void reset_activation_peaks();

class ActivationTape;

/// Forward pass producing unit-norm rows. With a tape, every intermediate
/// needed by encode_backward is retained; without one, nothing outlives the
/// layer that produced it.
Mat encode(const ParamSet& params, const EncoderSpec& spec, const Mat& batch,
           ActivationTape* tape = nullptr);

/// Accumulates ∂L/∂params into `params` gradients given ∂L/∂embeddings and
/// returns ∂L/∂batch.
Mat encode_backward(ParamSet& params, const EncoderSpec& spec, const ActivationTape& tape,
                    const Mat& d_embeddings);

/// Intermediate values retained by a forward pass for its backward pass.
class ActivationTape {
 public:
  ActivationTape() = default;
  ActivationTape(const ActivationTape&) = delete;
  ActivationTape& operator=(const ActivationTape&) = delete;
  ActivationTape(ActivationTape&& other) noexcept;
  ActivationTape& operator=(ActivationTape&& other) noexcept;
  ~ActivationTape();

  void clear();
  bool empty() const { return layers_.empty(); }
  Eigen::Index batch_rows() const { return batch_rows_; }

 private:
  friend Mat encode(const ParamSet&, const EncoderSpec&, const Mat&, ActivationTape*);
  friend Mat encode_backward(ParamSet&, const EncoderSpec&, const ActivationTape&, const Mat&);

  void retain(Mat& slot, Mat value);
  std::size_t element_count() const;

  Eigen::Index batch_rows_ = 0;
  std::vector<Mat> layers_;  // [0] = input tokens, [l+1] = hidden layer l output
  Mat pooled_;
  Mat embeddings_;
  Vec norms_;
};

}  // namespace eclip
