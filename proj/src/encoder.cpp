#include "eclip/encoder.hpp"

#include <atomic>
#include <mutex>

namespace eclip {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ParameterError("unknown activation '" + name + "' (expected relu or tanh)");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

void EncoderSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ParameterError("encoder: dimensions must be >= 1");
  if (tokens < 1 || input_dim % tokens != 0) {
    throw ParameterError("encoder: input_dim " + std::to_string(input_dim) +
                         " is not divisible into " + std::to_string(tokens) + " tokens");
  }
  for (auto h : hidden_dims)
    if (h < 1) throw ParameterError("encoder: hidden dims must be >= 1");
}

namespace {

std::string hidden_name(std::size_t layer, const char* what) {
  return "hidden" + std::to_string(layer) + "." + what;
}

// Accounting shared by all tapes in the process.
struct Ledger {
  std::mutex mu;
  ActivationStats stats;

  void add(std::size_t matrices, std::size_t elements) {
    std::lock_guard lock(mu);
    stats.live_matrices += matrices;
    stats.live_elements += elements;
    stats.peak_matrices = std::max(stats.peak_matrices, stats.live_matrices);
    stats.peak_elements = std::max(stats.peak_elements, stats.live_elements);
  }
  void remove(std::size_t matrices, std::size_t elements) {
    std::lock_guard lock(mu);
    stats.live_matrices -= matrices;
    stats.live_elements -= elements;
  }
};

Ledger& ledger() {
  static Ledger l;
  return l;
}

void apply_activation(Mat& m, Activation a) {
  if (a == Activation::relu) {
    m = m.cwiseMax(0.0);
  } else {
    m = m.array().tanh().matrix();
  }
}

// Multiplies `grad` by the activation derivative, expressed through the
// activation output.
void apply_activation_derivative(Mat& grad, const Mat& out, Activation a) {
  if (a == Activation::relu) {
    grad = (out.array() > 0.0).select(grad, 0.0);
  } else {
    grad.array() *= 1.0 - out.array().square();
  }
}

void add_bias(Mat& m, const Mat& bias) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) += bias.row(0);
}

Mat as_tokens(const Mat& batch, const EncoderSpec& spec) {
  // Row-major N×(T·w) and (N·T)×w share a memory layout.
  Mat tokens(batch.rows() * spec.tokens, spec.token_width());
  std::copy(batch.data(), batch.data() + batch.size(), tokens.data());
  return tokens;
}

Mat pool_tokens(const Mat& h, Eigen::Index samples, Eigen::Index tokens) {
  if (tokens == 1) return h;
  Mat pooled(samples, h.cols());
  for (Eigen::Index n = 0; n < samples; ++n) {
    Mat steps = h.middleRows(n * tokens, tokens);
    pooled.row(n) = pool_mean(steps);
  }
  return pooled;
}

}  // namespace

ParamSet init_encoder(const EncoderSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  ParamSet params;
  std::normal_distribution<Real> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Mat w(rows, cols);
    const Real scale = 1.0 / std::sqrt(static_cast<Real>(rows));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * normal(rng);
    return w;
  };
  Eigen::Index width = spec.token_width();
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    params.add(hidden_name(l, "weight"), gaussian(width, spec.hidden_dims[l]));
    params.add(hidden_name(l, "bias"), Mat::Zero(1, spec.hidden_dims[l]), false);
    width = spec.hidden_dims[l];
  }
  params.add("proj.weight", gaussian(width, spec.output_dim));
  params.add("proj.bias", Mat::Zero(1, spec.output_dim), false);
  return params;
}

void check_encoder_params(const ParamSet& params, const EncoderSpec& spec) {
  spec.validate();
  auto expect = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const auto& t = params.at(name);
    if (t.value.rows() != rows || t.value.cols() != cols) {
      throw DimensionError("encoder tensor " + name + " is " +
                           shape_string(t.value.rows(), t.value.cols()) + ", expected " +
                           shape_string(rows, cols));
    }
  };
  Eigen::Index width = spec.token_width();
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    expect(hidden_name(l, "weight"), width, spec.hidden_dims[l]);
    expect(hidden_name(l, "bias"), 1, spec.hidden_dims[l]);
    width = spec.hidden_dims[l];
  }
  expect("proj.weight", width, spec.output_dim);
  expect("proj.bias", 1, spec.output_dim);
  if (params.size() != 2 * spec.hidden_dims.size() + 2) {
    throw DimensionError("encoder: unexpected tensor count " + std::to_string(params.size()));
  }
}

ActivationStats activation_stats() {
  std::lock_guard lock(ledger().mu);
  return ledger().stats;
}

void reset_activation_peaks() {
  std::lock_guard lock(ledger().mu);
  auto& s = ledger().stats;
  s.peak_matrices = s.live_matrices;
  s.peak_elements = s.live_elements;
}

ActivationTape::ActivationTape(ActivationTape&& other) noexcept
    : batch_rows_(other.batch_rows_),
      layers_(std::move(other.layers_)),
      pooled_(std::move(other.pooled_)),
      embeddings_(std::move(other.embeddings_)),
      norms_(std::move(other.norms_)) {
  other.layers_.clear();
  other.pooled_.resize(0, 0);
  other.embeddings_.resize(0, 0);
  other.norms_.resize(0);
  other.batch_rows_ = 0;
}

ActivationTape& ActivationTape::operator=(ActivationTape&& other) noexcept {
  if (this != &other) {
    clear();
    batch_rows_ = other.batch_rows_;
    layers_ = std::move(other.layers_);
    pooled_ = std::move(other.pooled_);
    embeddings_ = std::move(other.embeddings_);
    norms_ = std::move(other.norms_);
    other.layers_.clear();
    other.pooled_.resize(0, 0);
    other.embeddings_.resize(0, 0);
    other.norms_.resize(0);
    other.batch_rows_ = 0;
  }
  return *this;
}

ActivationTape::~ActivationTape() { clear(); }

std::size_t ActivationTape::element_count() const {
  std::size_t n = static_cast<std::size_t>(pooled_.size() + embeddings_.size() + norms_.size());
  for (const auto& m : layers_) n += static_cast<std::size_t>(m.size());
  return n;
}

void ActivationTape::clear() {
  const std::size_t matrices = layers_.size() + (pooled_.size() > 0) + (embeddings_.size() > 0) +
                               (norms_.size() > 0);
  if (matrices > 0) ledger().remove(matrices, element_count());
  layers_.clear();
  pooled_.resize(0, 0);
  embeddings_.resize(0, 0);
  norms_.resize(0);
  batch_rows_ = 0;
}

void ActivationTape::retain(Mat& slot, Mat value) {
  ledger().add(1, static_cast<std::size_t>(value.size()));
  slot = std::move(value);
}

Mat encode(const ParamSet& params, const EncoderSpec& spec, const Mat& batch,
           ActivationTape* tape) {
  check_encoder_params(params, spec);
  if (batch.cols() != spec.input_dim) {
    throw DimensionError("encode: batch has " + std::to_string(batch.cols()) +
                         " columns, encoder expects " + std::to_string(spec.input_dim));
  }
  if (!batch.allFinite()) throw NumericError("encode: non-finite input");
  const Eigen::Index n = batch.rows();
  if (tape) {
    tape->clear();
    tape->batch_rows_ = n;
  }

  Mat h = as_tokens(batch, spec);
  if (tape) {
    tape->layers_.emplace_back();
    tape->retain(tape->layers_.back(), h);
  }
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    Mat a = matmul(h, params.at(hidden_name(l, "weight")).value);
    add_bias(a, params.at(hidden_name(l, "bias")).value);
    apply_activation(a, spec.activation);
    h = std::move(a);
    if (tape) {
      tape->layers_.emplace_back();
      tape->retain(tape->layers_.back(), h);
    }
  }
  Mat pooled = pool_tokens(h, n, spec.tokens);
  Mat z = matmul(pooled, params.at("proj.weight").value);
  add_bias(z, params.at("proj.bias").value);
  Vec norms;
  Mat e = l2_normalize_rows(z, &norms);
  if (tape) {
    tape->retain(tape->pooled_, std::move(pooled));
    tape->retain(tape->embeddings_, e);
    ledger().add(1, static_cast<std::size_t>(norms.size()));
    tape->norms_ = std::move(norms);
  }
  return e;
}

Mat encode_backward(ParamSet& params, const EncoderSpec& spec, const ActivationTape& tape,
                    const Mat& d_embeddings) {
  if (tape.empty()) throw ParameterError("encode_backward: empty activation tape");
  if (d_embeddings.rows() != tape.embeddings_.rows() ||
      d_embeddings.cols() != tape.embeddings_.cols()) {
    throw DimensionError("encode_backward: gradient is " +
                         shape_string(d_embeddings.rows(), d_embeddings.cols()) +
                         ", embeddings are " +
                         shape_string(tape.embeddings_.rows(), tape.embeddings_.cols()));
  }
  const Eigen::Index n = tape.batch_rows_;
  const Mat dz = l2_normalize_rows_backward(tape.embeddings_, tape.norms_, d_embeddings);

  auto& proj_w = params.at("proj.weight");
  auto& proj_b = params.at("proj.bias");
  proj_w.grad += matmul_tn(tape.pooled_, dz);
  proj_b.grad += column_sums(dz);
  const Mat d_pooled = matmul_nt(dz, proj_w.value);

  Mat dh(n * spec.tokens, d_pooled.cols());
  const Real inv_t = 1.0 / static_cast<Real>(spec.tokens);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index t = 0; t < spec.tokens; ++t) dh.row(s * spec.tokens + t) = d_pooled.row(s) * inv_t;

  for (std::size_t l = spec.hidden_dims.size(); l-- > 0;) {
    const Mat& out = tape.layers_[l + 1];
    const Mat& in = tape.layers_[l];
    apply_activation_derivative(dh, out, spec.activation);
    auto& w = params.at(hidden_name(l, "weight"));
    auto& b = params.at(hidden_name(l, "bias"));
    w.grad += matmul_tn(in, dh);
    b.grad += column_sums(dh);
    dh = matmul_nt(dh, w.value);
  }
  // Back to N×(T·w).
  Mat d_batch(n, spec.input_dim);
  std::copy(dh.data(), dh.data() + dh.size(), d_batch.data());
  return d_batch;
}

}  // namespace eclip
