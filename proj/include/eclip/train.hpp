#pragma once

// Contrastive training: full-batch reference step, the two-stream
// micro-batched step, AdamW and the training loop.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eclip/batch.hpp"
#include "eclip/loss.hpp"
#include "eclip/model.hpp"

namespace eclip {

using CatalogId = std::int64_t;

/// Paired features for one logical batch. Row i of `text` and `image`
/// describe the same product.
struct PairedBatch {
  Mat text;
  Mat image;
  std::vector<CatalogId> catalog;

  Eigen::Index size() const { return text.rows(); }
  void validate() const;
  PairedBatch rows(Eigen::Index start, Eigen::Index count) const;
};

enum class LabelMode { soft, hard };

Mat target_matrix(std::span<const CatalogId> catalog, LabelMode mode);

struct GradientSet {
  Real loss = 0;
  std::vector<Mat> text;   // aligned with ModelParams::text tensors
  std::vector<Mat> image;  // aligned with ModelParams::image tensors
  Real log_tau = 0;
  // Frozen towers carry zero gradients and are skipped by the optimizer.
  bool text_frozen = false;
  bool image_frozen = false;
};

struct StepOptions {
  LabelMode labels = LabelMode::soft;
  bool freeze_text = false;
  bool freeze_image = false;
};

/// Single forward/backward over the whole batch. Frozen towers get zero
/// gradients.
GradientSet naive_step(const ModelParams& model, const PairedBatch& batch,
                       const StepOptions& options = {});

/// Loss only, one forward pass without retained activations.
Real batch_loss(const ModelParams& model, const PairedBatch& batch,
                LabelMode labels = LabelMode::soft);

struct MultistreamDiagnostics {
  std::size_t micro_batches = 0;
  // Tape-held activation matrices alive at any point of the embedding pass.
  std::size_t stream1_peak_retained_matrices = 0;
  // Largest number of retained activation scalars during the gradient pass.
  std::size_t stream2_peak_retained_elements = 0;
};

/// Two-stream accumulation. Stream 1 embeds every micro-batch of size
/// `micro` without keeping activations, then computes the full N×N
/// similarity, the loss, ∂loss/∂embeddings and ∂loss/∂log τ. Stream 2
/// re-embeds each micro-batch with a tape, injects its rows of
/// ∂loss/∂embeddings and sums parameter gradients. The final micro-batch may
/// be short.
GradientSet multistream_step(const ModelParams& model, const PairedBatch& batch,
                             Eigen::Index micro, const StepOptions& options = {},
                             MultistreamDiagnostics* diagnostics = nullptr,
                             bool parallel_embedding_pass = false);

struct AdamWConfig {
  Real learning_rate = 3e-5;
  Real weight_decay = 0.0;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  void validate() const;
};

struct Moments {
  std::vector<Mat> first;
  std::vector<Mat> second;
};

struct OptimizerState {
  Moments text;
  Moments image;
  Moments log_tau;
  std::uint64_t step = 0;
};

/// One AdamW step on a ParamSet. `step` is the 1-based update count used
/// for bias correction. Weight decay θ ← θ − lr·wd·θ is applied to tensors
/// flagged `decay`, separately from the adaptive step.
void adamw_update(ParamSet& params, std::span<const Mat> grads, Moments& moments,
                  std::uint64_t step, const AdamWConfig& cfg);

/// Whole-model AdamW step; log τ is clamped afterwards.
void adamw_update(ModelParams& model, const GradientSet& grads, OptimizerState& state,
                  const AdamWConfig& cfg);

enum class SamplingPolicy { uniform, category };

SamplingPolicy parse_sampling_policy(const std::string& name);
std::string to_string(SamplingPolicy p);

struct TrainingSet {
  Mat text;
  Mat image;
  std::vector<CatalogId> catalog;
  std::vector<CategoryPath> categories;  // optional; needed for category sampling

  std::size_t size() const { return static_cast<std::size_t>(text.rows()); }
  void validate() const;
  PairedBatch gather(std::span<const ProductIndex> ids) const;
};

struct TrainConfig {
  ScheduleConfig schedule{16, 64, 1000};
  std::size_t micro_batch = 16;
  AdamWConfig optimizer;
  LabelMode labels = LabelMode::soft;
  SamplingPolicy sampling = SamplingPolicy::uniform;
  Real warmup_fraction = 0.1;
  Real negative_sampling_prob = 0.5;
  std::optional<std::size_t> category_level;  // default: deepest path length − 1
  std::uint64_t seed = 0;
  EncoderSpec text_encoder;
  EncoderSpec image_encoder;
  Real tau_init = 0.07;
  bool freeze_text = false;
  bool freeze_image = false;
  std::size_t eval_interval = 100;
  std::size_t checkpoint_every = 0;  // 0 disables
  std::size_t probe_batch = 64;      // fixed batch scored at every log record
  bool parallel_embedding_pass = false;

  void validate(std::size_t dataset_size) const;
};

struct MetricsRecord {
  std::uint64_t step = 0;
  Real loss = 0;
  std::size_t batch_size = 0;
  Real tau = 0;
  bool category_batch = false;
  std::map<std::string, Real> eval;
};

std::string to_json_line(const MetricsRecord& record);

struct TrainResult {
  ModelParams model;
  std::vector<MetricsRecord> log;
  Real final_loss = 0;
};

using EvalHook = std::function<std::map<std::string, Real>(const ModelParams&, std::uint64_t)>;
using CheckpointHook = std::function<void(const ModelParams&, std::uint64_t)>;

/// Runs `schedule.total_steps` updates. A log record is appended at every
/// step divisible by `eval_interval`; it always carries the probe-batch
/// loss plus whatever `eval_hook` returns.
TrainResult train(const TrainConfig& config, const TrainingSet& data,
                  const EvalHook& eval_hook = {}, const CheckpointHook& checkpoint_hook = {});

/// Same, starting from the given parameters instead of a fresh init.
TrainResult train(const TrainConfig& config, const TrainingSet& data, ModelParams initial,
                  const EvalHook& eval_hook = {}, const CheckpointHook& checkpoint_hook = {});

}  // namespace eclip
