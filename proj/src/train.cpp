#include "eclip/train.hpp"

#include <algorithm>
#include <future>
#include <random>

#include "json.hpp"

namespace eclip {

void PairedBatch::validate() const {
  if (text.rows() != image.rows() || static_cast<Eigen::Index>(catalog.size()) != text.rows()) {
    throw DimensionError("paired batch: " + std::to_string(text.rows()) + " text rows, " +
                         std::to_string(image.rows()) + " image rows, " +
                         std::to_string(catalog.size()) + " catalog ids");
  }
  if (text.rows() == 0) throw CapacityError("paired batch is empty");
}

PairedBatch PairedBatch::rows(Eigen::Index start, Eigen::Index count) const {
  PairedBatch b;
  b.text = text.middleRows(start, count);
  b.image = image.middleRows(start, count);
  b.catalog.assign(catalog.begin() + start, catalog.begin() + start + count);
  return b;
}

Mat target_matrix(std::span<const CatalogId> catalog, LabelMode mode) {
  if (mode == LabelMode::hard) return hard_label_matrix(static_cast<Eigen::Index>(catalog.size()));
  return soft_label_matrix<CatalogId>(catalog);
}

namespace {

std::vector<Mat> zeros_like(const ParamSet& params) {
  std::vector<Mat> out;
  out.reserve(params.size());
  for (const auto& t : params) out.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
  return out;
}

struct SimilarityGrads {
  Real loss = 0;
  Mat d_image;  // ∂loss/∂x, image embeddings
  Mat d_text;   // ∂loss/∂y, text embeddings
  Real d_log_tau = 0;
};

// x: image embeddings, y: text embeddings. sim_ij = ⟨x_i, y_j⟩.
SimilarityGrads similarity_backward(const Mat& x, const Mat& y, std::span<const CatalogId> catalog,
                                    Real tau, LabelMode mode) {
  const Mat sim = similarity_matrix(x, y);
  const auto res = eclip_loss(sim, target_matrix(catalog, mode), tau);
  SimilarityGrads g;
  g.loss = res.loss;
  g.d_image = matmul(res.d_sim, y);
  g.d_text = matmul_tn(res.d_sim, x);
  g.d_log_tau = log_tau_gradient(sim, res.d_sim);
  return g;
}

}  // namespace

GradientSet naive_step(const ModelParams& model, const PairedBatch& batch,
                       const StepOptions& options) {
  batch.validate();
  ActivationTape text_tape, image_tape;
  const Mat y = encode(model.text, model.text_spec, batch.text, &text_tape);
  const Mat x = encode(model.image, model.image_spec, batch.image, &image_tape);
  const auto sg = similarity_backward(x, y, batch.catalog, model.tau(), options.labels);

  GradientSet out;
  out.loss = sg.loss;
  out.log_tau = sg.d_log_tau;
  out.text_frozen = options.freeze_text;
  out.image_frozen = options.freeze_image;
  if (options.freeze_text) {
    out.text = zeros_like(model.text);
  } else {
    ParamSet acc = model.text;
    acc.zero_grad();
    encode_backward(acc, model.text_spec, text_tape, sg.d_text);
    out.text = acc.gradients();
  }
  if (options.freeze_image) {
    out.image = zeros_like(model.image);
  } else {
    ParamSet acc = model.image;
    acc.zero_grad();
    encode_backward(acc, model.image_spec, image_tape, sg.d_image);
    out.image = acc.gradients();
  }
  return out;
}

Real batch_loss(const ModelParams& model, const PairedBatch& batch, LabelMode labels) {
  batch.validate();
  const Mat y = encode(model.text, model.text_spec, batch.text);
  const Mat x = encode(model.image, model.image_spec, batch.image);
  const Mat sim = similarity_matrix(x, y);
  return eclip_loss(sim, target_matrix(batch.catalog, labels), model.tau()).loss;
}

GradientSet multistream_step(const ModelParams& model, const PairedBatch& batch,
                             Eigen::Index micro, const StepOptions& options,
                             MultistreamDiagnostics* diagnostics, bool parallel_embedding_pass) {
  batch.validate();
  const Eigen::Index n = batch.size();
  if (micro < 1 || micro > n) {
    throw ParameterError("multistream_step: micro-batch size " + std::to_string(micro) +
                         " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<std::pair<Eigen::Index, Eigen::Index>> slices;
  for (Eigen::Index start = 0; start < n; start += micro)
    slices.emplace_back(start, std::min(micro, n - start));

  // Stream 1: embeddings only.
  reset_activation_peaks();
  const auto before = activation_stats();
  Mat x(n, model.image_spec.output_dim), y(n, model.text_spec.output_dim);
  auto embed = [&](std::size_t s) {
    const auto [start, len] = slices[s];
    Mat text_rows = batch.text.middleRows(start, len);
    Mat image_rows = batch.image.middleRows(start, len);
    return std::make_pair(encode(model.text, model.text_spec, text_rows),
                          encode(model.image, model.image_spec, image_rows));
  };
  if (parallel_embedding_pass && slices.size() > 1) {
    std::vector<std::future<std::pair<Mat, Mat>>> jobs;
    for (std::size_t s = 0; s < slices.size(); ++s)
      jobs.push_back(std::async(std::launch::async, embed, s));
    for (std::size_t s = 0; s < slices.size(); ++s) {
      auto [yt, xi] = jobs[s].get();
      y.middleRows(slices[s].first, slices[s].second) = yt;
      x.middleRows(slices[s].first, slices[s].second) = xi;
    }
  } else {
    for (std::size_t s = 0; s < slices.size(); ++s) {
      auto [yt, xi] = embed(s);
      y.middleRows(slices[s].first, slices[s].second) = yt;
      x.middleRows(slices[s].first, slices[s].second) = xi;
    }
  }
  const auto after_stream1 = activation_stats();

  const auto sg = similarity_backward(x, y, batch.catalog, model.tau(), options.labels);

  // Stream 2: re-embed with a tape, inject the embedding gradients.
  reset_activation_peaks();
  ParamSet text_acc = model.text, image_acc = model.image;
  text_acc.zero_grad();
  image_acc.zero_grad();
  for (const auto& [start, len] : slices) {
    if (!options.freeze_text) {
      ActivationTape tape;
      Mat rows = batch.text.middleRows(start, len);
      encode(model.text, model.text_spec, rows, &tape);
      Mat d = sg.d_text.middleRows(start, len);
      encode_backward(text_acc, model.text_spec, tape, d);
    }
    if (!options.freeze_image) {
      ActivationTape tape;
      Mat rows = batch.image.middleRows(start, len);
      encode(model.image, model.image_spec, rows, &tape);
      Mat d = sg.d_image.middleRows(start, len);
      encode_backward(image_acc, model.image_spec, tape, d);
    }
  }
  const auto after_stream2 = activation_stats();

  if (diagnostics) {
    diagnostics->micro_batches = slices.size();
    diagnostics->stream1_peak_retained_matrices =
        after_stream1.peak_matrices - before.live_matrices;
    diagnostics->stream2_peak_retained_elements =
        after_stream2.peak_elements - before.live_elements;
  }

  GradientSet out;
  out.loss = sg.loss;
  out.log_tau = sg.d_log_tau;
  out.text_frozen = options.freeze_text;
  out.image_frozen = options.freeze_image;
  out.text = text_acc.gradients();
  out.image = image_acc.gradients();
  return out;
}

void AdamWConfig::validate() const {
  if (!(learning_rate >= 0) || !(weight_decay >= 0) || !(eps > 0) || !(beta1 >= 0 && beta1 < 1) ||
      !(beta2 >= 0 && beta2 < 1)) {
    throw ParameterError("AdamW: invalid hyperparameters");
  }
}

void adamw_update(ParamSet& params, std::span<const Mat> grads, Moments& moments,
                  std::uint64_t step, const AdamWConfig& cfg) {
  if (grads.size() != params.size()) {
    throw DimensionError("adamw_update: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " tensors");
  }
  if (step < 1) throw ParameterError("adamw_update: step counter must start at 1");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].value.rows() || grads[i].cols() != params[i].value.cols()) {
      throw DimensionError("adamw_update: gradient shape mismatch for " + params[i].name);
    }
    if (!grads[i].allFinite()) {
      throw NumericError("adamw_update: non-finite gradient in " + params[i].name);
    }
  }
  if (moments.first.empty()) {
    moments.first = zeros_like(params);
    moments.second = zeros_like(params);
  }
  const Real c1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(step));
  const Real c2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& theta = params[i].value;
    const Mat& g = grads[i];
    Mat& m = moments.first[i];
    Mat& v = moments.second[i];
    if (params[i].decay) theta -= cfg.learning_rate * cfg.weight_decay * theta;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const auto m_hat = m.array() / c1;
    const auto v_hat = v.array() / c2;
    theta.array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
  }
}

void adamw_update(ModelParams& model, const GradientSet& grads, OptimizerState& state,
                  const AdamWConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(grads.log_tau)) throw NumericError("adamw_update: non-finite gradient in log_tau");
  // Reject before touching either tower so a failed step leaves the model intact.
  auto check_finite = [](const ParamSet& params, const std::vector<Mat>& g, const char* tower) {
    for (std::size_t i = 0; i < g.size() && i < params.size(); ++i) {
      if (!g[i].allFinite()) {
        throw NumericError(std::string("adamw_update: non-finite gradient in ") + tower + "." + params[i].name);
      }
    }
  };
  if (!grads.text_frozen) check_finite(model.text, grads.text, "text");
  if (!grads.image_frozen) check_finite(model.image, grads.image, "image");
  ++state.step;
  if (!grads.text_frozen) adamw_update(model.text, grads.text, state.text, state.step, cfg);
  if (!grads.image_frozen) adamw_update(model.image, grads.image, state.image, state.step, cfg);
  ParamSet temperature;
  temperature.add("log_tau", Mat::Constant(1, 1, model.log_tau), false);
  const Mat g = Mat::Constant(1, 1, grads.log_tau);
  adamw_update(temperature, std::span<const Mat>(&g, 1), state.log_tau, state.step, cfg);
  model.log_tau = temperature[0].value(0, 0);
  model.clamp_log_tau();
}

SamplingPolicy parse_sampling_policy(const std::string& name) {
  if (name == "uniform") return SamplingPolicy::uniform;
  if (name == "category") return SamplingPolicy::category;
  throw ParameterError("unknown sampling policy '" + name + "' (expected uniform or category)");
}

std::string to_string(SamplingPolicy p) {
  return p == SamplingPolicy::uniform ? "uniform" : "category";
}

void TrainingSet::validate() const {
  if (text.rows() != image.rows() || catalog.size() != size()) {
    throw DimensionError("training set: row counts disagree");
  }
  if (!categories.empty() && categories.size() != size()) {
    throw DimensionError("training set: category list length disagrees with row count");
  }
}

PairedBatch TrainingSet::gather(std::span<const ProductIndex> ids) const {
  PairedBatch b;
  const auto n = static_cast<Eigen::Index>(ids.size());
  b.text.resize(n, text.cols());
  b.image.resize(n, image.cols());
  b.catalog.resize(ids.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto id = static_cast<Eigen::Index>(ids[i]);
    b.text.row(i) = text.row(id);
    b.image.row(i) = image.row(id);
    b.catalog[i] = catalog[ids[i]];
  }
  return b;
}

void TrainConfig::validate(std::size_t dataset_size) const {
  schedule.validate();
  optimizer.validate();
  text_encoder.validate();
  image_encoder.validate();
  if (text_encoder.output_dim != image_encoder.output_dim) {
    throw ParameterError("text and image encoders must share the output dimension");
  }
  if (micro_batch < 1 || micro_batch > schedule.initial_batch) {
    throw ParameterError("micro_batch must be in [1, initial batch size]");
  }
  if (!(warmup_fraction >= 0 && warmup_fraction <= 1)) {
    throw ParameterError("warmup_fraction must be in [0, 1]");
  }
  if (!(negative_sampling_prob >= 0 && negative_sampling_prob <= 1)) {
    throw ParameterError("negative_sampling_prob must be in [0, 1]");
  }
  if (!(tau_init > 0)) throw ParameterError("tau_init must be positive");
  if (eval_interval < 1) throw ParameterError("eval_interval must be >= 1");
  if (dataset_size < schedule.max_batch) {
    throw CapacityError("dataset has " + std::to_string(dataset_size) +
                        " pairs, fewer than the maximum batch size " +
                        std::to_string(schedule.max_batch));
  }
}

std::string to_json_line(const MetricsRecord& record) {
  nlohmann::ordered_json j;
  j["step"] = record.step;
  j["loss"] = record.loss;
  j["batch_size"] = record.batch_size;
  j["tau"] = record.tau;
  nlohmann::ordered_json eval = nlohmann::ordered_json::object();
  for (const auto& [k, v] : record.eval) eval[k] = v;
  j["eval"] = std::move(eval);
  return j.dump();
}

TrainResult train(const TrainConfig& config, const TrainingSet& data, const EvalHook& eval_hook,
                  const CheckpointHook& checkpoint_hook) {
  config.validate(data.size());
  return train(config, data,
               init_model(config.text_encoder, config.image_encoder, config.seed, config.tau_init),
               eval_hook, checkpoint_hook);
}

TrainResult train(const TrainConfig& config, const TrainingSet& data, ModelParams model,
                  const EvalHook& eval_hook, const CheckpointHook& checkpoint_hook) {
  config.validate(data.size());
  data.validate();
  model.validate();
  if (model.text_spec != config.text_encoder || model.image_spec != config.image_encoder) {
    throw ParameterError("initial model does not match the configured encoders");
  }
  if (data.text.cols() != config.text_encoder.input_dim ||
      data.image.cols() != config.image_encoder.input_dim) {
    throw DimensionError("training features do not match encoder input dimensions");
  }

  CategoryIndex tree;
  std::size_t level = 0;
  if (config.sampling == SamplingPolicy::category) {
    if (data.categories.empty()) {
      throw ParameterError("category sampling needs category paths for every product");
    }
    tree = CategoryIndex(data.categories);
    level = config.category_level.value_or(tree.max_depth() > 0 ? tree.max_depth() - 1 : 0);
    if (level > tree.max_depth()) throw ParameterError("category_level exceeds tree depth");
  }

  std::seed_seq sampler_seed{config.seed, std::uint64_t{1}};
  std::seed_seq probe_seed{config.seed, std::uint64_t{2}};
  std::mt19937_64 sampler(sampler_seed), probe_rng(probe_seed);
  std::bernoulli_distribution use_category(config.negative_sampling_prob);

  const auto probe_ids =
      compose_batch_uniform(data.size(), std::min(config.probe_batch, data.size()), probe_rng);
  const PairedBatch probe = data.gather(probe_ids);

  const StepOptions options{config.labels, config.freeze_text, config.freeze_image};
  const auto total = config.schedule.total_steps;
  const auto warmup_steps =
      static_cast<std::size_t>(std::floor(config.warmup_fraction * static_cast<Real>(total)));

  TrainResult result;
  OptimizerState state;
  for (std::size_t t = 0; t < total; ++t) {
    const std::size_t b = batch_size_schedule(t, config.schedule);
    bool category_batch = false;
    std::vector<ProductIndex> ids;
    if (config.sampling == SamplingPolicy::category && t >= warmup_steps && use_category(sampler)) {
      auto draw = compose_batch_category(tree, b, level, sampler);
      category_batch = !draw.category_fallback;
      ids = std::move(draw.ids);
    } else {
      ids = compose_batch_uniform(data.size(), b, sampler);
    }
    const PairedBatch batch = data.gather(ids);
    const auto micro = static_cast<Eigen::Index>(std::min(config.micro_batch, b));
    const GradientSet grads = multistream_step(model, batch, micro, options, nullptr,
                                               config.parallel_embedding_pass);
    adamw_update(model, grads, state, config.optimizer);

    if (t % config.eval_interval == 0) {
      MetricsRecord rec;
      rec.step = t;
      rec.loss = grads.loss;
      rec.batch_size = b;
      rec.tau = model.tau();
      rec.category_batch = category_batch;
      rec.eval["probe_loss"] = batch_loss(model, probe, config.labels);
      if (eval_hook) {
        for (const auto& [k, v] : eval_hook(model, t)) rec.eval[k] = v;
      }
      result.log.push_back(std::move(rec));
    }
    if (checkpoint_hook && config.checkpoint_every > 0 && (t + 1) % config.checkpoint_every == 0) {
      checkpoint_hook(model, t + 1);
    }
  }
  result.final_loss = batch_loss(model, probe, config.labels);
  result.model = std::move(model);
  return result;
}

}  // namespace eclip
