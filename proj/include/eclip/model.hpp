#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "eclip/encoder.hpp"

namespace eclip {

inline Real log_tau_min() { return std::log(0.01); }
inline Real log_tau_max() { return std::log(1.0); }

/// Both towers plus the learnable temperature τ = exp(log_tau).
struct ModelParams {
  EncoderSpec text_spec;
  EncoderSpec image_spec;
  ParamSet text;
  ParamSet image;
  Real log_tau = std::log(0.07);

  Real tau() const { return std::exp(log_tau); }
  void clamp_log_tau();
  void validate() const;
};

/// Text tower from `seed`, image tower from the next generator draws.
ModelParams init_model(const EncoderSpec& text_spec, const EncoderSpec& image_spec,
                       std::uint64_t seed, Real tau_init = 0.07);

/// One ParamSet view of the whole model: "text.*", "image.*" and a 1×1
/// "log_tau" tensor, in that order.
ParamSet flatten(const ModelParams& model);
ModelParams unflatten(const ParamSet& flat, const EncoderSpec& text_spec,
                      const EncoderSpec& image_spec);

/// JSON checkpoint; field layout documented in the README.
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path,
                     std::uint64_t step = 0);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace eclip
