#pragma once

// Run configuration: one flat key = value file with [section] headers,
// overridable from the environment (seed, output directory) and the CLI.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eclip/errors.hpp"
#include "eclip/experiment.hpp"
#include "eclip/synth.hpp"
#include "eclip/train.hpp"

namespace eclip {

/// Bad configuration; `field` is "section.key" when one is to blame.
class ConfigError : public ParameterError {
 public:
  ConfigError(std::string field, const std::string& message)
      : ParameterError(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  bool deterministic = false;

  // [synth]
  SynthSpec synth;

  // [data]
  std::string data_dir = "data";
  Real holdout_fraction = 0.25;
  int image_grid = 8;
  Eigen::Index title_dim = 64;

  // [preprocess]
  int min_side = 8;
  bool catalog_dedup = false;

  // [model]
  std::vector<Eigen::Index> text_hidden{128};
  std::vector<Eigen::Index> image_hidden{128};
  Eigen::Index embed_dim = 64;
  Activation activation = Activation::tanh;
  Eigen::Index text_tokens = 1;
  Eigen::Index image_tokens = 1;

  // [schedule] and [train]; encoder specs, seed and tau_init are filled in
  // from the fields above by train_config().
  TrainConfig train;

  // [eval]
  EvalSettings eval;
  std::string checkpoint;  // empty: <out>/checkpoint.json of the train run

  /// Field-level checks that need no data; throws ConfigError.
  void validate() const;

  /// TrainConfig with encoder input widths taken from the data.
  TrainConfig train_config(Eigen::Index text_dim, Eigen::Index image_dim) const;
};

/// Applies "key = value" lines under [section] headers to `config`.
/// Unknown sections or keys and malformed values throw ConfigError.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin = "config");
RunConfig parse_config_file(const std::filesystem::path& path);

/// One "section.key=value" assignment, as given to --set.
void apply_assignment(RunConfig& config, std::string_view assignment);

/// ECLIP_SEED and ECLIP_OUT.
void apply_environment(RunConfig& config);

/// Every key with its resolved value, in a form apply_config_text accepts.
std::string to_config_text(const RunConfig& config);

}  // namespace eclip
