#pragma once

// Glue between datasets, trained models and the evaluation protocols:
// catalog-level hold-out splits and the JSON evaluation report.

#include <set>
#include <string>
#include <vector>

#include "eclip/dataset.hpp"
#include "eclip/eval.hpp"
#include "eclip/model.hpp"
#include "eclip/synth.hpp"
#include "json.hpp"

namespace eclip {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Whole catalogs go to `test` when is_holdout_catalog says so.
Split holdout_split(const std::vector<ProductRecord>& records, Real fraction);

TrainingSet subset(const TrainingSet& set, const std::vector<std::size_t>& rows);

/// In-memory equivalent of write_dataset followed by load_dataset.
std::pair<LoadedDataset, ClassTable> as_loaded(const SynthDataset& data, int grid);

struct EvalItems {
  Mat text;   // raw encoder inputs
  Mat image;
  std::vector<Label> classes;
  std::vector<Label> attributes;
  std::vector<Label> catalogs;
  std::vector<Label> adult;  // 0/1
};

EvalItems make_items(const LoadedDataset& data, const ClassTable& classes,
                     const std::vector<std::size_t>& rows);

struct EvalInputs {
  EvalItems train;
  EvalItems test;
  Mat class_prompts;      // K×text_dim raw features
  Mat attribute_prompts;  // A×text_dim, may be empty
};

EvalInputs make_eval_inputs(const LoadedDataset& data, const ClassTable& classes, const Split& split);

inline const std::vector<std::string>& all_eval_tasks() {
  static const std::vector<std::string> tasks = {"zero_shot_category", "matching", "linear_probe",
                                                 "clustering", "attribute", "adult", "fine_tune"};
  return tasks;
}

struct EvalSettings {
  std::vector<std::string> tasks = all_eval_tasks();
  Eigen::Index pca_dim = 128;
  ProbeConfig probe;
  std::uint64_t seed = 0;
};

struct Embedded {
  Mat text;
  Mat image;
  Mat multimodal;

  const Mat& get(Modality m) const;
};

Embedded embed(const ModelParams& model, const Mat& text, const Mat& image);

/// {"task": {"image": {...}, "text": {...}, "multimodal": {...}}, ...}
nlohmann::ordered_json evaluate(const ModelParams& model, const EvalInputs& inputs,
                                const EvalSettings& settings);

}  // namespace eclip
