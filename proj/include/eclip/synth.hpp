#pragma once

// Seeded synthetic catalogs: latent classes with text prototypes and image
// patterns, catalogs of near-identical listings, and category trees.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "eclip/eval.hpp"
#include "eclip/preprocess.hpp"
#include "eclip/train.hpp"

namespace eclip {

struct SynthSpec {
  std::size_t n_classes = 32;
  std::size_t n_catalogs_per_class = 8;
  std::size_t n_duplicates_per_catalog = 3;
  Eigen::Index text_dim = 64;
  int image_size = 32;
  Real noise_sigma = 0.1;
  std::size_t category_depth = 2;  // 1..4
  std::uint64_t seed = 0;
  // Spread of catalog centres around their class prototype, relative to the
  // prototype's per-coordinate scale.
  Real catalog_spread = 1.0;

  void validate() const;
};

struct ClassInfo {
  std::string name;      // leaf category name
  CategoryPath path;
  Vec prototype;         // noise-free text features, used as the class prompt
  Label attribute = 0;   // colour palette index
  bool adult = false;
};

struct SynthDataset {
  std::vector<ProductRecord> records;
  Mat text;                          // N×text_dim
  std::vector<ImageBuffer> images;   // N
  std::vector<Label> class_of;       // N, index into classes
  std::vector<ClassInfo> classes;
  std::vector<Vec> attribute_prompts;  // mean prototype of each palette's classes
};

SynthDataset generate(const SynthSpec& spec);

/// Rows of a dataset as encoder inputs: text features, image_features on a
/// grid×grid lattice, and dense catalog ids.
TrainingSet to_training_set(const SynthDataset& data, const std::vector<std::size_t>& rows, int grid);

/// Stable membership test used to hold whole catalogs out of training.
bool is_holdout_catalog(const std::string& catalog_id, Real fraction);

struct DedupBenchmark {
  std::vector<ProductRecord> records;
  std::vector<ImageBuffer> images;
  std::set<std::string> injected;  // product ids that are exact duplicates
};

/// `total` records of which round(total·dup_fraction) exactly duplicate the
/// title or the pixels of an earlier, otherwise unique record.
DedupBenchmark generate_dedup_benchmark(std::size_t total, Real dup_fraction, std::uint64_t seed,
                                        int image_size = 32);

/// manifest.jsonl, images/<id>.ppm, text_features.jsonl and classes.json.
void write_dataset(const std::filesystem::path& dir, const SynthDataset& data);

}  // namespace eclip
