#pragma once

// On-disk dataset layout shared by the CLI subcommands: a manifest, PPM
// images, precomputed text features and an optional class table.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "eclip/eval.hpp"
#include "eclip/preprocess.hpp"
#include "eclip/train.hpp"

namespace eclip {

/// Stable 63-bit key for a catalog id string.
CatalogId catalog_key(const std::string& catalog_id);

using TextFeatureTable = std::map<std::string, Vec>;

/// {"product_id": ..., "features": [...]} per line, in manifest order.
void write_text_features(const std::filesystem::path& path, const std::vector<ProductRecord>& records,
                         const TextFeatureTable& table);
TextFeatureTable read_text_features(const std::filesystem::path& path);

struct ClassPrompt {
  Label label = 0;
  std::string name;
  std::string path;
  Label attribute = 0;
  bool adult = false;
  Vec prompt;
};

struct ClassTable {
  std::vector<ClassPrompt> classes;
  std::vector<Vec> attribute_prompts;

  /// Index of the class whose name equals the leaf category, or -1.
  Label find_leaf(const CategoryPath& path) const;
};

ClassTable read_class_table(const std::filesystem::path& path);

struct LoadedDataset {
  std::vector<ProductRecord> records;
  TrainingSet set;
  std::vector<Label> labels;  // class label per row; -1 when unknown
};

/// Reads manifest.jsonl under `dir`. Text features come from
/// text_features.jsonl when present, otherwise from hashed titles of width
/// `title_dim`. Records whose image cannot be read are skipped.
LoadedDataset load_dataset(const std::filesystem::path& dir, int grid, Eigen::Index title_dim,
                           const ClassTable* classes = nullptr);

}  // namespace eclip
