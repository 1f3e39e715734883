#pragma once

// Batch composition and the growing-batch schedule.

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace eclip {

struct ScheduleConfig {
  std::size_t initial_batch = 1;  // B0
  std::size_t max_batch = 1;      // Bmax
  std::size_t total_steps = 1;    // T
  void validate() const;
};

/// B_t = clamp(B0·⌊2/(1+cos(π·t/T))⌋, B0, Bmax). The multiplier is the
/// reciprocal of a cosine-annealing factor, so the batch grows where a
/// learning-rate schedule would decay.
std::size_t batch_size_schedule(std::size_t step, const ScheduleConfig& cfg);

using ProductIndex = std::size_t;
using CategoryPath = std::vector<std::string>;

/// Products grouped by every prefix of their category path.
class CategoryIndex {
 public:
  CategoryIndex() = default;
  explicit CategoryIndex(const std::vector<CategoryPath>& paths);

  std::size_t size() const { return paths_.size(); }
  bool empty() const { return paths_.empty(); }
  std::size_t max_depth() const { return max_depth_; }
  const CategoryPath& path(ProductIndex p) const { return paths_.at(p); }

  /// Members whose path starts with the first `level` names of `anchor`'s
  /// path (its whole path if shorter).
  const std::vector<ProductIndex>& subtree(ProductIndex anchor, std::size_t level) const;

 private:
  static std::string key(const CategoryPath& path, std::size_t level);

  std::vector<CategoryPath> paths_;
  std::size_t max_depth_ = 0;
  std::map<std::string, std::vector<ProductIndex>> members_;
};

struct BatchDraw {
  std::vector<ProductIndex> ids;
  bool category_fallback = false;  // subtree too small, drawn uniformly instead
};

/// N distinct indices from [0, dataset_size), uniform without replacement.
std::vector<ProductIndex> compose_batch_uniform(std::size_t dataset_size, std::size_t n,
                                                std::mt19937_64& rng);

/// Subset form: N distinct members of `pool`.
std::vector<ProductIndex> sample_without_replacement(const std::vector<ProductIndex>& pool,
                                                     std::size_t n, std::mt19937_64& rng);

/// Hard-negative batch: a uniform anchor fixes a category prefix of length
/// `level`; all N members come from that subtree when it is large enough,
/// otherwise the batch is uniform over the dataset.
BatchDraw compose_batch_category(const CategoryIndex& tree, std::size_t n, std::size_t level,
                                 std::mt19937_64& rng);

}  // namespace eclip
