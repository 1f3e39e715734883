#include "eclip/batch.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "eclip/errors.hpp"

namespace eclip {

void ScheduleConfig::validate() const {
  if (initial_batch < 1) throw ParameterError("schedule: initial batch must be >= 1");
  if (max_batch < initial_batch) throw ParameterError("schedule: max batch below initial batch");
  if (total_steps < 1) throw ParameterError("schedule: total steps must be >= 1");
}

std::size_t batch_size_schedule(std::size_t step, const ScheduleConfig& cfg) {
  cfg.validate();
  if (step >= cfg.total_steps) {
    throw RangeError("batch_size_schedule: step " + std::to_string(step) + " >= total steps " +
                     std::to_string(cfg.total_steps));
  }
  const double progress = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  const double denom = 1.0 + std::cos(std::numbers::pi * progress);
  // cos(π·2/3) rounds so that 2/(1+cos) lands a few ulps below 4; the
  // tolerance keeps exact integer multipliers from flooring one short.
  const double factor = std::floor(2.0 / denom + 1e-9);
  const double cap = static_cast<double>(cfg.max_batch) / static_cast<double>(cfg.initial_batch);
  if (!std::isfinite(factor) || factor >= cap) return cfg.max_batch;
  const auto b = cfg.initial_batch * static_cast<std::size_t>(factor);
  return std::clamp(b, cfg.initial_batch, cfg.max_batch);
}

CategoryIndex::CategoryIndex(const std::vector<CategoryPath>& paths) : paths_(paths) {
  for (ProductIndex p = 0; p < paths_.size(); ++p) {
    max_depth_ = std::max(max_depth_, paths_[p].size());
    for (std::size_t level = 0; level <= paths_[p].size(); ++level)
      members_[key(paths_[p], level)].push_back(p);
  }
}

std::string CategoryIndex::key(const CategoryPath& path, std::size_t level) {
  std::string k = std::to_string(std::min(level, path.size()));
  for (std::size_t i = 0; i < std::min(level, path.size()); ++i) {
    k += '\x1f';
    k += path[i];
  }
  return k;
}

const std::vector<ProductIndex>& CategoryIndex::subtree(ProductIndex anchor,
                                                        std::size_t level) const {
  return members_.at(key(paths_.at(anchor), level));
}

std::vector<ProductIndex> sample_without_replacement(const std::vector<ProductIndex>& pool,
                                                     std::size_t n, std::mt19937_64& rng) {
  if (pool.size() < n) {
    throw CapacityError("cannot draw " + std::to_string(n) + " distinct items from " +
                        std::to_string(pool.size()));
  }
  // Partial Fisher-Yates over a copy.
  std::vector<ProductIndex> items = pool;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(n);
  return items;
}

std::vector<ProductIndex> compose_batch_uniform(std::size_t dataset_size, std::size_t n,
                                                std::mt19937_64& rng) {
  std::vector<ProductIndex> all(dataset_size);
  std::iota(all.begin(), all.end(), ProductIndex{0});
  return sample_without_replacement(all, n, rng);
}

BatchDraw compose_batch_category(const CategoryIndex& tree, std::size_t n, std::size_t level,
                                 std::mt19937_64& rng) {
  if (tree.empty()) throw CapacityError("compose_batch_category: empty category tree");
  if (level > tree.max_depth()) {
    throw ParameterError("compose_batch_category: level " + std::to_string(level) +
                         " exceeds tree depth " + std::to_string(tree.max_depth()));
  }
  std::uniform_int_distribution<std::size_t> pick(0, tree.size() - 1);
  const ProductIndex anchor = pick(rng);
  const auto& members = tree.subtree(anchor, level);
  BatchDraw draw;
  if (members.size() >= n) {
    draw.ids = sample_without_replacement(members, n, rng);
  } else {
    draw.ids = compose_batch_uniform(tree.size(), n, rng);
    draw.category_fallback = true;
  }
  return draw;
}

}  // namespace eclip
