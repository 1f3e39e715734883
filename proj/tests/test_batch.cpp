#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "eclip/batch.hpp"
#include "eclip/errors.hpp"
#include "eclip/tensor.hpp"

using namespace eclip;

TEST_CASE("batch schedule at hand-derived points") {
  const ScheduleConfig c12{8, 256, 12};
  CHECK(batch_size_schedule(0, c12) == 8);   // 2/(1+1) = 1
  CHECK(batch_size_schedule(3, c12) == 8);   // p = 1/4: 2/(1+0.7071) = 1.17
  CHECK(batch_size_schedule(6, c12) == 16);  // p = 1/2: 2/(1+0) = 2
  CHECK(batch_size_schedule(8, c12) == 32);  // p = 2/3: 2/(1-0.5) = 4
  const ScheduleConfig c10{8, 256, 10};
  CHECK(batch_size_schedule(9, c10) == 256);  // p = 0.9: 8*40 = 320, clamped
  const ScheduleConfig c3{8, 256, 3};
  CHECK(batch_size_schedule(2, c3) == 32);
}

TEST_CASE("batch schedule is monotone and bounded") {
  for (std::size_t total : {1, 2, 7, 100, 1000, 4321}) {
    const ScheduleConfig c{8, 256, total};
    std::size_t prev = 0;
    for (std::size_t t = 0; t < total; ++t) {
      const auto b = batch_size_schedule(t, c);
      CHECK(b >= prev);
      CHECK(b >= 8);
      CHECK(b <= 256);
      CHECK(b % 8 == 0);
      prev = b;
    }
  }
}

TEST_CASE("batch schedule growth cap") {
  const ScheduleConfig c{16, 30 * 16, 10000};
  std::size_t biggest = 0;
  for (std::size_t t = 0; t < c.total_steps; ++t) biggest = std::max(biggest, batch_size_schedule(t, c));
  CHECK(biggest == 30 * 16);
  const ScheduleConfig flat{16, 16, 500};
  for (std::size_t t = 0; t < flat.total_steps; ++t) CHECK(batch_size_schedule(t, flat) == 16);
}

TEST_CASE("batch schedule errors") {
  CHECK_THROWS_AS(batch_size_schedule(12, ScheduleConfig{8, 256, 12}), RangeError);
  CHECK_THROWS_AS(batch_size_schedule(0, ScheduleConfig{0, 256, 12}), ParameterError);
  CHECK_THROWS_AS(batch_size_schedule(0, ScheduleConfig{8, 4, 12}), ParameterError);
  CHECK_THROWS_AS(batch_size_schedule(0, ScheduleConfig{8, 8, 0}), ParameterError);
}

TEST_CASE("uniform batches") {
  std::mt19937_64 rng(1);
  auto all = compose_batch_uniform(20, 20, rng);
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 20; ++i) CHECK(all[i] == i);

  std::mt19937_64 a(42), b(42);
  CHECK(compose_batch_uniform(100, 10, a) == compose_batch_uniform(100, 10, b));

  for (int t = 0; t < 100; ++t) {
    const auto ids = compose_batch_uniform(50, 17, rng);
    CHECK(std::set<ProductIndex>(ids.begin(), ids.end()).size() == 17);
    CHECK(*std::max_element(ids.begin(), ids.end()) < 50);
  }
  CHECK_THROWS_AS(compose_batch_uniform(5, 6, rng), CapacityError);
  CHECK_THROWS_AS(sample_without_replacement({1, 2}, 3, rng), CapacityError);
}

TEST_CASE("uniform single draws are balanced") {
  std::mt19937_64 rng(7);
  std::map<ProductIndex, std::size_t> counts;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) ++counts[compose_batch_uniform(10, 1, rng)[0]];
  CHECK(counts.size() == 10);
  Real chi2 = 0;
  for (const auto& [id, c] : counts) {
    const Real f = static_cast<Real>(c) / draws;
    CHECK(std::abs(f - 0.1) <= 0.01);
    chi2 += (static_cast<Real>(c) - 10000.0) * (static_cast<Real>(c) - 10000.0) / 10000.0;
  }
  CHECK(chi2 < 27.88);  // 99.9% quantile, 9 degrees of freedom
}

namespace {

std::vector<CategoryPath> two_branches(std::size_t a, std::size_t d) {
  std::vector<CategoryPath> paths;
  for (std::size_t i = 0; i < a; ++i) paths.push_back({"A", "B"});
  for (std::size_t i = 0; i < d; ++i) paths.push_back({"D", "E"});
  return paths;
}

}  // namespace

TEST_CASE("category index subtrees") {
  const CategoryIndex tree({{"A", "B", "C"}, {"A", "B"}, {"A", "X"}, {"D"}});
  CHECK(tree.max_depth() == 3);
  CHECK(tree.subtree(0, 1).size() == 3);
  CHECK(tree.subtree(0, 2).size() == 2);
  CHECK(tree.subtree(0, 3).size() == 1);
  CHECK(tree.subtree(3, 2).size() == 1);
  CHECK(tree.subtree(0, 0).size() == 4);
}

TEST_CASE("category batches share the anchor prefix") {
  const CategoryIndex tree(two_branches(10, 10));
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto draw = compose_batch_category(tree, 4, 1, rng);
    CHECK_FALSE(draw.category_fallback);
    CHECK(draw.ids.size() == 4);
    CHECK(std::set<ProductIndex>(draw.ids.begin(), draw.ids.end()).size() == 4);
    const auto& head = tree.path(draw.ids[0]).front();
    for (auto id : draw.ids) CHECK(tree.path(id).front() == head);
  }
}

TEST_CASE("category batches fall back to uniform") {
  const CategoryIndex tree(two_branches(2, 10));
  std::mt19937_64 rng(5);
  std::size_t fallbacks = 0;
  for (int t = 0; t < 300; ++t) {
    const auto draw = compose_batch_category(tree, 4, 2, rng);
    CHECK(std::set<ProductIndex>(draw.ids.begin(), draw.ids.end()).size() == 4);
    if (draw.category_fallback) ++fallbacks;
    else for (auto id : draw.ids) CHECK(tree.path(id).front() == "D");
  }
  // The anchor lands in the 2-member branch about 1/6 of the time.
  CHECK(fallbacks > 20);
  CHECK(fallbacks < 100);

  std::mt19937_64 a(9), b(9);
  CHECK(compose_batch_category(tree, 4, 1, a).ids == compose_batch_category(tree, 4, 1, b).ids);
}

TEST_CASE("category batch errors") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(compose_batch_category(CategoryIndex{}, 4, 1, rng), CapacityError);
  CHECK_THROWS_AS(compose_batch_category(CategoryIndex(two_branches(5, 5)), 4, 3, rng), ParameterError);
}
