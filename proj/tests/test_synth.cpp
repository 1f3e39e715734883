#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "eclip/dataset.hpp"
#include "eclip/errors.hpp"
#include "eclip/eval.hpp"
#include "eclip/experiment.hpp"
#include "eclip/synth.hpp"

using namespace eclip;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_classes = 6;
  s.n_catalogs_per_class = 3;
  s.n_duplicates_per_catalog = 2;
  s.text_dim = 16;
  s.image_size = 10;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("zero noise makes catalog members identical") {
  auto spec = small_spec(3);
  spec.noise_sigma = 0;
  const auto d = generate(spec);
  REQUIRE(d.records.size() == 36);
  for (std::size_t i = 0; i < d.records.size(); i += 2) {
    CHECK(d.records[i].catalog_id == d.records[i + 1].catalog_id);
    const auto a = static_cast<Eigen::Index>(i);
    CHECK(d.text.row(a) == d.text.row(a + 1));
    CHECK(d.images[i] == d.images[i + 1]);
    CHECK(patch_hash(d.images[i]) == patch_hash(d.images[i + 1]));
  }
}

TEST_CASE("generation is reproducible per seed") {
  const auto a = generate(small_spec(9));
  const auto b = generate(small_spec(9));
  const auto c = generate(small_spec(10));
  CHECK(a.records == b.records);
  CHECK(a.text == b.text);
  CHECK(a.images == b.images);
  CHECK(a.class_of == b.class_of);
  CHECK(a.text != c.text);
}

TEST_CASE("prototypes are pairwise separated") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    SynthSpec spec;
    spec.n_classes = 32;
    spec.text_dim = 64;
    spec.n_catalogs_per_class = 1;
    spec.n_duplicates_per_catalog = 1;
    spec.seed = seed;
    const auto d = generate(spec);
    for (std::size_t i = 0; i < d.classes.size(); ++i)
      for (std::size_t j = i + 1; j < d.classes.size(); ++j) {
        const Vec& p = d.classes[i].prototype;
        const Vec& q = d.classes[j].prototype;
        CHECK(p.dot(q) / (p.norm() * q.norm()) < 0.5);
      }
  }
  SynthSpec crowded;
  crowded.n_classes = 40;
  crowded.text_dim = 2;
  CHECK_THROWS_AS(generate(crowded), DegenerateError);
}

TEST_CASE("catalogs, categories and class metadata") {
  SynthSpec spec = small_spec(4);
  spec.n_classes = 20;
  spec.category_depth = 3;
  const auto d = generate(spec);
  std::map<std::string, std::set<Label>> classes_of_catalog;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    classes_of_catalog[r.catalog_id].insert(d.class_of[i]);
    const auto& cls = d.classes[static_cast<std::size_t>(d.class_of[i])];
    CHECK(r.product_category == cls.path);
    CHECK(r.product_category.size() == 3);
    CHECK(tokenize_title(r.title).size() >= 2);
  }
  CHECK(classes_of_catalog.size() == 20 * 3);
  for (const auto& [id, labels] : classes_of_catalog) CHECK(labels.size() == 1);
  // Classes 0..3 share their parent, 4 starts the next one.
  CHECK(d.classes[0].path[1] == d.classes[3].path[1]);
  CHECK(d.classes[3].path[1] != d.classes[4].path[1]);
  CHECK(d.classes[3].adult);
  CHECK_FALSE(d.classes[2].adult);
  CHECK(d.classes[19].attribute == 1);
  CHECK(d.attribute_prompts.size() == 2);
}

TEST_CASE("generated batches have valid soft labels") {
  const auto d = generate(small_spec(6));
  std::vector<std::size_t> rows(d.records.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto set = to_training_set(d, rows, 4);
  CHECK(set.image.cols() == 48);
  const Mat z = target_matrix(set.catalog, LabelMode::soft);
  for (Eigen::Index i = 0; i < z.rows(); ++i) CHECK(z.row(i).sum() == doctest::Approx(1.0));
  std::set<CatalogId> keys(set.catalog.begin(), set.catalog.end());
  CHECK(keys.size() == 18);
}

TEST_CASE("k-means recovers classes from noiseless text") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthSpec spec;
    spec.n_classes = 12;
    spec.n_catalogs_per_class = 3;
    spec.n_duplicates_per_catalog = 2;
    spec.text_dim = 64;
    spec.noise_sigma = 0;
    spec.catalog_spread = 0;
    spec.seed = seed;
    const auto d = generate(spec);
    const auto r = kmeans(d.text, 12, {seed});
    CHECK(clustering_metrics(r.assignments, d.class_of).acc == 1.0);
  }
}

TEST_CASE("holdout membership is stable and roughly proportional") {
  std::size_t held = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto id = "c" + std::to_string(i) + "-k0";
    const bool h = is_holdout_catalog(id, 0.25);
    CHECK(h == is_holdout_catalog(id, 0.25));
    CHECK_FALSE(is_holdout_catalog(id, 0.0));
    held += h ? 1 : 0;
  }
  CHECK(held > 400);
  CHECK(held < 600);
}

TEST_CASE("written datasets load back") {
  const auto dir = std::filesystem::temp_directory_path() / "eclip_test_synth";
  std::filesystem::remove_all(dir);
  const auto d = generate(small_spec(8));
  write_dataset(dir, d);
  const auto table = read_class_table(dir / "classes.json");
  REQUIRE(table.classes.size() == 6);
  const auto loaded = load_dataset(dir, 4, 32, &table);
  REQUIRE(loaded.records.size() == d.records.size());
  CHECK(loaded.records == d.records);
  CHECK((loaded.set.text - d.text).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(loaded.labels == d.class_of);
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK((table.classes[c].prompt - d.classes[c].prototype).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(table.find_leaf(d.classes[c].path) == static_cast<Label>(c));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid specs are rejected") {
  auto s = small_spec(1);
  s.n_classes = 0;
  CHECK_THROWS_AS(generate(s), ParameterError);
  s = small_spec(1);
  s.noise_sigma = -1;
  CHECK_THROWS_AS(generate(s), ParameterError);
  s = small_spec(1);
  s.category_depth = 5;
  CHECK_THROWS_AS(generate(s), ParameterError);
}
