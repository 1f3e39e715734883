#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "eclip/errors.hpp"
#include "eclip/preprocess.hpp"
#include "eclip/synth.hpp"

using namespace eclip;

namespace {

ImageBuffer uniform(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  ImageBuffer img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y)[0] = r;
      img.at(x, y)[1] = g;
      img.at(x, y)[2] = b;
    }
  return img;
}

ImageBuffer noise_image(int w, int h, std::mt19937_64& rng) {
  ImageBuffer img(w, h);
  std::uniform_int_distribution<int> level(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(level(rng));
  return img;
}

// Straight transcription of the hash definition. A digit d is reached when
// the gray mean g = total/(3·count) satisfies g >= 25.6·d, tested in integers.
std::string reference_hash(const ImageBuffer& img) {
  std::string out;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      const int y0 = r * img.height / 5, y1 = (r + 1) * img.height / 5;
      const int x0 = c * img.width / 5, x1 = (c + 1) * img.width / 5;
      long long total = 0, count = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const auto* p = img.at(x, y);
          total += p[0] + p[1] + p[2];
          ++count;
        }
      int d = 0;
      while (d < 9 && 10 * total >= 3 * count * 256 * (d + 1)) ++d;
      out += static_cast<char>('0' + d);
    }
  auto two = [](int v) { return (v < 10 ? "0" : "") + std::to_string(v); };
  return out + two(std::min(99, img.width / 100)) + two(std::min(99, img.height / 100));
}

ProductRecord record(const std::string& id, const std::string& title, const std::string& time) {
  ProductRecord r;
  r.product_id = id;
  r.title = title;
  r.registration_time = time;
  r.image_path = "images/" + id + ".ppm";
  r.catalog_id = "c" + id;
  return r;
}

std::vector<ImageBuffer> images_for(const std::vector<ProductRecord>& kept,
                                    const std::map<std::string, ImageBuffer>& by_id) {
  std::vector<ImageBuffer> out;
  for (const auto& r : kept) out.push_back(by_id.at(r.product_id));
  return out;
}

}  // namespace

TEST_CASE("tokenize_title examples") {
  CHECK(tokenize_title("Galaxy watch-4 (40mm)") == std::vector<std::string>{"galaxy", "watch", "4", "40mm"});
  CHECK(tokenize_title("A!!") == std::vector<std::string>{"a"});
  CHECK(tokenize_title("").empty());
  CHECK(tokenize_title("  \t ").empty());
  CHECK(tokenize_title("USB-C__Cable") == std::vector<std::string>{"usb", "c", "cable"});
}

TEST_CASE("validate examples and rule order") {
  const auto ok = record("1", "steel water bottle", "2022-01-01");
  CHECK(validate(ok, std::optional<ImageBuffer>(uniform(200, 200, 9, 9, 9)), 64).keep);

  auto short_title = ok;
  short_title.title = "A!!";
  const auto v1 = validate(short_title, std::optional<ImageBuffer>(uniform(200, 200, 9, 9, 9)), 64);
  CHECK_FALSE(v1.keep);
  CHECK(v1.reason == RejectReason::short_title);

  const auto v2 = validate(ok, std::optional<ImageBuffer>(uniform(32, 500, 9, 9, 9)), 64);
  CHECK(v2.reason == RejectReason::small_image);

  CHECK(validate(ok, std::optional<ImageBuffer>{}, 64).reason == RejectReason::no_image);
  ImageBuffer broken(10, 10);
  broken.pixels.resize(7);
  CHECK(validate(ok, std::optional<ImageBuffer>(broken), 4).reason == RejectReason::corrupt_image);

  auto flagged = ok;
  flagged.flagged = true;
  CHECK(validate(flagged, std::optional<ImageBuffer>(uniform(200, 200, 9, 9, 9)), 64).reason ==
        RejectReason::flagged);
  // Image problems are reported before title problems.
  CHECK(validate(short_title, std::optional<ImageBuffer>{}, 64).reason == RejectReason::no_image);
}

TEST_CASE("patch_hash bit-exact vectors") {
  CHECK(patch_hash(uniform(100, 100, 128, 128, 128)) == std::string(25, '5') + "0101");
  CHECK(patch_hash(uniform(100, 100, 0, 0, 0)) == std::string(25, '0') + "0101");
  CHECK(patch_hash(uniform(100, 100, 255, 255, 255)) == std::string(25, '9') + "0101");
  CHECK(patch_hash(uniform(5, 5, 0, 0, 0)) == std::string(25, '0') + "0000");
  // Gray 25.33 stays at digit 0; 26 reaches digit 1.
  CHECK(patch_hash(uniform(10, 10, 25, 26, 25)).substr(0, 25) == std::string(25, '0'));
  CHECK(patch_hash(uniform(10, 10, 26, 26, 26)).substr(0, 25) == std::string(25, '1'));
  CHECK(patch_hash(uniform(250, 12000, 0, 0, 0)).substr(25) == "0299");
  CHECK(patch_hash(uniform(100, 100, 128, 128, 128)).size() == 29);
}

TEST_CASE("patch_hash matches the reference transcription") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> side(5, 230);
  for (int t = 0; t < 300; ++t) {
    const auto img = noise_image(side(rng), side(rng), rng);
    CHECK(patch_hash(img) == reference_hash(img));
  }
  // Smooth gradients land near bucket edges more often than noise does.
  for (int w : {5, 7, 13, 99, 101, 333}) {
    ImageBuffer img(w, 17);
    for (int y = 0; y < 17; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < 3; ++ch) img.at(x, y)[ch] = static_cast<std::uint8_t>((x * 255) / std::max(1, w - 1));
    CHECK(patch_hash(img) == reference_hash(img));
  }
}

TEST_CASE("patch_hash is invariant to pixel permutation inside a patch") {
  std::mt19937_64 rng(5);
  const auto img = noise_image(53, 41, rng);
  for (int r = 0; r < 5; ++r) {
    const int y0 = r * 41 / 5, y1 = (r + 1) * 41 / 5;
    const int x0 = 2 * 53 / 5, x1 = 3 * 53 / 5;
    std::vector<std::array<std::uint8_t, 3>> px;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) px.push_back({img.at(x, y)[0], img.at(x, y)[1], img.at(x, y)[2]});
    std::shuffle(px.begin(), px.end(), rng);
    auto shuffled = img;
    std::size_t k = 0;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x, ++k)
        for (int ch = 0; ch < 3; ++ch) shuffled.at(x, y)[ch] = px[k][ch];
    CHECK(patch_hash(shuffled) == patch_hash(img));
  }
}

TEST_CASE("patch_hash rejects images smaller than 5x5") {
  CHECK_THROWS_AS(patch_hash(uniform(4, 100, 1, 1, 1)), DegenerateError);
  CHECK_THROWS_AS(patch_hash(uniform(100, 4, 1, 1, 1)), DegenerateError);
}

TEST_CASE("dedup examples") {
  std::mt19937_64 rng(3);
  SUBCASE("identical titles, different images") {
    std::vector<ProductRecord> m{record("1", "Red Mug, large", "2022-01-01"),
                                 record("2", "red mug large", "2022-01-02")};
    std::vector<ImageBuffer> imgs{uniform(50, 50, 10, 10, 10), uniform(50, 50, 200, 200, 200)};
    const auto r = dedup(m, imgs);
    REQUIRE(r.kept.size() == 1);
    CHECK(r.kept[0].product_id == "1");
    CHECK(r.report.removed.at(RejectReason::dup_title) == 1);
    CHECK(r.removed.at(0).product_id == "2");
  }
  SUBCASE("identical images, different titles") {
    const auto img = noise_image(40, 40, rng);
    std::vector<ProductRecord> m{record("1", "blue lamp", "2022-01-02"), record("2", "desk light", "2022-01-01")};
    const auto r = dedup(m, {img, img});
    REQUIRE(r.kept.size() == 1);
    CHECK(r.kept[0].product_id == "2");  // earlier registration survives
    CHECK(r.report.removed.at(RejectReason::dup_hash) == 1);
  }
  SUBCASE("equal registration times break ties by product id") {
    const auto img = noise_image(40, 40, rng);
    std::vector<ProductRecord> m{record("10", "blue lamp", "2022-01-01"), record("9", "desk light", "2022-01-01")};
    const auto r = dedup(m, {img, img});
    REQUIRE(r.kept.size() == 1);
    CHECK(r.kept[0].product_id == "9");
  }
  SUBCASE("no duplicates") {
    std::vector<ProductRecord> m{record("1", "blue lamp", "2022-01-01"), record("2", "desk light", "2022-01-02"),
                                 record("3", "floor rug", "2022-01-03")};
    std::vector<ImageBuffer> imgs{uniform(50, 50, 0, 0, 0), uniform(50, 50, 100, 100, 100),
                                  uniform(50, 50, 250, 250, 250)};
    const auto r = dedup(m, imgs);
    CHECK(r.kept == m);
    CHECK(r.report.removed_total() == 0);
    CHECK(r.report.kept == 3);
  }
  SUBCASE("equal embeddings with different hashes") {
    // Same gray means, different size buckets.
    std::vector<ProductRecord> m{record("1", "blue lamp", "2022-01-01"), record("2", "desk light", "2022-01-02")};
    const auto r = dedup(m, {uniform(50, 50, 90, 90, 90), uniform(150, 50, 90, 90, 90)});
    CHECK(r.report.removed.at(RejectReason::dup_embedding) == 1);
  }
  SUBCASE("catalog dedup") {
    std::vector<ProductRecord> m{record("1", "blue lamp", "2022-01-01"), record("2", "desk light", "2022-01-02")};
    m[1].catalog_id = m[0].catalog_id;
    DedupOptions opt;
    opt.catalog_dedup = true;
    const auto r = dedup(m, {uniform(50, 50, 0, 0, 0), uniform(50, 50, 200, 200, 200)}, opt);
    CHECK(r.report.removed.at(RejectReason::dup_catalog) == 1);
    CHECK(dedup(m, {uniform(50, 50, 0, 0, 0), uniform(50, 50, 200, 200, 200)}).kept.size() == 2);
  }
  SUBCASE("misaligned images") {
    std::vector<ProductRecord> m{record("1", "blue lamp", "2022-01-01")};
    CHECK_THROWS_AS(dedup(m, {}), DimensionError);
  }
}

TEST_CASE("dedup benchmark removes exactly the injected duplicates") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto bench = generate_dedup_benchmark(1000, 0.1, seed);
    REQUIRE(bench.records.size() == 1000);
    REQUIRE(bench.injected.size() == 100);
    const auto r = dedup(bench.records, bench.images);
    std::set<std::string> removed;
    for (const auto& x : r.removed) removed.insert(x.product_id);
    CHECK(removed == bench.injected);
    CHECK(r.report.removed_total() + r.report.kept == r.report.input);

    std::map<std::string, ImageBuffer> by_id;
    for (std::size_t i = 0; i < bench.records.size(); ++i) by_id[bench.records[i].product_id] = bench.images[i];
    const auto again = dedup(r.kept, images_for(r.kept, by_id));
    CHECK(again.kept == r.kept);
    CHECK(again.report.removed_total() == 0);
  }
}

TEST_CASE("dedup is idempotent on random manifests") {
  std::mt19937_64 rng(77);
  const std::vector<std::string> words{"red", "mug", "lamp", "desk", "blue"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ProductRecord> m;
    std::vector<ImageBuffer> imgs;
    std::map<std::string, ImageBuffer> by_id;
    std::uniform_int_distribution<std::size_t> w(0, words.size() - 1);
    std::uniform_int_distribution<int> palette(0, 3);
    for (int i = 0; i < 40; ++i) {
      const auto id = std::to_string(i);
      m.push_back(record(id, words[w(rng)] + " " + words[w(rng)], "2022-01-" + std::to_string(10 + i % 7)));
      const auto v = static_cast<std::uint8_t>(60 * palette(rng));
      imgs.push_back(uniform(20, 20, v, v, v));
      by_id[id] = imgs.back();
    }
    const auto once = dedup(m, imgs);
    const auto twice = dedup(once.kept, images_for(once.kept, by_id));
    CHECK(twice.kept == once.kept);
    std::size_t sum = 0;
    for (const auto& [reason, n] : once.report.removed) sum += n;
    CHECK(sum == once.removed.size());
    CHECK(once.report.kept + sum == m.size());
  }
}

TEST_CASE("preprocess pipeline counts validation and dedup removals") {
  std::vector<ProductRecord> m{record("1", "blue lamp", "2022-01-01"), record("2", "blue lamp", "2022-01-02"),
                               record("3", "x", "2022-01-03"), record("4", "tiny photo", "2022-01-04"),
                               record("5", "lost image", "2022-01-05")};
  std::map<std::string, ImageLoad> loads;
  loads["1"] = {ImageStatus::ok, uniform(40, 40, 0, 0, 0)};
  loads["2"] = {ImageStatus::ok, uniform(40, 40, 90, 90, 90)};
  loads["3"] = {ImageStatus::ok, uniform(40, 40, 180, 180, 180)};
  loads["4"] = {ImageStatus::ok, uniform(6, 40, 250, 250, 250)};
  loads["5"] = {ImageStatus::missing, {}};
  const auto r = preprocess(m, [&](const ProductRecord& rec) { return loads.at(rec.product_id); }, 8);
  CHECK(r.kept.size() == 1);
  CHECK(r.report.input == 5);
  CHECK(r.report.removed.at(RejectReason::dup_title) == 1);
  CHECK(r.report.removed.at(RejectReason::short_title) == 1);
  CHECK(r.report.removed.at(RejectReason::small_image) == 1);
  CHECK(r.report.removed.at(RejectReason::no_image) == 1);
  CHECK(r.report.kept + r.report.removed_total() == r.report.input);
  const auto json = r.report.to_json();
  CHECK(json.find("\"dup-title\": 1") != std::string::npos);
}

TEST_CASE("manifest and pixmap round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "eclip_test_preprocess";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto a = record("17", "Galaxy \"watch\" 4", "2022-03-04T05:06:07Z");
  a.brand_name = "Acme";
  a.maker_name = "Acme Works";
  a.mall_name = "mall";
  a.mall_category = "wearables";
  a.price = 129000;
  a.popularity = 0.25;
  a.product_category = {"digital", "wearable", "watch"};
  a.flagged = true;
  auto b = record("18", "plain mug", "2022-03-05");
  write_manifest(dir / "m.jsonl", {a, b});
  const auto back = read_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0] == a);
  CHECK(back[1] == b);
  CHECK(parse_record(to_json_line(a)) == a);
  CHECK(join_category(split_category("a>b>c")) == "a>b>c");

  std::mt19937_64 rng(2);
  const auto img = noise_image(13, 7, rng);
  write_ppm(dir / "x.ppm", img);
  const auto load = read_ppm(dir / "x.ppm");
  CHECK(load.status == ImageStatus::ok);
  CHECK(load.image == img);
  CHECK(read_ppm(dir / "missing.ppm").status == ImageStatus::missing);
  {
    std::ofstream f(dir / "bad.ppm", std::ios::binary);
    f << "P6\n13 7\n255\nshort";
  }
  CHECK(read_ppm(dir / "bad.ppm").status == ImageStatus::corrupt);
  std::filesystem::remove_all(dir);
}

TEST_CASE("feature extractors") {
  const auto img = uniform(16, 16, 255, 0, 51);
  const Vec f = image_features(img, 4);
  REQUIRE(f.size() == 48);
  for (Eigen::Index i = 0; i < 16; ++i) {
    CHECK(f(3 * i) == doctest::Approx(1.0));
    CHECK(f(3 * i + 1) == doctest::Approx(0.0));
    CHECK(f(3 * i + 2) == doctest::Approx(0.2));
  }
  const Vec t = title_features({"red", "mug"}, 32);
  CHECK(t.norm() == doctest::Approx(1.0));
  CHECK(title_features({}, 32).isZero());
  CHECK(title_features({"red", "mug"}, 32) == t);
}
