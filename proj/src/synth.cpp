#include "eclip/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "eclip/dataset.hpp"
#include "json.hpp"

namespace eclip {

namespace {

constexpr std::array<const char*, 4> kPaletteNames = {"red", "blue", "green", "amber"};
constexpr std::array<const char*, 4> kPatternNames = {"stripe", "column", "checker", "diagonal"};
// Foreground / background colours per palette.
constexpr std::array<std::array<std::array<int, 3>, 2>, 4> kPalettes = {{
    {{{220, 40, 40}, {40, 20, 20}}},
    {{{40, 60, 220}, {230, 230, 240}}},
    {{{40, 200, 60}, {20, 40, 20}}},
    {{{240, 180, 30}, {90, 60, 120}}},
}};

constexpr std::array<const char*, 16> kWords = {
    "classic", "premium", "lite", "pro", "mini", "max", "eco", "smart",
    "slim", "basic", "deluxe", "sport", "home", "travel", "kids", "plus"};

std::string registration_time(std::size_t i) {
  const std::size_t day = 1 + i / 86400, sec = i % 86400;
  char buf[32];
  std::snprintf(buf, sizeof buf, "2022-01-%02zuT%02zu:%02zu:%02zuZ", std::min<std::size_t>(day, 28),
                sec / 3600, (sec / 60) % 60, sec % 60);
  return buf;
}

std::string padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Class pattern value in [0, 1] at pixel (x, y); `phase` shifts it.
double pattern_value(std::size_t cls, int x, int y, int size, double phase) {
  const int kind = static_cast<int>(cls % 4);
  const double freq = 1.0 + static_cast<double>((cls / 4) % 4);
  const double u = (x + 0.5) / size, v = (y + 0.5) / size;
  constexpr double two_pi = 6.283185307179586;
  switch (kind) {
    case 0: return 0.5 + 0.5 * std::sin(two_pi * (freq * v + phase));
    case 1: return 0.5 + 0.5 * std::sin(two_pi * (freq * u + phase));
    case 2: return 0.5 + 0.5 * std::sin(two_pi * (freq * u + phase)) * std::sin(two_pi * (freq * v + phase));
    default: return 0.5 + 0.5 * std::sin(two_pi * (freq * (u + v) / 1.4142 + phase));
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (n_classes < 1 || n_catalogs_per_class < 1 || n_duplicates_per_catalog < 1 || text_dim < 1) {
    throw ParameterError("synth: counts must be >= 1");
  }
  if (image_size < 5) throw ParameterError("synth: image_size must be >= 5");
  if (!(noise_sigma >= 0) || !(catalog_spread >= 0)) throw ParameterError("synth: sigma must be >= 0");
  if (category_depth < 1 || category_depth > 4) throw ParameterError("synth: category_depth must be in [1, 4]");
}

SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<Real> normal(0.0, 1.0);
  SynthDataset out;

  // Class prototypes with pairwise cosine below 0.5 (rejection sampling).
  const std::size_t palettes = std::min<std::size_t>(4, (spec.n_classes + 15) / 16);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    ClassInfo info;
    Vec proto(spec.text_dim);
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      for (Eigen::Index i = 0; i < proto.size(); ++i) proto(i) = normal(rng);
      ok = true;
      for (const auto& prev : out.classes) {
        if (proto.dot(prev.prototype) / (proto.norm() * prev.prototype.norm()) >= 0.5) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) {
      throw DegenerateError("synth: cannot place " + std::to_string(spec.n_classes) +
                            " prototypes with pairwise cosine < 0.5 in " + std::to_string(spec.text_dim) +
                            " dimensions");
    }
    info.prototype = proto;
    info.name = "class" + padded(c, 3);
    for (std::size_t level = 0; level + 1 < spec.category_depth; ++level) {
      const std::size_t levels_below = spec.category_depth - 1 - level;
      const std::size_t divisor = static_cast<std::size_t>(std::pow(4, levels_below));
      info.path.push_back("L" + std::to_string(level) + "-" + padded(c / divisor, 3));
    }
    info.path.push_back(info.name);
    info.attribute = static_cast<Label>((c / 16) % palettes);
    info.adult = c % 8 == 3;
    out.classes.push_back(std::move(info));
  }
  out.attribute_prompts.assign(palettes, Vec::Zero(spec.text_dim));
  std::vector<Real> per_palette(palettes, 0);
  for (const auto& cls : out.classes) {
    out.attribute_prompts[static_cast<std::size_t>(cls.attribute)] += cls.prototype;
    per_palette[static_cast<std::size_t>(cls.attribute)] += 1;
  }
  for (std::size_t p = 0; p < palettes; ++p) out.attribute_prompts[p] /= per_palette[p];

  const std::size_t total = spec.n_classes * spec.n_catalogs_per_class * spec.n_duplicates_per_catalog;
  out.text.resize(static_cast<Eigen::Index>(total), spec.text_dim);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> word(0, kWords.size() - 1);

  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const auto& cls = out.classes[c];
    const auto& palette = kPalettes[static_cast<std::size_t>(cls.attribute)];
    for (std::size_t k = 0; k < spec.n_catalogs_per_class; ++k) {
      Vec centre = cls.prototype;
      for (Eigen::Index i = 0; i < centre.size(); ++i) centre(i) += spec.catalog_spread * normal(rng);
      const double phase = 0.25 * unit(rng);
      std::array<double, 3> tint{};
      for (auto& t : tint) t = 40.0 * spec.catalog_spread * (2.0 * unit(rng) - 1.0);
      const std::string catalog = "c" + padded(c, 3) + "-k" + padded(k, 3);
      const std::string descriptor = std::string(kWords[word(rng)]) + " " + kWords[word(rng)];

      for (std::size_t d = 0; d < spec.n_duplicates_per_catalog; ++d, ++row) {
        ProductRecord rec;
        rec.product_id = "p" + padded(row, 6);
        rec.title = std::string(kPaletteNames[static_cast<std::size_t>(cls.attribute)]) + " " +
                    kPatternNames[c % 4] + " " + descriptor + " " + catalog + " " + rec.product_id;
        rec.brand_name = "brand" + padded(c, 3);
        rec.maker_name = "maker" + padded(c % 7, 2);
        rec.mall_name = "mall" + padded((row * 7919) % 13, 2);
        rec.mall_category = cls.path.front();
        rec.price = static_cast<std::int64_t>(1000 + 10 * (c * 37 + k * 11) % 5000);
        rec.registration_time = registration_time(row);
        rec.popularity = std::round(1000.0 * unit(rng)) / 1000.0;
        rec.image_path = "images/" + rec.product_id + ".ppm";
        rec.product_category = cls.path;
        rec.catalog_id = catalog;
        out.records.push_back(std::move(rec));

        for (Eigen::Index i = 0; i < spec.text_dim; ++i) {
          out.text(static_cast<Eigen::Index>(row), i) = centre(i) + spec.noise_sigma * normal(rng);
        }

        ImageBuffer img(spec.image_size, spec.image_size);
        for (int y = 0; y < spec.image_size; ++y) {
          for (int x = 0; x < spec.image_size; ++x) {
            const double w = pattern_value(c, x, y, spec.image_size, phase);
            auto* px = img.at(x, y);
            for (int ch = 0; ch < 3; ++ch) {
              const double base = w * palette[0][ch] + (1.0 - w) * palette[1][ch] + tint[ch];
              const double noisy = spec.noise_sigma > 0 ? base + 255.0 * spec.noise_sigma * normal(rng) : base;
              px[ch] = to_byte(noisy);
            }
          }
        }
        out.images.push_back(std::move(img));
        out.class_of.push_back(static_cast<Label>(c));
      }
    }
  }
  return out;
}

TrainingSet to_training_set(const SynthDataset& data, const std::vector<std::size_t>& rows, int grid) {
  TrainingSet set;
  set.text.resize(static_cast<Eigen::Index>(rows.size()), data.text.cols());
  set.image.resize(static_cast<Eigen::Index>(rows.size()), 3 * grid * grid);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    set.text.row(static_cast<Eigen::Index>(i)) = data.text.row(static_cast<Eigen::Index>(r));
    set.image.row(static_cast<Eigen::Index>(i)) = image_features(data.images.at(r), grid).transpose();
    set.catalog.push_back(catalog_key(data.records.at(r).catalog_id));
    set.categories.push_back(data.records.at(r).product_category);
  }
  return set;
}

bool is_holdout_catalog(const std::string& catalog_id, Real fraction) {
  const auto h = static_cast<std::uint64_t>(catalog_key(catalog_id));
  return static_cast<Real>(h % 10000) < fraction * 10000.0;
}

DedupBenchmark generate_dedup_benchmark(std::size_t total, Real dup_fraction, std::uint64_t seed,
                                        int image_size) {
  if (!(dup_fraction >= 0 && dup_fraction < 1)) throw ParameterError("dup_fraction must be in [0, 1)");
  const auto dups = static_cast<std::size_t>(std::llround(static_cast<double>(total) * dup_fraction));
  const std::size_t base = total - dups;
  if (base == 0 && dups > 0) throw ParameterError("dedup benchmark needs at least one original");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 255);
  std::uniform_int_distribution<std::size_t> word(0, kWords.size() - 1);

  // Random per-cell colours; distinct patch hashes among originals.
  std::set<std::string> hashes;
  auto random_image = [&]() {
    for (;;) {
      ImageBuffer img(image_size, image_size);
      std::array<std::array<int, 3>, 25> cells{};
      for (auto& cell : cells)
        for (auto& ch : cell) ch = level(rng);
      for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x) {
          const int r = std::min(4, y * 5 / image_size), c = std::min(4, x * 5 / image_size);
          for (int ch = 0; ch < 3; ++ch) img.at(x, y)[ch] = static_cast<std::uint8_t>(cells[r * 5 + c][ch]);
        }
      if (hashes.insert(patch_hash(img)).second) return img;
    }
  };

  DedupBenchmark out;
  for (std::size_t i = 0; i < base; ++i) {
    ProductRecord rec;
    rec.product_id = "d" + padded(i, 6);
    rec.title = std::string(kWords[word(rng)]) + " item" + padded(i, 6) + " " + kWords[word(rng)];
    rec.registration_time = registration_time(i);
    rec.image_path = "images/" + rec.product_id + ".ppm";
    rec.catalog_id = "cat" + padded(i, 6);
    rec.product_category = {"bench"};
    out.records.push_back(std::move(rec));
    out.images.push_back(random_image());
  }
  std::uniform_int_distribution<std::size_t> original(0, base == 0 ? 0 : base - 1);
  for (std::size_t j = 0; j < dups; ++j) {
    const std::size_t src = original(rng);
    ProductRecord rec;
    rec.product_id = "d" + padded(base + j, 6);
    rec.registration_time = registration_time(base + j);
    rec.image_path = "images/" + rec.product_id + ".ppm";
    rec.catalog_id = "cat" + padded(base + j, 6);
    rec.product_category = {"bench"};
    if (j % 2 == 0) {
      rec.title = out.records[src].title;
      out.images.push_back(random_image());
    } else {
      rec.title = "relisted item" + padded(base + j, 6) + " " + kWords[word(rng)];
      out.images.push_back(out.images[src]);
    }
    out.injected.insert(rec.product_id);
    out.records.push_back(std::move(rec));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SynthDataset& data) {
  std::filesystem::create_directories(dir / "images");
  write_manifest(dir / "manifest.jsonl", data.records);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    write_ppm(dir / data.records[i].image_path, data.images[i]);
  }
  TextFeatureTable table;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    table.emplace(data.records[i].product_id, data.text.row(static_cast<Eigen::Index>(i)).transpose());
  }
  write_text_features(dir / "text_features.jsonl", data.records, table);

  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < data.classes.size(); ++c) {
    const auto& cls = data.classes[c];
    nlohmann::ordered_json j;
    j["label"] = c;
    j["name"] = cls.name;
    j["path"] = join_category(cls.path);
    j["attribute"] = cls.attribute;
    j["adult"] = cls.adult;
    j["prompt"] = std::vector<Real>(cls.prototype.data(), cls.prototype.data() + cls.prototype.size());
    classes.push_back(std::move(j));
  }
  nlohmann::ordered_json attrs = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < data.attribute_prompts.size(); ++a) {
    nlohmann::ordered_json j;
    j["value"] = a;
    j["name"] = kPaletteNames[a];
    const auto& p = data.attribute_prompts[a];
    j["prompt"] = std::vector<Real>(p.data(), p.data() + p.size());
    attrs.push_back(std::move(j));
  }
  nlohmann::ordered_json root;
  root["classes"] = std::move(classes);
  root["attributes"] = std::move(attrs);
  std::ofstream out(dir / "classes.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "classes.json").string());
  out << root.dump(1) << '\n';
}

}  // namespace eclip
