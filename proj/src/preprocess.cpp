#include "eclip/preprocess.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace eclip {

namespace {

using json = nlohmann::json;

template <typename T>
T optional_field(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

std::string id_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  return it->dump();
}

// Decodes one UTF-8 code point; malformed bytes decode as U+FFFD.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = (b0 & 0xE0) == 0xC0 ? 2 : (b0 & 0xF0) == 0xE0 ? 3 : (b0 & 0xF8) == 0xF0 ? 4 : 0;
  if (len == 0) {
    ++i;
    return 0xFFFD;
  }
  char32_t cp = b0 & (0x7F >> len);
  for (int k = 1; k < len; ++k) {
    const int c = cont(k);
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += len;
  return cp;
}

// Letters and digits. Outside ASCII everything counts as alphanumeric except
// Latin-1 symbols, the general/CJK punctuation blocks, the replacement
// character and fullwidth ASCII punctuation.
bool is_alnum(char32_t cp) {
  if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0;
  if (cp < 0xC0) return cp == 0xAA || cp == 0xB2 || cp == 0xB3 || cp == 0xB5 || cp == 0xB9 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols, arrows, shapes
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFF01 && cp <= 0xFF0F) return false;
  if (cp >= 0xFF1A && cp <= 0xFF20) return false;
  if (cp >= 0xFF3B && cp <= 0xFF40) return false;
  if (cp >= 0xFF5B && cp <= 0xFF65) return false;
  if (cp == 0xFFFD || cp == 0xFEFF) return false;
  return true;
}

bool numeric_id(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// Rank order for duplicate resolution.
bool earlier(const ProductRecord& a, const ProductRecord& b) {
  if (a.registration_time != b.registration_time) return a.registration_time < b.registration_time;
  std::int64_t ia = 0, ib = 0;
  if (numeric_id(a.product_id, ia) && numeric_id(b.product_id, ib)) return ia < ib;
  return a.product_id < b.product_id;
}

std::string token_key(const std::vector<std::string>& tokens) {
  std::string k;
  for (const auto& t : tokens) {
    k += t;
    k += '\x1f';
  }
  return k;
}

std::string embedding_key(const Vec& v) {
  std::string k;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    k += std::to_string(std::llround(v(i) * 1000.0));
    k += ',';
  }
  return k;
}

// Cell bounds ⌊r·side/5⌋ .. ⌊(r+1)·side/5⌋ − 1.
int cell_start(int index, int side) { return index * side / 5; }

void check_hashable(const ImageBuffer& image) {
  if (image.width < 5 || image.height < 5) {
    throw DegenerateError("image " + std::to_string(image.width) + "x" +
                          std::to_string(image.height) + " is smaller than 5x5");
  }
  if (image.pixels.size() != 3 * static_cast<std::size_t>(image.width) * image.height) {
    throw DimensionError("image pixel buffer does not match its dimensions");
  }
}

}  // namespace

ImageBuffer::ImageBuffer(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(3 * static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0), fill) {}

CategoryPath split_category(std::string_view joined) {
  CategoryPath path;
  std::size_t start = 0;
  while (start <= joined.size()) {
    const auto end = joined.find('>', start);
    auto part = joined.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    if (!part.empty()) path.emplace_back(part);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return path;
}

std::string join_category(const CategoryPath& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += '>';
    out += path[i];
  }
  return out;
}

ProductRecord parse_record(std::string_view json_line) {
  const json j = json::parse(json_line);
  if (!j.is_object()) throw std::runtime_error("manifest line is not a JSON object");
  ProductRecord r;
  r.product_id = id_field(j, "product_id");
  if (r.product_id.empty()) throw std::runtime_error("manifest record without product_id");
  r.title = optional_field<std::string>(j, "title", "");
  r.brand_name = optional_field<std::string>(j, "brand_name", "");
  r.maker_name = optional_field<std::string>(j, "maker_name", "");
  r.mall_name = optional_field<std::string>(j, "mall_name", "");
  r.mall_category = optional_field<std::string>(j, "mall_category", "");
  r.price = optional_field<std::int64_t>(j, "price", 0);
  r.registration_time = optional_field<std::string>(j, "registration_time", "");
  r.popularity = optional_field<double>(j, "popularity", 0.0);
  r.image_path = optional_field<std::string>(j, "image_path", "");
  if (auto it = j.find("product_category"); it != j.end() && !it->is_null()) {
    r.product_category =
        it->is_array() ? it->get<CategoryPath>() : split_category(it->get<std::string>());
  }
  if (r.product_category.size() > 4) {
    throw std::runtime_error("product " + r.product_id + " has more than four category levels");
  }
  r.catalog_id = id_field(j, "catalog_id");
  r.flagged = optional_field<bool>(j, "flagged", false);
  return r;
}

std::string to_json_line(const ProductRecord& r) {
  nlohmann::ordered_json j;
  j["product_id"] = r.product_id;
  j["title"] = r.title;
  j["brand_name"] = r.brand_name;
  j["maker_name"] = r.maker_name;
  j["mall_name"] = r.mall_name;
  j["mall_category"] = r.mall_category;
  j["price"] = r.price;
  j["registration_time"] = r.registration_time;
  j["popularity"] = r.popularity;
  j["image_path"] = r.image_path;
  j["product_category"] = join_category(r.product_category);
  j["catalog_id"] = r.catalog_id;
  j["flagged"] = r.flagged;
  return j.dump();
}

std::vector<ProductRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  std::vector<ProductRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(out.back().product_id).second) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": duplicate product_id " + out.back().product_id);
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ProductRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

ImageLoad read_ppm(const std::filesystem::path& path) {
  ImageLoad load;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    load.status = ImageStatus::missing;
    return load;
  }
  load.status = ImageStatus::corrupt;
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  if (next_token() != "P6") return load;
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    return load;
  }
  if (w < 1 || h < 1 || maxval != 255 || w > 1 << 15 || h > 1 << 15) return load;
  ImageBuffer img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) return load;
  load.status = ImageStatus::ok;
  load.image = std::move(img);
  return load;
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

std::vector<std::string> tokenize_title(std::string_view title) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < title.size()) {
    const std::size_t begin = i;
    const char32_t cp = next_code_point(title, i);
    if (!is_alnum(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (cp < 0x80) {
      current.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
    } else {
      current.append(title.substr(begin, i - begin));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::none: return "none";
    case RejectReason::no_image: return "no-image";
    case RejectReason::small_image: return "small-image";
    case RejectReason::corrupt_image: return "corrupt";
    case RejectReason::short_title: return "short-title";
    case RejectReason::flagged: return "flagged";
    case RejectReason::dup_title: return "dup-title";
    case RejectReason::dup_hash: return "dup-hash";
    case RejectReason::dup_embedding: return "dup-embedding";
    case RejectReason::dup_catalog: return "dup-catalog";
  }
  return "unknown";
}

Validation validate(const ProductRecord& record, const ImageLoad& image, int min_side) {
  auto reject = [](RejectReason r) { return Validation{false, r}; };
  if (image.status == ImageStatus::missing) return reject(RejectReason::no_image);
  if (image.status == ImageStatus::corrupt) return reject(RejectReason::corrupt_image);
  if (std::min(image.image.width, image.image.height) < min_side) {
    return reject(RejectReason::small_image);
  }
  if (tokenize_title(record.title).size() < 2) return reject(RejectReason::short_title);
  if (record.flagged) return reject(RejectReason::flagged);
  return {};
}

Validation validate(const ProductRecord& record, const std::optional<ImageBuffer>& image,
                    int min_side) {
  ImageLoad load;
  if (image) {
    const bool intact = image->width >= 1 && image->height >= 1 &&
                        image->pixels.size() == 3 * static_cast<std::size_t>(image->width) * image->height;
    load.status = intact ? ImageStatus::ok : ImageStatus::corrupt;
    load.image = *image;
  }
  return validate(record, load, min_side);
}

namespace {

struct CellSum {
  std::uint64_t sum = 0;    // R+G+B over the cell
  std::uint64_t count = 0;  // pixels in the cell
};

std::array<CellSum, 25> cell_sums(const ImageBuffer& image) {
  check_hashable(image);
  std::array<CellSum, 25> cells{};
  for (int r = 0; r < 5; ++r) {
    const int y0 = cell_start(r, image.height), y1 = cell_start(r + 1, image.height);
    for (int c = 0; c < 5; ++c) {
      const int x0 = cell_start(c, image.width), x1 = cell_start(c + 1, image.width);
      auto& cell = cells[static_cast<std::size_t>(r * 5 + c)];
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const auto* p = image.at(x, y);
          cell.sum += static_cast<std::uint64_t>(p[0]) + p[1] + p[2];
        }
      cell.count = static_cast<std::uint64_t>(y1 - y0) * static_cast<std::uint64_t>(x1 - x0);
    }
  }
  return cells;
}

}  // namespace

Vec patch_gray_means(const ImageBuffer& image) {
  const auto cells = cell_sums(image);
  Vec means(25);
  for (std::size_t i = 0; i < 25; ++i) {
    means(static_cast<Eigen::Index>(i)) =
        static_cast<double>(cells[i].sum) / (3.0 * static_cast<double>(cells[i].count));
  }
  return means;
}

std::string patch_hash(const ImageBuffer& image) {
  const auto cells = cell_sums(image);
  std::string hash;
  hash.reserve(29);
  // ⌊g/25.6⌋ with g = sum/(3·count), evaluated exactly as ⌊10·sum/(768·count)⌋.
  for (const auto& cell : cells) {
    const auto digit = std::min<std::uint64_t>(9, (10 * cell.sum) / (768 * cell.count));
    hash.push_back(static_cast<char>('0' + digit));
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02d%02d", std::min(99, image.width / 100),
                std::min(99, image.height / 100));
  hash += buf;
  return hash;
}

std::size_t DedupReport::removed_total() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : removed) n += count;
  return n;
}

std::string DedupReport::to_json() const {
  nlohmann::ordered_json j;
  j["input"] = input;
  j["kept"] = kept;
  j["removed"] = removed_total();
  nlohmann::ordered_json reasons;
  for (auto r : {RejectReason::no_image, RejectReason::small_image, RejectReason::corrupt_image,
                 RejectReason::short_title, RejectReason::flagged, RejectReason::dup_title,
                 RejectReason::dup_hash, RejectReason::dup_embedding, RejectReason::dup_catalog}) {
    auto it = removed.find(r);
    reasons[to_string(r)] = it == removed.end() ? 0 : it->second;
  }
  j["by_reason"] = std::move(reasons);
  return j.dump(2);
}

DedupResult dedup(const std::vector<ProductRecord>& manifest,
                  const std::vector<ImageBuffer>& images, const DedupOptions& options) {
  if (images.size() != manifest.size()) {
    throw DimensionError("dedup: " + std::to_string(images.size()) + " images for " +
                         std::to_string(manifest.size()) + " records");
  }
  const Embedder embed = options.embedder ? options.embedder : Embedder(patch_gray_means);

  std::vector<std::size_t> order(manifest.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return earlier(manifest[a], manifest[b]); });

  std::vector<RejectReason> verdict(manifest.size(), RejectReason::none);
  auto pass = [&](RejectReason reason, auto&& key_of) {
    std::set<std::string> seen;
    for (auto i : order) {
      if (verdict[i] != RejectReason::none) continue;
      if (!seen.insert(key_of(i)).second) verdict[i] = reason;
    }
  };
  pass(RejectReason::dup_title, [&](std::size_t i) { return token_key(tokenize_title(manifest[i].title)); });
  pass(RejectReason::dup_hash, [&](std::size_t i) { return patch_hash(images[i]); });
  pass(RejectReason::dup_embedding, [&](std::size_t i) { return embedding_key(embed(images[i])); });
  if (options.catalog_dedup) {
    pass(RejectReason::dup_catalog, [&](std::size_t i) { return manifest[i].catalog_id; });
  }

  DedupResult result;
  result.report.input = manifest.size();
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (verdict[i] == RejectReason::none) {
      result.kept.push_back(manifest[i]);
    } else {
      ++result.report.removed[verdict[i]];
      result.removed.push_back({manifest[i].product_id, verdict[i]});
    }
  }
  result.report.kept = result.kept.size();
  return result;
}

PipelineResult preprocess(const std::vector<ProductRecord>& manifest,
                          const std::function<ImageLoad(const ProductRecord&)>& load, int min_side,
                          const DedupOptions& options) {
  PipelineResult out;
  std::vector<ProductRecord> valid;
  std::vector<ImageBuffer> images;
  std::map<RejectReason, std::size_t> rejected;
  for (const auto& record : manifest) {
    ImageLoad img = load(record);
    const auto v = validate(record, img, min_side);
    if (!v.keep) {
      ++rejected[v.reason];
      out.removed.push_back({record.product_id, v.reason});
      continue;
    }
    valid.push_back(record);
    images.push_back(std::move(img.image));
  }
  auto d = dedup(valid, images, options);
  out.kept = std::move(d.kept);
  out.report = std::move(d.report);
  out.report.input = manifest.size();
  for (const auto& [reason, count] : rejected) out.report.removed[reason] += count;
  out.removed.insert(out.removed.end(), d.removed.begin(), d.removed.end());
  return out;
}

Vec image_features(const ImageBuffer& image, int grid) {
  if (grid < 1 || image.width < grid || image.height < grid) {
    throw DegenerateError("image_features: image smaller than the feature grid");
  }
  Vec f(3 * grid * grid);
  for (int gy = 0; gy < grid; ++gy) {
    const int y0 = gy * image.height / grid, y1 = (gy + 1) * image.height / grid;
    for (int gx = 0; gx < grid; ++gx) {
      const int x0 = gx * image.width / grid, x1 = (gx + 1) * image.width / grid;
      double sum[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int ch = 0; ch < 3; ++ch) sum[ch] += image.at(x, y)[ch];
      const double count = static_cast<double>(y1 - y0) * (x1 - x0) * 255.0;
      for (int ch = 0; ch < 3; ++ch) f(3 * (gy * grid + gx) + ch) = sum[ch] / count;
    }
  }
  return f;
}

Vec title_features(const std::vector<std::string>& tokens, Eigen::Index dim) {
  if (dim < 1) throw ParameterError("title_features: dim must be >= 1");
  Vec f = Vec::Zero(dim);
  for (const auto& t : tokens) {
    // FNV-1a, 64-bit.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim));
    f(bucket) += (h >> 63) ? -1.0 : 1.0;
  }
  const double n = f.norm();
  if (n > 0) f /= n;
  return f;
}

}  // namespace eclip
