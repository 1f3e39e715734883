#pragma once

// Catalog cleaning: validity rules, title/pixel/embedding de-duplication,
// manifest and pixmap I/O, and the feature extractors that feed the encoders.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eclip/batch.hpp"
#include "eclip/tensor.hpp"

namespace eclip {

struct ProductRecord {
  std::string product_id;
  std::string title;
  std::string brand_name;
  std::string maker_name;
  std::string mall_name;
  std::string mall_category;
  std::int64_t price = 0;
  std::string registration_time;  // ISO-8601, compared lexicographically
  double popularity = 0;
  std::string image_path;  // relative paths resolve against the manifest directory
  CategoryPath product_category;
  std::string catalog_id;
  bool flagged = false;  // moderation (adult/promotional) flag

  bool operator==(const ProductRecord&) const = default;
};

/// One JSON object per line; product_category is written as "a>b>c".
ProductRecord parse_record(std::string_view json_line);
std::string to_json_line(const ProductRecord& record);
std::vector<ProductRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ProductRecord>& records);

CategoryPath split_category(std::string_view joined);
std::string join_category(const CategoryPath& path);

struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB, 3 bytes per pixel

  ImageBuffer() = default;
  ImageBuffer(int w, int h, std::uint8_t fill = 0);

  std::uint8_t* at(int x, int y) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  bool operator==(const ImageBuffer&) const = default;
};

enum class ImageStatus { ok, missing, corrupt };

struct ImageLoad {
  ImageStatus status = ImageStatus::missing;
  ImageBuffer image;
};

/// Binary P6 pixmap with maxval 255.
ImageLoad read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& image);

/// Non-alphanumeric code points become spaces, ASCII is lowercased, and the
/// result is split on whitespace.
std::vector<std::string> tokenize_title(std::string_view title);

enum class RejectReason {
  none,
  no_image,
  small_image,
  corrupt_image,
  short_title,
  flagged,
  dup_title,
  dup_hash,
  dup_embedding,
  dup_catalog,
};

std::string to_string(RejectReason r);

struct Validation {
  bool keep = true;
  RejectReason reason = RejectReason::none;
};

Validation validate(const ProductRecord& record, const ImageLoad& image, int min_side);
Validation validate(const ProductRecord& record, const std::optional<ImageBuffer>& image,
                    int min_side);

/// 29 decimal digits: one gray-level digit per cell of a 5×5 grid
/// (min(9, ⌊mean((R+G+B)/3)/25.6⌋), row-major) followed by the zero-padded
/// width and height buckets min(99, ⌊side/100⌋).
std::string patch_hash(const ImageBuffer& image);

/// Mean gray level of each 5×5 grid cell, row-major. Default dedup embedder.
Vec patch_gray_means(const ImageBuffer& image);

using Embedder = std::function<Vec(const ImageBuffer&)>;

struct DedupReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::map<RejectReason, std::size_t> removed;

  std::size_t removed_total() const;
  std::string to_json() const;
};

struct DedupOptions {
  Embedder embedder;          // empty → patch_gray_means
  bool catalog_dedup = false; // keep one record per catalog_id
};

struct RemovedRecord {
  std::string product_id;
  RejectReason reason;
};

struct DedupResult {
  std::vector<ProductRecord> kept;  // input order
  DedupReport report;
  std::vector<RemovedRecord> removed;
};

/// Sequential passes over records ranked by (registration_time, product_id):
/// duplicate token sequence, duplicate patch hash, duplicate embedding
/// rounded to three decimals, then optionally duplicate catalog id. The
/// first record in rank order survives. `images` is aligned with `manifest`.
DedupResult dedup(const std::vector<ProductRecord>& manifest,
                  const std::vector<ImageBuffer>& images, const DedupOptions& options = {});

struct PipelineResult {
  std::vector<ProductRecord> kept;
  DedupReport report;
  std::vector<RemovedRecord> removed;
};

/// Validation followed by dedup. Images are read through `load`.
PipelineResult preprocess(const std::vector<ProductRecord>& manifest,
                          const std::function<ImageLoad(const ProductRecord&)>& load, int min_side,
                          const DedupOptions& options = {});

/// Encoder input for images: per-channel block means on a grid×grid
/// lattice, scaled to [0, 1], laid out row-major as (y, x, channel).
Vec image_features(const ImageBuffer& image, int grid);

/// Encoder input for titles: signed feature hashing of tokens into `dim`
/// buckets, L2-normalized (zero vector for an empty title).
Vec title_features(const std::vector<std::string>& tokens, Eigen::Index dim);

}  // namespace eclip
