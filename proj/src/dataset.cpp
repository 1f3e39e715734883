#include "eclip/dataset.hpp"

#include <fstream>

#include "json.hpp"

namespace eclip {

CatalogId catalog_key(const std::string& catalog_id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : catalog_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return static_cast<CatalogId>(h >> 1);
}

void write_text_features(const std::filesystem::path& path, const std::vector<ProductRecord>& records,
                         const TextFeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& rec : records) {
    const auto it = table.find(rec.product_id);
    if (it == table.end()) continue;
    nlohmann::ordered_json j;
    j["product_id"] = rec.product_id;
    j["features"] = std::vector<Real>(it->second.data(), it->second.data() + it->second.size());
    out << j.dump() << '\n';
  }
}

TextFeatureTable read_text_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  TextFeatureTable table;
  std::string line;
  Eigen::Index dim = -1;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const auto values = j.at("features").get<std::vector<Real>>();
    if (dim >= 0 && static_cast<Eigen::Index>(values.size()) != dim) {
      throw DimensionError(path.string() + ":" + std::to_string(lineno) + ": feature width " +
                           std::to_string(values.size()) + " != " + std::to_string(dim));
    }
    dim = static_cast<Eigen::Index>(values.size());
    table[j.at("product_id").get<std::string>()] = Eigen::Map<const Vec>(values.data(), dim);
  }
  return table;
}

Label ClassTable::find_leaf(const CategoryPath& path) const {
  if (path.empty()) return -1;
  for (const auto& c : classes) {
    if (c.name == path.back()) return c.label;
  }
  return -1;
}

ClassTable read_class_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const auto root = nlohmann::json::parse(in);
  auto to_vec = [](const nlohmann::json& arr) {
    const auto v = arr.get<std::vector<Real>>();
    return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  ClassTable table;
  for (const auto& c : root.at("classes")) {
    ClassPrompt p;
    p.label = c.at("label").get<Label>();
    p.name = c.at("name").get<std::string>();
    p.path = c.value("path", p.name);
    p.attribute = c.value("attribute", Label{0});
    p.adult = c.value("adult", false);
    p.prompt = to_vec(c.at("prompt"));
    if (p.label != static_cast<Label>(table.classes.size())) {
      throw ParameterError("class labels must be 0..K-1 in order");
    }
    table.classes.push_back(std::move(p));
  }
  if (root.contains("attributes")) {
    for (const auto& a : root.at("attributes")) table.attribute_prompts.push_back(to_vec(a.at("prompt")));
  }
  return table;
}

LoadedDataset load_dataset(const std::filesystem::path& dir, int grid, Eigen::Index title_dim,
                           const ClassTable* classes) {
  LoadedDataset out;
  const auto manifest = read_manifest(dir / "manifest.jsonl");
  const auto text_path = dir / "text_features.jsonl";
  TextFeatureTable table;
  const bool have_text = std::filesystem::exists(text_path);
  if (have_text) table = read_text_features(text_path);

  std::vector<Vec> text_rows, image_rows;
  for (const auto& rec : manifest) {
    std::filesystem::path img = rec.image_path;
    if (img.is_relative()) img = dir / img;
    const auto load = read_ppm(img);
    if (load.status != ImageStatus::ok) continue;
    Vec t;
    if (have_text) {
      const auto it = table.find(rec.product_id);
      if (it == table.end()) continue;
      t = it->second;
    } else {
      t = title_features(tokenize_title(rec.title), title_dim);
    }
    text_rows.push_back(std::move(t));
    image_rows.push_back(image_features(load.image, grid));
    out.set.catalog.push_back(catalog_key(rec.catalog_id));
    out.set.categories.push_back(rec.product_category);
    out.labels.push_back(classes ? classes->find_leaf(rec.product_category) : -1);
    out.records.push_back(rec);
  }
  const auto n = static_cast<Eigen::Index>(text_rows.size());
  if (n == 0) throw DegenerateError("no usable records in " + dir.string());
  out.set.text.resize(n, text_rows.front().size());
  out.set.image.resize(n, image_rows.front().size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (text_rows[static_cast<std::size_t>(i)].size() != out.set.text.cols()) {
      throw DimensionError("inconsistent text feature width");
    }
    out.set.text.row(i) = text_rows[static_cast<std::size_t>(i)].transpose();
    out.set.image.row(i) = image_rows[static_cast<std::size_t>(i)].transpose();
  }
  return out;
}

}  // namespace eclip
