#include "eclip/config.hpp"

#include <charconv>
#include <climits>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace eclip {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Removes a trailing '#' comment that is not inside a string literal.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
    } else if (s[i] == '"') {
      quoted = !quoted;
    } else if (s[i] == '#' && !quoted) {
      return s.substr(0, i);
    }
  }
  return s;
}

struct BadValue {
  std::string message;
};

std::int64_t to_int(std::string_view raw) {
  raw = trim(raw);
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc{} || p != raw.data() + raw.size()) throw BadValue{"expected an integer, got '" + std::string(raw) + "'"};
  return v;
}

std::uint64_t to_uint(std::string_view raw) {
  raw = trim(raw);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc{} || p != raw.data() + raw.size()) {
    throw BadValue{"expected a non-negative integer, got '" + std::string(raw) + "'"};
  }
  return v;
}

int to_int32(std::string_view raw) {
  const auto v = to_int(raw);
  if (v < INT32_MIN || v > INT32_MAX) throw BadValue{"integer out of range"};
  return static_cast<int>(v);
}

std::size_t to_count(std::string_view raw) { return static_cast<std::size_t>(to_uint(raw)); }

Real to_real(std::string_view raw) {
  raw = trim(raw);
  Real v = 0;
  const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc{} || p != raw.data() + raw.size()) throw BadValue{"expected a number, got '" + std::string(raw) + "'"};
  return v;
}

bool to_bool(std::string_view raw) {
  raw = trim(raw);
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw BadValue{"expected true or false, got '" + std::string(raw) + "'"};
}

std::string to_str(std::string_view raw) {
  raw = trim(raw);
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
    throw BadValue{"expected a quoted string, got '" + std::string(raw) + "'"};
  }
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    if (raw[i] == '\\') {
      if (i + 2 >= raw.size()) throw BadValue{"dangling escape in string"};
      const char c = raw[++i];
      if (c == 'n') out += '\n';
      else if (c == 't') out += '\t';
      else if (c == '"' || c == '\\') out += c;
      else throw BadValue{std::string("unknown escape \\") + c};
    } else if (raw[i] == '"') {
      throw BadValue{"unescaped quote in string"};
    } else {
      out += raw[i];
    }
  }
  return out;
}

std::vector<std::string_view> to_items(std::string_view raw) {
  raw = trim(raw);
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
    throw BadValue{"expected an array [...], got '" + std::string(raw) + "'"};
  }
  std::vector<std::string_view> items;
  const auto body = raw.substr(1, raw.size() - 2);
  if (trim(body).empty()) return items;
  bool quoted = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i < body.size() && body[i] == '\\' && quoted) {
      ++i;
      continue;
    }
    if (i < body.size() && body[i] == '"') quoted = !quoted;
    if (i == body.size() || (body[i] == ',' && !quoted)) {
      const auto item = trim(body.substr(start, i - start));
      if (item.empty()) {
        if (i == body.size()) break;  // trailing comma
        throw BadValue{"empty array element"};
      }
      items.push_back(item);
      start = i + 1;
    }
  }
  return items;
}

std::vector<Eigen::Index> to_index_list(std::string_view raw) {
  std::vector<Eigen::Index> out;
  for (auto item : to_items(raw)) out.push_back(static_cast<Eigen::Index>(to_int(item)));
  return out;
}

std::vector<std::string> to_string_list(std::string_view raw) {
  std::vector<std::string> out;
  for (auto item : to_items(raw)) out.push_back(to_str(item));
  return out;
}

std::string fmt(Real v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, p);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    if (c == '\t') {
      out += "\\t";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

template <class T>
std::string fmt_list(const std::vector<T>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, std::string>) out += quote(items[i]);
    else out += std::to_string(items[i]);
  }
  return out + "]";
}

struct Key {
  std::string name;  // section.key
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define ECLIP_KEY(NAME, FIELD, PARSE, FORMAT)                                            \
  Key {                                                                                  \
    NAME, [](RunConfig& c, std::string_view raw) { c.FIELD = PARSE(raw); },              \
        [](const RunConfig& c) { return FORMAT(c.FIELD); }                               \
  }

std::string fmt_int(std::int64_t v) { return std::to_string(v); }
std::string fmt_uint(std::uint64_t v) { return std::to_string(v); }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      ECLIP_KEY("run.seed", seed, to_uint, fmt_uint),
      ECLIP_KEY("run.out", out, to_str, quote),
      ECLIP_KEY("run.deterministic", deterministic, to_bool, fmt),

      ECLIP_KEY("synth.n_classes", synth.n_classes, to_count, fmt_uint),
      ECLIP_KEY("synth.n_catalogs_per_class", synth.n_catalogs_per_class, to_count, fmt_uint),
      ECLIP_KEY("synth.n_duplicates_per_catalog", synth.n_duplicates_per_catalog, to_count, fmt_uint),
      ECLIP_KEY("synth.text_dim", synth.text_dim, to_int, fmt_int),
      ECLIP_KEY("synth.image_size", synth.image_size, to_int32, fmt_int),
      ECLIP_KEY("synth.noise_sigma", synth.noise_sigma, to_real, fmt),
      ECLIP_KEY("synth.category_depth", synth.category_depth, to_count, fmt_uint),
      ECLIP_KEY("synth.catalog_spread", synth.catalog_spread, to_real, fmt),

      ECLIP_KEY("data.dir", data_dir, to_str, quote),
      ECLIP_KEY("data.holdout_fraction", holdout_fraction, to_real, fmt),
      ECLIP_KEY("data.image_grid", image_grid, to_int32, fmt_int),
      ECLIP_KEY("data.title_dim", title_dim, to_int, fmt_int),

      ECLIP_KEY("preprocess.min_side", min_side, to_int32, fmt_int),
      ECLIP_KEY("preprocess.catalog_dedup", catalog_dedup, to_bool, fmt),

      ECLIP_KEY("model.text_hidden", text_hidden, to_index_list, fmt_list),
      ECLIP_KEY("model.image_hidden", image_hidden, to_index_list, fmt_list),
      ECLIP_KEY("model.embed_dim", embed_dim, to_int, fmt_int),
      Key{"model.activation",
          [](RunConfig& c, std::string_view raw) {
            try {
              c.activation = parse_activation(to_str(raw));
            } catch (const ParameterError& e) {
              throw BadValue{e.what()};
            }
          },
          [](const RunConfig& c) { return quote(to_string(c.activation)); }},
      ECLIP_KEY("model.text_tokens", text_tokens, to_int, fmt_int),
      ECLIP_KEY("model.image_tokens", image_tokens, to_int, fmt_int),
      ECLIP_KEY("model.tau_init", train.tau_init, to_real, fmt),

      ECLIP_KEY("schedule.initial_batch", train.schedule.initial_batch, to_count, fmt_uint),
      ECLIP_KEY("schedule.max_batch", train.schedule.max_batch, to_count, fmt_uint),
      ECLIP_KEY("schedule.total_steps", train.schedule.total_steps, to_count, fmt_uint),

      ECLIP_KEY("train.micro_batch", train.micro_batch, to_count, fmt_uint),
      ECLIP_KEY("train.learning_rate", train.optimizer.learning_rate, to_real, fmt),
      ECLIP_KEY("train.weight_decay", train.optimizer.weight_decay, to_real, fmt),
      ECLIP_KEY("train.beta1", train.optimizer.beta1, to_real, fmt),
      ECLIP_KEY("train.beta2", train.optimizer.beta2, to_real, fmt),
      ECLIP_KEY("train.eps", train.optimizer.eps, to_real, fmt),
      Key{"train.labels",
          [](RunConfig& c, std::string_view raw) {
            const auto s = to_str(raw);
            if (s == "soft") c.train.labels = LabelMode::soft;
            else if (s == "hard") c.train.labels = LabelMode::hard;
            else throw BadValue{"expected \"soft\" or \"hard\", got '" + s + "'"};
          },
          [](const RunConfig& c) { return quote(c.train.labels == LabelMode::soft ? "soft" : "hard"); }},
      Key{"train.sampling",
          [](RunConfig& c, std::string_view raw) {
            try {
              c.train.sampling = parse_sampling_policy(to_str(raw));
            } catch (const ParameterError& e) {
              throw BadValue{e.what()};
            }
          },
          [](const RunConfig& c) { return quote(to_string(c.train.sampling)); }},
      ECLIP_KEY("train.warmup_fraction", train.warmup_fraction, to_real, fmt),
      ECLIP_KEY("train.negative_sampling_prob", train.negative_sampling_prob, to_real, fmt),
      Key{"train.category_level",
          [](RunConfig& c, std::string_view raw) {
            const auto v = to_int(raw);
            if (v < 0) c.train.category_level.reset();
            else c.train.category_level = static_cast<std::size_t>(v);
          },
          [](const RunConfig& c) {
            return c.train.category_level ? std::to_string(*c.train.category_level) : std::string("-1");
          }},
      ECLIP_KEY("train.freeze_text", train.freeze_text, to_bool, fmt),
      ECLIP_KEY("train.freeze_image", train.freeze_image, to_bool, fmt),
      ECLIP_KEY("train.eval_interval", train.eval_interval, to_count, fmt_uint),
      ECLIP_KEY("train.checkpoint_every", train.checkpoint_every, to_count, fmt_uint),
      ECLIP_KEY("train.probe_batch", train.probe_batch, to_count, fmt_uint),
      ECLIP_KEY("train.parallel_embedding_pass", train.parallel_embedding_pass, to_bool, fmt),

      ECLIP_KEY("eval.tasks", eval.tasks, to_string_list, fmt_list),
      ECLIP_KEY("eval.pca_dim", eval.pca_dim, to_int, fmt_int),
      ECLIP_KEY("eval.probe_epochs", eval.probe.epochs, to_count, fmt_uint),
      ECLIP_KEY("eval.probe_learning_rate", eval.probe.learning_rate, to_real, fmt),
      ECLIP_KEY("eval.probe_weight_decay", eval.probe.weight_decay, to_real, fmt),
      ECLIP_KEY("eval.checkpoint", checkpoint, to_str, quote),
  };
  return table;
}

#undef ECLIP_KEY

const Key* find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

bool known_section(std::string_view section) {
  for (const auto& k : keys()) {
    if (std::string_view(k.name).substr(0, k.name.find('.')) == section) return true;
  }
  return false;
}

void assign(RunConfig& config, const std::string& name, std::string_view raw, const std::string& where) {
  const Key* key = find_key(name);
  if (!key) throw ConfigError(name, where + "unknown key");
  try {
    key->set(config, raw);
  } catch (const BadValue& e) {
    throw ConfigError(name, where + e.message);
  }
}

template <class F>
void check(const char* field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(field, e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(field, e.what());
  }
}

void require(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

void RunConfig::validate() const {
  check("synth", [&] { synth.validate(); });
  require(!out.empty(), "run.out", "must not be empty");
  require(!data_dir.empty(), "data.dir", "must not be empty");
  require(holdout_fraction >= 0 && holdout_fraction < 1, "data.holdout_fraction", "must be in [0, 1)");
  require(image_grid >= 1, "data.image_grid", "must be >= 1");
  require(title_dim >= 1, "data.title_dim", "must be >= 1");
  require(min_side >= 0, "preprocess.min_side", "must be >= 0");
  require(embed_dim >= 1, "model.embed_dim", "must be >= 1");
  for (auto h : text_hidden) require(h >= 1, "model.text_hidden", "widths must be >= 1");
  for (auto h : image_hidden) require(h >= 1, "model.image_hidden", "widths must be >= 1");
  require(text_tokens >= 1, "model.text_tokens", "must be >= 1");
  require(image_tokens >= 1, "model.image_tokens", "must be >= 1");
  require(train.tau_init > 0, "model.tau_init", "must be > 0");
  check("schedule", [&] { train.schedule.validate(); });
  require(train.micro_batch >= 1 && train.micro_batch <= train.schedule.initial_batch, "train.micro_batch",
          "must be in [1, schedule.initial_batch]");
  require(train.optimizer.learning_rate >= 0, "train.learning_rate", "must be >= 0");
  require(train.optimizer.weight_decay >= 0, "train.weight_decay", "must be >= 0");
  require(train.optimizer.beta1 >= 0 && train.optimizer.beta1 < 1, "train.beta1", "must be in [0, 1)");
  require(train.optimizer.beta2 >= 0 && train.optimizer.beta2 < 1, "train.beta2", "must be in [0, 1)");
  require(train.optimizer.eps > 0, "train.eps", "must be > 0");
  require(train.warmup_fraction >= 0 && train.warmup_fraction <= 1, "train.warmup_fraction", "must be in [0, 1]");
  require(train.negative_sampling_prob >= 0 && train.negative_sampling_prob <= 1,
          "train.negative_sampling_prob", "must be in [0, 1]");
  require(train.eval_interval >= 1, "train.eval_interval", "must be >= 1");
  require(train.probe_batch >= 1, "train.probe_batch", "must be >= 1");
  for (const auto& t : eval.tasks) {
    const auto& all = all_eval_tasks();
    require(std::find(all.begin(), all.end(), t) != all.end(), "eval.tasks", "unknown task '" + t + "'");
  }
  require(eval.pca_dim >= 1, "eval.pca_dim", "must be >= 1");
  require(eval.probe.epochs >= 1, "eval.probe_epochs", "must be >= 1");
  require(eval.probe.learning_rate >= 0, "eval.probe_learning_rate", "must be >= 0");
}

TrainConfig RunConfig::train_config(Eigen::Index text_dim, Eigen::Index image_dim) const {
  TrainConfig cfg = train;
  cfg.seed = seed;
  cfg.text_encoder = {text_dim, text_hidden, embed_dim, activation, text_tokens};
  cfg.image_encoder = {image_dim, image_hidden, embed_dim, activation, image_tokens};
  if (deterministic) cfg.parallel_embedding_pass = false;
  check("model.text_tokens", [&] { cfg.text_encoder.validate(); });
  check("model.image_tokens", [&] { cfg.image_encoder.validate(); });
  return cfg;
}

void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin) {
  std::string section;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!known_section(section)) throw ConfigError(section, where + "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("", where + "expected key = value");
    const auto key = std::string(trim(line.substr(0, eq)));
    if (section.empty()) throw ConfigError(key, where + "key outside of a [section]");
    assign(config, section + "." + key, line.substr(eq + 1), where);
  }
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig config;
  apply_config_text(config, ss.str(), path.string());
  return config;
}

void apply_assignment(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("", "expected section.key=value, got '" + std::string(assignment) + "'");
  }
  assign(config, std::string(trim(assignment.substr(0, eq))), assignment.substr(eq + 1), "--set: ");
}

void apply_environment(RunConfig& config) {
  if (const char* seed = std::getenv("ECLIP_SEED"); seed && *seed) {
    try {
      config.seed = to_uint(seed);
    } catch (const BadValue& e) {
      throw ConfigError("run.seed", "ECLIP_SEED: " + e.message);
    }
  }
  if (const char* out = std::getenv("ECLIP_OUT"); out && *out) config.out = out;
}

std::string to_config_text(const RunConfig& config) {
  std::string out, section;
  for (const auto& k : keys()) {
    const auto dot = k.name.find('.');
    const auto sec = k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace eclip
