#include "eclip/model.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "json.hpp"

namespace eclip {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kCheckpointFormat = "eclip-checkpoint";
constexpr int kCheckpointVersion = 1;

ordered_json spec_to_json(const EncoderSpec& spec) {
  ordered_json j;
  j["input_dim"] = spec.input_dim;
  j["hidden_dims"] = spec.hidden_dims;
  j["output_dim"] = spec.output_dim;
  j["activation"] = to_string(spec.activation);
  j["tokens"] = spec.tokens;
  return j;
}

EncoderSpec spec_from_json(const ordered_json& j) {
  EncoderSpec spec;
  spec.input_dim = j.at("input_dim").get<Eigen::Index>();
  spec.hidden_dims = j.at("hidden_dims").get<std::vector<Eigen::Index>>();
  spec.output_dim = j.at("output_dim").get<Eigen::Index>();
  spec.activation = parse_activation(j.at("activation").get<std::string>());
  spec.tokens = j.at("tokens").get<Eigen::Index>();
  spec.validate();
  return spec;
}

ordered_json tensor_to_json(const std::string& name, const Mat& m) {
  ordered_json j;
  j["name"] = name;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<Real>(m.data(), m.data() + m.size());
  return j;
}

}  // namespace

void ModelParams::clamp_log_tau() { log_tau = std::clamp(log_tau, log_tau_min(), log_tau_max()); }

void ModelParams::validate() const {
  if (text_spec.output_dim != image_spec.output_dim) {
    throw DimensionError("text and image encoders must share the output dimension");
  }
  check_encoder_params(text, text_spec);
  check_encoder_params(image, image_spec);
  if (!std::isfinite(log_tau)) throw NumericError("log_tau is not finite");
}

ModelParams init_model(const EncoderSpec& text_spec, const EncoderSpec& image_spec,
                       std::uint64_t seed, Real tau_init) {
  if (text_spec.output_dim != image_spec.output_dim) {
    throw DimensionError("text and image encoders must share the output dimension");
  }
  if (!(tau_init > 0)) throw ParameterError("initial temperature must be positive");
  std::mt19937_64 rng(seed);
  ModelParams m;
  m.text_spec = text_spec;
  m.image_spec = image_spec;
  m.text = init_encoder(text_spec, rng);
  m.image = init_encoder(image_spec, rng);
  m.log_tau = std::log(tau_init);
  m.clamp_log_tau();
  return m;
}

ParamSet flatten(const ModelParams& model) {
  ParamSet flat;
  for (const auto& t : model.text) flat.add("text." + t.name, t.value, t.decay);
  for (const auto& t : model.image) flat.add("image." + t.name, t.value, t.decay);
  flat.add("log_tau", Mat::Constant(1, 1, model.log_tau), false);
  return flat;
}

ModelParams unflatten(const ParamSet& flat, const EncoderSpec& text_spec,
                      const EncoderSpec& image_spec) {
  ModelParams m;
  m.text_spec = text_spec;
  m.image_spec = image_spec;
  for (const auto& t : flat) {
    if (t.name.starts_with("text.")) {
      m.text.add(t.name.substr(5), t.value, t.decay);
    } else if (t.name.starts_with("image.")) {
      m.image.add(t.name.substr(6), t.value, t.decay);
    } else if (t.name == "log_tau") {
      m.log_tau = t.value(0, 0);
    } else {
      throw ParameterError("unflatten: unexpected tensor " + t.name);
    }
  }
  m.validate();
  return m;
}

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path,
                     std::uint64_t step) {
  ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["step"] = step;
  j["text_spec"] = spec_to_json(model.text_spec);
  j["image_spec"] = spec_to_json(model.image_spec);
  j["log_tau"] = model.log_tau;
  ordered_json text = ordered_json::array(), image = ordered_json::array();
  for (const auto& t : model.text) text.push_back(tensor_to_json(t.name, t.value));
  for (const auto& t : model.image) image.push_back(tensor_to_json(t.name, t.value));
  j["text"] = std::move(text);
  j["image"] = std::move(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  const auto j = ordered_json::parse(in);
  if (j.at("format") != kCheckpointFormat) {
    throw std::runtime_error(path.string() + " is not an eclip checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + j.at("version").dump());
  }
  ModelParams m;
  m.text_spec = spec_from_json(j.at("text_spec"));
  m.image_spec = spec_from_json(j.at("image_spec"));
  m.log_tau = j.at("log_tau").get<Real>();
  auto read_tower = [](const ordered_json& arr, ParamSet& into) {
    for (const auto& t : arr) {
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto data = t.at("data").get<std::vector<Real>>();
      if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw DimensionError("checkpoint tensor " + name + " has wrong element count");
      }
      Mat v(rows, cols);
      std::copy(data.begin(), data.end(), v.data());
      into.add(name, std::move(v), !name.ends_with(".bias"));
    }
  };
  read_tower(j.at("text"), m.text);
  read_tower(j.at("image"), m.image);
  m.validate();
  return m;
}

}  // namespace eclip
