#include "eclip/experiment.hpp"

#include <algorithm>
#include <map>

namespace eclip {

namespace {

constexpr Modality kModalities[] = {Modality::image, Modality::text, Modality::multimodal};

Mat rows_of(const Mat& m, const std::vector<std::size_t>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Mat stack(const std::vector<Vec>& rows) {
  if (rows.empty()) return {};
  Mat out(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

std::vector<Label> dense_labels(const std::vector<Label>& labels) {
  std::map<Label, Label> ids;
  std::vector<Label> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(ids.emplace(l, static_cast<Label>(ids.size())).first->second);
  return out;
}

std::size_t distinct(const std::vector<Label>& labels) {
  return std::set<Label>(labels.begin(), labels.end()).size();
}

}  // namespace

Split holdout_split(const std::vector<ProductRecord>& records, Real fraction) {
  Split split;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (is_holdout_catalog(records[i].catalog_id, fraction) ? split.test : split.train).push_back(i);
  }
  return split;
}

TrainingSet subset(const TrainingSet& set, const std::vector<std::size_t>& rows) {
  TrainingSet out;
  out.text = rows_of(set.text, rows);
  out.image = rows_of(set.image, rows);
  for (auto r : rows) {
    out.catalog.push_back(set.catalog.at(r));
    if (!set.categories.empty()) out.categories.push_back(set.categories.at(r));
  }
  return out;
}

std::pair<LoadedDataset, ClassTable> as_loaded(const SynthDataset& data, int grid) {
  LoadedDataset loaded;
  loaded.records = data.records;
  std::vector<std::size_t> all(data.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  loaded.set = to_training_set(data, all, grid);
  loaded.labels = data.class_of;

  ClassTable table;
  for (std::size_t c = 0; c < data.classes.size(); ++c) {
    const auto& info = data.classes[c];
    table.classes.push_back({static_cast<Label>(c), info.name, join_category(info.path), info.attribute,
                             info.adult, info.prototype});
  }
  table.attribute_prompts = data.attribute_prompts;
  return {std::move(loaded), std::move(table)};
}

EvalItems make_items(const LoadedDataset& data, const ClassTable& classes,
                     const std::vector<std::size_t>& rows) {
  EvalItems items;
  items.text = rows_of(data.set.text, rows);
  items.image = rows_of(data.set.image, rows);
  for (auto r : rows) {
    const Label cls = data.labels.at(r);
    if (cls < 0 || cls >= static_cast<Label>(classes.classes.size())) {
      throw ParameterError("record " + data.records.at(r).product_id + " has no class in the class table");
    }
    const auto& info = classes.classes[static_cast<std::size_t>(cls)];
    items.classes.push_back(cls);
    items.attributes.push_back(info.attribute);
    items.catalogs.push_back(data.set.catalog.at(r));
    items.adult.push_back(info.adult ? 1 : 0);
  }
  return items;
}

EvalInputs make_eval_inputs(const LoadedDataset& data, const ClassTable& classes, const Split& split) {
  EvalInputs in;
  in.train = make_items(data, classes, split.train);
  in.test = make_items(data, classes, split.test);
  std::vector<Vec> prompts;
  for (const auto& c : classes.classes) prompts.push_back(c.prompt);
  in.class_prompts = stack(prompts);
  in.attribute_prompts = stack(classes.attribute_prompts);
  return in;
}

const Mat& Embedded::get(Modality m) const {
  switch (m) {
    case Modality::image: return image;
    case Modality::text: return text;
    default: return multimodal;
  }
}

Embedded embed(const ModelParams& model, const Mat& text, const Mat& image) {
  Embedded e;
  e.text = encode(model.text, model.text_spec, text);
  e.image = encode(model.image, model.image_spec, image);
  e.multimodal = multimodal_embeddings(e.image, e.text);
  return e;
}

nlohmann::ordered_json evaluate(const ModelParams& model, const EvalInputs& inputs,
                                const EvalSettings& settings) {
  for (const auto& t : settings.tasks) {
    if (std::find(all_eval_tasks().begin(), all_eval_tasks().end(), t) == all_eval_tasks().end()) {
      throw ParameterError("unknown eval task '" + t + "'");
    }
  }
  auto wants = [&](const char* task) {
    return std::find(settings.tasks.begin(), settings.tasks.end(), task) != settings.tasks.end();
  };
  const auto test = embed(model, inputs.test.text, inputs.test.image);
  const bool need_train = wants("linear_probe") || wants("adult");
  const Embedded train = need_train ? embed(model, inputs.train.text, inputs.train.image) : Embedded{};

  nlohmann::ordered_json report;
  report["items"] = {{"train", inputs.train.classes.size()}, {"test", inputs.test.classes.size()}};

  auto zero_shot = [&](const Mat& prompts, const std::vector<Label>& gold) {
    const Mat prompt_emb = encode(model.text, model.text_spec, prompts);
    nlohmann::ordered_json block;
    for (auto m : kModalities) {
      const auto pred = zero_shot_classify(test.image, &test.text, prompt_emb, m);
      block[to_string(m)] = {{"accuracy", accuracy(pred, gold)}};
    }
    return block;
  };

  if (wants("zero_shot_category")) report["zero_shot_category"] = zero_shot(inputs.class_prompts, inputs.test.classes);
  if (wants("attribute") && inputs.attribute_prompts.rows() >= 2) {
    report["attribute"] = zero_shot(inputs.attribute_prompts, inputs.test.attributes);
  }
  if (wants("matching")) {
    nlohmann::ordered_json block;
    for (auto m : kModalities) {
      const LabeledEmbeddings pool{test.get(m), inputs.test.catalogs};
      block[to_string(m)] = {{"top1", top1_matching_accuracy(pool, pool, true)}};
    }
    report["matching"] = block;
  }
  if (wants("linear_probe")) {
    nlohmann::ordered_json block;
    for (auto m : kModalities) {
      const LabeledEmbeddings tr{train.get(m), inputs.train.classes};
      const LabeledEmbeddings te{test.get(m), inputs.test.classes};
      block[to_string(m)] = {{"accuracy", linear_probe(tr, te, settings.probe)}};
    }
    report["linear_probe"] = block;
  }
  if (wants("adult") && distinct(inputs.train.adult) == 2) {
    nlohmann::ordered_json block;
    for (auto m : kModalities) {
      const LabeledEmbeddings tr{train.get(m), inputs.train.adult};
      const LabeledEmbeddings te{test.get(m), inputs.test.adult};
      block[to_string(m)] = {{"f1", linear_probe_f1(tr, te, settings.probe)}};
    }
    report["adult"] = block;
  }
  if (wants("clustering")) {
    const auto k = static_cast<Eigen::Index>(distinct(inputs.test.classes));
    const auto gold = dense_labels(inputs.test.classes);
    nlohmann::ordered_json block;
    for (auto m : kModalities) {
      ClusteringResult result;
      if (m == Modality::multimodal) {
        result = cluster_products(test.text, test.image, k, settings.pca_dim, settings.seed);
      } else {
        result = cluster_embeddings(test.get(m), k, settings.pca_dim, settings.seed);
      }
      const auto scores = clustering_metrics(result.assignments, gold);
      block[to_string(m)] = {{"acc", scores.acc}, {"nmi", scores.nmi}, {"ari", scores.ari}};
    }
    report["clustering"] = block;
  }
  if (wants("fine_tune")) {
    nlohmann::ordered_json block;
    block["image"] = {{"accuracy", fine_tune(model.image, model.image_spec, inputs.train.image,
                                              inputs.train.classes, inputs.test.image,
                                              inputs.test.classes, settings.probe)}};
    block["text"] = {{"accuracy", fine_tune(model.text, model.text_spec, inputs.train.text,
                                             inputs.train.classes, inputs.test.text,
                                             inputs.test.classes, settings.probe)}};
    report["fine_tune"] = block;
  }
  return report;
}

}  // namespace eclip
