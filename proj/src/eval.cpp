#include "eclip/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace eclip {

void LabeledEmbeddings::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != embeddings.rows()) {
    throw DimensionError("labeled embeddings: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(embeddings.rows()) + " rows");
  }
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::image: return "image";
    case Modality::text: return "text";
    case Modality::multimodal: return "multimodal";
  }
  return "unknown";
}

Mat multimodal_embeddings(const Mat& image, const Mat& text) {
  if (image.rows() != text.rows() || image.cols() != text.cols()) {
    throw DimensionError("multimodal_embeddings: image " + shape_string(image.rows(), image.cols()) +
                         " vs text " + shape_string(text.rows(), text.cols()));
  }
  const Mat mean = (image + text) * 0.5;
  return l2_normalize_rows(mean);
}

std::vector<Eigen::Index> zero_shot_classify(const Mat& item_image, const Mat* item_text,
                                             const Mat& class_text, Modality mode) {
  if (mode != Modality::image && item_text == nullptr) {
    throw ParameterError("zero_shot_classify: " + to_string(mode) + " mode needs text embeddings");
  }
  const Mat* items = &item_image;
  Mat fused;
  if (mode == Modality::text) {
    items = item_text;
  } else if (mode == Modality::multimodal) {
    fused = multimodal_embeddings(item_image, *item_text);
    items = &fused;
  }
  if (items->cols() != class_text.cols()) throw DimensionError("zero_shot_classify: width mismatch");
  if (class_text.rows() == 0) throw CapacityError("zero_shot_classify: no classes");
  const Mat scores = matmul_nt(*items, class_text);
  std::vector<Eigen::Index> pred(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k)
      if (scores(i, k) > scores(i, best)) best = k;
    pred[static_cast<std::size_t>(i)] = best;
  }
  return pred;
}

Real top1_matching_accuracy(const LabeledEmbeddings& queries, const LabeledEmbeddings& pool,
                            bool leave_one_out) {
  queries.validate();
  pool.validate();
  if (pool.size() == 0) throw CapacityError("top1_matching_accuracy: empty pool");
  if (queries.size() == 0) return 0.0;
  if (leave_one_out && pool.size() < queries.size()) {
    throw DimensionError("top1_matching_accuracy: leave-one-out needs every query in the pool");
  }
  const Mat sim = matmul_nt(queries.embeddings, pool.embeddings);
  std::size_t hits = 0;
  for (Eigen::Index q = 0; q < sim.rows(); ++q) {
    Eigen::Index best = -1;
    for (Eigen::Index p = 0; p < sim.cols(); ++p) {
      if (leave_one_out && p == q) continue;
      if (best < 0 || sim(q, p) > sim(q, best)) best = p;
    }
    if (best >= 0 && pool.labels[static_cast<std::size_t>(best)] ==
                         queries.labels[static_cast<std::size_t>(q)]) {
      ++hits;
    }
  }
  return static_cast<Real>(hits) / static_cast<Real>(queries.size());
}

Real accuracy(const std::vector<Eigen::Index>& predicted, const std::vector<Label>& gold) {
  if (predicted.size() != gold.size()) throw DimensionError("accuracy: length mismatch");
  if (gold.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i];
  return static_cast<Real>(hits) / static_cast<Real>(gold.size());
}

namespace {

// Softmax regression head over fixed-width inputs.
class SoftmaxHead {
 public:
  SoftmaxHead(Eigen::Index dim, Eigen::Index classes) {
    params_.add("weight", Mat::Zero(dim, classes));
    params_.add("bias", Mat::Zero(1, classes), false);
  }

  Mat logits(const Mat& inputs) const {
    Mat z = matmul(inputs, params_[0].value);
    for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i) += params_[1].value.row(0);
    return z;
  }

  // Accumulates head gradients of the mean cross-entropy, returns ∂loss/∂inputs.
  Mat backward(const Mat& inputs, const std::vector<Eigen::Index>& targets) {
    Mat p = logits(inputs);
    const Real inv_n = 1.0 / static_cast<Real>(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const Real mx = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - mx).exp().matrix();
      p.row(i) /= p.row(i).sum();
      p(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
    }
    p *= inv_n;
    params_.zero_grad();
    params_[0].grad += matmul_tn(inputs, p);
    params_[1].grad += column_sums(p);
    return matmul_nt(p, params_[0].value);
  }

  void step(const AdamWConfig& cfg) {
    ++step_;
    const auto grads = params_.gradients();
    adamw_update(params_, grads, moments_, step_, cfg);
  }

  std::vector<Eigen::Index> predict(const Mat& inputs) const {
    const Mat z = logits(inputs);
    std::vector<Eigen::Index> out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < z.cols(); ++k)
        if (z(i, k) > z(i, best)) best = k;
      out[static_cast<std::size_t>(i)] = best;
    }
    return out;
  }

 private:
  ParamSet params_;
  Moments moments_;
  std::uint64_t step_ = 0;
};

struct Vocabulary {
  std::vector<Label> classes;  // sorted

  explicit Vocabulary(const std::vector<Label>& labels) : classes(labels) {
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) throw DegenerateError("classification needs at least two classes");
  }
  Eigen::Index index(Label l) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), l);
    return (it != classes.end() && *it == l) ? it - classes.begin() : -1;
  }
  std::vector<Eigen::Index> indices(const std::vector<Label>& labels) const {
    std::vector<Eigen::Index> out;
    out.reserve(labels.size());
    for (auto l : labels) out.push_back(index(l));
    return out;
  }
};

AdamWConfig probe_optimizer(const ProbeConfig& config) {
  AdamWConfig cfg;
  cfg.learning_rate = config.learning_rate;
  cfg.weight_decay = config.weight_decay;
  return cfg;
}

std::vector<Eigen::Index> probe_predictions(const LabeledEmbeddings& train,
                                            const LabeledEmbeddings& test,
                                            const ProbeConfig& config, const Vocabulary& vocab) {
  train.validate();
  test.validate();
  if (train.embeddings.cols() != test.embeddings.cols()) {
    throw DimensionError("linear_probe: train/test widths differ");
  }
  const auto targets = vocab.indices(train.labels);
  SoftmaxHead head(train.embeddings.cols(), static_cast<Eigen::Index>(vocab.classes.size()));
  const auto opt = probe_optimizer(config);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    head.backward(train.embeddings, targets);
    head.step(opt);
  }
  return head.predict(test.embeddings);
}

}  // namespace

Real linear_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& test,
                  const ProbeConfig& config) {
  const Vocabulary vocab(train.labels);
  const auto pred = probe_predictions(train, test, config, vocab);
  const auto gold = vocab.indices(test.labels);
  return accuracy(pred, std::vector<Label>(gold.begin(), gold.end()));
}

Real linear_probe_f1(const LabeledEmbeddings& train, const LabeledEmbeddings& test,
                     const ProbeConfig& config) {
  for (auto l : train.labels)
    if (l != 0 && l != 1) throw ParameterError("linear_probe_f1: labels must be 0/1");
  const Vocabulary vocab(train.labels);
  const auto pred = probe_predictions(train, test, config, vocab);
  std::vector<bool> p(pred.size()), g(test.labels.size());
  for (std::size_t i = 0; i < pred.size(); ++i) p[i] = vocab.classes[static_cast<std::size_t>(pred[i])] == 1;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = test.labels[i] == 1;
  return f1_score(p, g);
}

Real fine_tune(const ParamSet& encoder, const EncoderSpec& spec, const Mat& train_features,
               const std::vector<Label>& train_labels, const Mat& test_features,
               const std::vector<Label>& test_labels, const ProbeConfig& config) {
  if (static_cast<Eigen::Index>(train_labels.size()) != train_features.rows() ||
      static_cast<Eigen::Index>(test_labels.size()) != test_features.rows()) {
    throw DimensionError("fine_tune: label counts disagree with feature rows");
  }
  const Vocabulary vocab(train_labels);
  const auto targets = vocab.indices(train_labels);
  ParamSet params = encoder;
  Moments moments;
  std::uint64_t step = 0;
  SoftmaxHead head(spec.output_dim, static_cast<Eigen::Index>(vocab.classes.size()));
  const auto opt = probe_optimizer(config);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    ActivationTape tape;
    const Mat emb = encode(params, spec, train_features, &tape);
    const Mat d_emb = head.backward(emb, targets);
    params.zero_grad();
    encode_backward(params, spec, tape, d_emb);
    head.step(opt);
    const auto grads = params.gradients();
    adamw_update(params, grads, moments, ++step, opt);
  }
  const auto pred = head.predict(encode(params, spec, test_features));
  const auto gold = vocab.indices(test_labels);
  return accuracy(pred, std::vector<Label>(gold.begin(), gold.end()));
}

Eigen::Index numeric_rank(const Vec& eigenvalues) {
  if (eigenvalues.size() == 0) return 0;
  const Real top = eigenvalues.maxCoeff();
  if (!(top > 0)) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) r += eigenvalues(i) > 1e-10 * top;
  return r;
}

PcaResult pca(const Mat& x, Eigen::Index out_dim) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (out_dim < 1 || out_dim > std::min(n, d)) {
    throw ParameterError("pca: out_dim " + std::to_string(out_dim) + " outside [1, " +
                         std::to_string(std::min(n, d)) + "]");
  }
  PcaResult r;
  r.mean = column_sums(x) / static_cast<Real>(n);
  Mat centered = x;
  for (Eigen::Index i = 0; i < n; ++i) centered.row(i) -= r.mean;
  const Mat cov = matmul_tn(centered, centered) / static_cast<Real>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("pca: eigen decomposition failed");
  r.eigenvalues = solver.eigenvalues().reverse();
  r.components.resize(d, out_dim);
  for (Eigen::Index c = 0; c < out_dim; ++c) {
    Vec v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.components.col(c) = v;
  }
  r.projected = matmul(centered, r.components);
  return r;
}

Mat pca_project(const Mat& x, Eigen::Index out_dim) { return pca(x, out_dim).projected; }

namespace {

Real squared_distance(const Mat& a, Eigen::Index i, const Mat& b, Eigen::Index j) {
  Real acc = 0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const Real diff = a(i, c) - b(j, c);
    acc += diff * diff;
  }
  return acc;
}

Eigen::Index nearest(const Mat& x, Eigen::Index i, const Mat& centroids, Real* dist = nullptr) {
  Eigen::Index best = 0;
  Real best_d = squared_distance(x, i, centroids, 0);
  for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
    const Real d = squared_distance(x, i, centroids, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

}  // namespace

ClusteringResult kmeans(const Mat& x, Eigen::Index k, const KMeansConfig& config) {
  const Eigen::Index n = x.rows();
  if (k < 1 || k > n) {
    throw ParameterError("kmeans: k = " + std::to_string(k) + " with " + std::to_string(n) + " points");
  }
  std::mt19937_64 rng(config.seed);

  // k-means++ seeding.
  Mat centroids(k, x.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  Eigen::Index pick = first(rng);
  centroids.row(0) = x.row(pick);
  chosen[static_cast<std::size_t>(pick)] = true;
  std::vector<Real> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = squared_distance(x, i, centroids, 0);
  for (Eigen::Index c = 1; c < k; ++c) {
    Real total = 0;
    for (auto v : d2) total += v;
    pick = -1;
    if (total > 0) {
      std::uniform_real_distribution<Real> u(0.0, total);
      const Real target = u(rng);
      Real cum = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2[static_cast<std::size_t>(i)] <= 0) continue;
        cum += d2[static_cast<std::size_t>(i)];
        pick = i;
        if (cum > target) break;
      }
    }
    if (pick < 0) {
      for (Eigen::Index i = 0; i < n && pick < 0; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) pick = i;
    }
    chosen[static_cast<std::size_t>(pick)] = true;
    centroids.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], squared_distance(x, i, centroids, c));
  }

  ClusteringResult r;
  r.k = k;
  r.assignments.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t iter = 1; iter <= config.max_iter; ++iter) {
    r.iterations = iter;
    std::vector<Real> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      r.assignments[static_cast<std::size_t>(i)] = nearest(x, i, centroids, &dist[static_cast<std::size_t>(i)]);

    Mat next = Mat::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto a = r.assignments[static_cast<std::size_t>(i)];
      next.row(a) += x.row(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      // Re-seed with the farthest point that is not alone in its cluster.
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto a = r.assignments[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] < 2) continue;
        if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      if (far < 0) continue;
      const auto old = r.assignments[static_cast<std::size_t>(far)];
      next.row(old) -= x.row(far);
      --counts[static_cast<std::size_t>(old)];
      next.row(c) = x.row(far);
      counts[static_cast<std::size_t>(c)] = 1;
      r.assignments[static_cast<std::size_t>(far)] = c;
      dist[static_cast<std::size_t>(far)] = 0;
    }
    Real shift = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) next.row(c) /= static_cast<Real>(counts[static_cast<std::size_t>(c)]);
      else next.row(c) = centroids.row(c);
      shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
    }
    centroids = std::move(next);
    if (shift < config.tol) break;
  }
  r.inertia = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Real d = 0;
    r.assignments[static_cast<std::size_t>(i)] = nearest(x, i, centroids, &d);
    r.inertia += d;
  }
  r.centroids = std::move(centroids);
  return r;
}

std::vector<Eigen::Index> hungarian_max(const Matrix<std::int64_t>& profit) {
  const Eigen::Index n = profit.rows();
  if (profit.cols() != n) throw DimensionError("hungarian_max: profit matrix must be square");
  if (n == 0) return {};
  const std::int64_t top = profit.maxCoeff();
  // Minimize cost = top − profit; 1-based potentials formulation.
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
  std::vector<Eigen::Index> p(n + 1, 0), way(n + 1, 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<std::int64_t> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Eigen::Index i0 = p[j0];
      std::int64_t delta = kInf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = (top - profit(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> assignment(n, -1);
  for (Eigen::Index j = 1; j <= n; ++j)
    if (p[j] > 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

ClusteringScores clustering_metrics(const std::vector<Eigen::Index>& assignments,
                                    const std::vector<Label>& gold) {
  if (assignments.size() != gold.size()) {
    throw DimensionError("clustering_metrics: " + std::to_string(assignments.size()) +
                         " assignments for " + std::to_string(gold.size()) + " labels");
  }
  ClusteringScores s;
  const auto n = static_cast<std::int64_t>(gold.size());
  if (n == 0) return s;

  std::map<Eigen::Index, Eigen::Index> cluster_ix;
  std::map<Label, Eigen::Index> label_ix;
  for (auto a : assignments) cluster_ix.emplace(a, 0);
  for (auto g : gold) label_ix.emplace(g, 0);
  Eigen::Index next = 0;
  for (auto& [_, ix] : cluster_ix) ix = next++;
  next = 0;
  for (auto& [_, ix] : label_ix) ix = next++;
  const auto rows = static_cast<Eigen::Index>(cluster_ix.size());
  const auto cols = static_cast<Eigen::Index>(label_ix.size());
  Matrix<std::int64_t> table = Matrix<std::int64_t>::Zero(rows, cols);
  for (std::size_t i = 0; i < gold.size(); ++i) ++table(cluster_ix[assignments[i]], label_ix[gold[i]]);

  // ACC
  const Eigen::Index side = std::max(rows, cols);
  Matrix<std::int64_t> square = Matrix<std::int64_t>::Zero(side, side);
  square.topLeftCorner(rows, cols) = table;
  const auto match = hungarian_max(square);
  std::int64_t matched = 0;
  for (Eigen::Index r = 0; r < side; ++r) matched += square(r, match[r]);
  s.acc = static_cast<Real>(matched) / static_cast<Real>(n);

  // ARI from integer pair counts; a single division keeps it exactly rounded.
  auto pairs = [](std::int64_t m) { return m * (m - 1) / 2; };
  std::int64_t index = 0, a = 0, b = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) index += pairs(table(r, c));
  for (Eigen::Index r = 0; r < rows; ++r) a += pairs(table.row(r).sum());
  for (Eigen::Index c = 0; c < cols; ++c) b += pairs(table.col(c).sum());
  const std::int64_t total = pairs(n);
  const std::int64_t num = 2 * (index * total - a * b);
  const std::int64_t den = (a + b) * total - 2 * a * b;
  s.ari = den == 0 ? 1.0 : static_cast<Real>(num) / static_cast<Real>(den);

  // NMI
  bool one_to_one = rows == cols;
  for (Eigen::Index r = 0; r < rows && one_to_one; ++r) one_to_one = (table.row(r).array() > 0).count() == 1;
  for (Eigen::Index c = 0; c < cols && one_to_one; ++c) one_to_one = (table.col(c).array() > 0).count() == 1;
  if (one_to_one) {
    s.nmi = 1.0;
  } else {
    const Real nn = static_cast<Real>(n);
    Real hu = 0, hv = 0, mi = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Real p = static_cast<Real>(table.row(r).sum()) / nn;
      hu -= p * std::log(p);
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Real p = static_cast<Real>(table.col(c).sum()) / nn;
      hv -= p * std::log(p);
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Real pr = static_cast<Real>(table.row(r).sum()) / nn;
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (table(r, c) == 0) continue;
        const Real pc = static_cast<Real>(table.col(c).sum()) / nn;
        const Real pj = static_cast<Real>(table(r, c)) / nn;
        mi += pj * std::log(pj / (pr * pc));
      }
    }
    s.nmi = (hu <= 0 || hv <= 0) ? 0.0 : std::clamp(mi / std::sqrt(hu * hv), 0.0, 1.0);
  }
  return s;
}

Real f1_score(const std::vector<bool>& predictions, const std::vector<bool>& gold) {
  if (predictions.size() != gold.size()) {
    throw DimensionError("f1_score: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(gold.size()) + " labels");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    tp += predictions[i] && gold[i];
    fp += predictions[i] && !gold[i];
    fn += !predictions[i] && gold[i];
  }
  const Real precision = tp + fp == 0 ? 0.0 : static_cast<Real>(tp) / static_cast<Real>(tp + fp);
  const Real recall = tp + fn == 0 ? 0.0 : static_cast<Real>(tp) / static_cast<Real>(tp + fn);
  if (precision + recall == 0) return 0.0;
  return 2 * precision * recall / (precision + recall);
}

ClusteringResult cluster_embeddings(const Mat& x, Eigen::Index k, Eigen::Index out_dim, std::uint64_t seed) {
  const Eigen::Index limit = std::min(x.rows(), x.cols());
  const auto full = pca(x, limit);
  const Eigen::Index dim = std::clamp(std::min(out_dim, numeric_rank(full.eigenvalues)), Eigen::Index{1}, limit);
  const Mat projected = full.projected.leftCols(dim);
  KMeansConfig cfg;
  cfg.seed = seed;
  return kmeans(projected, k, cfg);
}

ClusteringResult cluster_products(const Mat& text, const Mat& image, Eigen::Index k,
                                  Eigen::Index out_dim, std::uint64_t seed) {
  if (text.rows() != image.rows()) {
    throw DimensionError("cluster_products: " + std::to_string(text.rows()) + " text rows vs " +
                         std::to_string(image.rows()) + " image rows");
  }
  Mat joined(text.rows(), text.cols() + image.cols());
  joined << text, image;
  return cluster_embeddings(joined, k, out_dim, seed);
}

}  // namespace eclip
