#pragma once

// Downstream evaluation: zero-shot transfer, nearest-neighbour matching,
// linear probing, fine-tuning, PCA + k-means clustering and the usual
// clustering/classification scores.

#include <cstdint>
#include <optional>
#include <vector>

#include "eclip/encoder.hpp"
#include "eclip/train.hpp"

namespace eclip {

using Label = std::int64_t;

struct LabeledEmbeddings {
  Mat embeddings;  // unit rows
  std::vector<Label> labels;

  Eigen::Index size() const { return embeddings.rows(); }
  void validate() const;
};

enum class Modality { image, text, multimodal };

std::string to_string(Modality m);

/// argmax_k ⟨item, class_k⟩, ties to the lowest class index. In multimodal
/// mode the item vector is the normalized mean of its image and text rows.
std::vector<Eigen::Index> zero_shot_classify(const Mat& item_image, const Mat* item_text,
                                             const Mat& class_text, Modality mode);

/// Normalized (x + y)/2 per row.
Mat multimodal_embeddings(const Mat& image, const Mat& text);

/// Fraction of queries whose most similar pool row carries the same label.
/// With `leave_one_out`, query i is pool row i and is skipped as a
/// candidate.
Real top1_matching_accuracy(const LabeledEmbeddings& queries, const LabeledEmbeddings& pool,
                            bool leave_one_out = false);

struct ProbeConfig {
  std::size_t epochs = 200;
  Real learning_rate = 0.05;
  Real weight_decay = 0.0;
};

/// Softmax regression on frozen embeddings, trained full-batch with AdamW.
/// Returns test accuracy; test labels absent from training count as errors.
Real linear_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& test,
                  const ProbeConfig& config = {});

/// Same protocol for binary targets; returns F1 of the positive class.
Real linear_probe_f1(const LabeledEmbeddings& train, const LabeledEmbeddings& test,
                     const ProbeConfig& config = {});

/// End-to-end training of one encoder tower plus a softmax head on raw
/// features; returns test accuracy. The given parameters are copied.
Real fine_tune(const ParamSet& encoder, const EncoderSpec& spec, const Mat& train_features,
               const std::vector<Label>& train_labels, const Mat& test_features,
               const std::vector<Label>& test_labels, const ProbeConfig& config = {});

struct PcaResult {
  Mat projected;      // N×out_dim
  Mat components;     // d×out_dim, orthonormal columns
  RowVector<Real> mean;
  Vec eigenvalues;    // descending, all d of them
};

/// Principal components of the covariance of centered X. Each component is
/// signed so its largest-magnitude coordinate is positive.
PcaResult pca(const Mat& x, Eigen::Index out_dim);
Mat pca_project(const Mat& x, Eigen::Index out_dim);

/// Number of covariance eigenvalues above 1e-10 × the largest.
Eigen::Index numeric_rank(const Vec& eigenvalues);

struct ClusteringResult {
  std::vector<Eigen::Index> assignments;
  Eigen::Index k = 0;
  Mat centroids;
  Real inertia = 0;
  std::size_t iterations = 0;
};

struct KMeansConfig {
  std::uint64_t seed = 0;
  std::size_t max_iter = 300;
  Real tol = 1e-6;
};

/// k-means++ seeding then Lloyd iterations; empty clusters are re-seeded
/// with the point farthest from its centroid.
ClusteringResult kmeans(const Mat& x, Eigen::Index k, const KMeansConfig& config = {});

struct ClusteringScores {
  Real acc = 0;
  Real nmi = 0;
  Real ari = 0;
};

/// ACC via optimal one-to-one cluster→label matching (Hungarian), NMI with
/// sqrt normalization, ARI (Hubert–Arabie).
ClusteringScores clustering_metrics(const std::vector<Eigen::Index>& assignments,
                                    const std::vector<Label>& gold);

/// Max-weight perfect matching on a square profit matrix; returns the column
/// assigned to each row.
std::vector<Eigen::Index> hungarian_max(const Matrix<std::int64_t>& profit);

Real f1_score(const std::vector<bool>& predictions, const std::vector<bool>& gold);

/// PCA to min(out_dim, rank) then k-means.
ClusteringResult cluster_embeddings(const Mat& x, Eigen::Index k, Eigen::Index out_dim, std::uint64_t seed);

/// Concatenate [text | image], project with PCA to min(out_dim, rank) and
/// cluster with k-means.
ClusteringResult cluster_products(const Mat& text, const Mat& image, Eigen::Index k,
                                  Eigen::Index out_dim, std::uint64_t seed);

Real accuracy(const std::vector<Eigen::Index>& predicted, const std::vector<Label>& gold);

}  // namespace eclip
