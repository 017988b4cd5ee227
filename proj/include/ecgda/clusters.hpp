#pragma once

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

#include "ecgda/beat_types.hpp"

namespace ecgda {

// Per-class centroids and selection statistics from the cluster-computing
// stage. Invariant: cc_m[k] = (cc_s[k] + cc_t[k]) / 2 for every class.
struct ClusterState {
  int feature_dim = 0;
  std::array<std::vector<float>, kNumClasses> cc_s;
  std::array<std::vector<float>, kNumClasses> cc_t;
  std::array<std::vector<float>, kNumClasses> cc_m;
  std::array<float, kNumClasses> m_ctr{};
  float m_dis = 0.0f;
  std::array<int64_t, kNumClasses> confident_count{};
  std::array<bool, kNumClasses> cc_t_fallback{};  // class had no confident samples

  void recompute_cc_m();
  void save(const std::filesystem::path& path) const;
  static ClusterState load(const std::filesystem::path& path);
};

// Per-class arithmetic mean of feature rows. Errors listing any class with no
// samples.
std::array<std::vector<float>, kNumClasses> compute_centroids(const std::vector<float>& features,
                                                              int feature_dim,
                                                              const std::vector<int>& labels);

// M_ctr per class: mean distance of class members to their centroid.
std::array<float, kNumClasses> mean_intra_cluster_distance(
    const std::vector<float>& features, int feature_dim, const std::vector<int>& labels,
    const std::array<std::vector<float>, kNumClasses>& centroids);

// M_dis: mean Euclidean distance between the two classifiers' probability rows.
float mean_classifier_discrepancy(const std::vector<float>& probs1,
                                  const std::vector<float>& probs2, int n, int k);

struct ConfidentSelection {
  std::vector<std::pair<int, int>> picks;  // (sample index, pseudo label)
  std::array<int64_t, kNumClasses> per_class{};
};

// Triple gate: combined softmax > threshold, feature distance to the predicted
// class's source centroid strictly below M_ctr[k], classifier discrepancy
// strictly below M_dis.
ConfidentSelection select_confident(const std::vector<float>& target_features, int feature_dim,
                                    const std::vector<float>& probs,
                                    const std::vector<float>& probs1,
                                    const std::vector<float>& probs2,
                                    const std::array<std::vector<float>, kNumClasses>& cc_s,
                                    const std::array<float, kNumClasses>& m_ctr, float m_dis,
                                    float threshold = 0.99f);

// Per-class mean over confident samples; empty classes fall back to the source
// centroid and are flagged.
void compute_target_centroids(const ConfidentSelection& confident,
                              const std::vector<float>& target_features, int feature_dim,
                              ClusterState& state);

float euclidean(const float* a, const float* b, int dim);

}  // namespace ecgda
