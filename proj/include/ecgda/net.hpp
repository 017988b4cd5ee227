#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ecgda/beat_types.hpp"
#include "ecgda/tape.hpp"

namespace ecgda {

struct NetConfig {
  std::vector<int> channels{16, 32, 64};  // residual block output channels
  int kernel = 5;                         // deep-path kernel; shortcut is kernel 1
  int fc1 = 64;
  int fc2 = 32;
  int n_time = 3;
  int n_classes = kNumClasses;

  int feature_dim() const { return channels.back(); }
};

uint64_t architecture_hash(const NetConfig& cfg);

// z-normalization for the three RR features, fit on the source domain only.
struct TimeFeatNormalizer {
  std::array<float, 3> mean{0, 0, 0};
  std::array<float, 3> stddev{1, 1, 1};

  void fit(const LabeledDataset& ds);
  std::vector<float> apply(const LabeledDataset& ds) const;           // flattened [N,3]
  void apply_row(const float* in, float* out) const;
};

// Residual 1D-conv feature extractor F and two parallel classifiers C1, C2.
// Each block: relu(conv_k(relu(conv_k(x))) + conv_1(x)), then maxpool(2,2);
// global average pooling over time yields a fixed-width feature vector.
class Network {
 public:
  Network(NetConfig cfg, uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  std::vector<ad::Param*> params();
  std::vector<const ad::Param*> params() const;

  // batch [B,L] -> features [B, feature_dim]; L must be >= 8
  ad::Var extract(ad::Tape& tape, ad::Var batch);
  // features + normalized time features -> (logits1, logits2), each [B,K]
  std::pair<ad::Var, ad::Var> classify(ad::Tape& tape, ad::Var features, ad::Var time_feats);

  uint64_t param_checksum() const;

 private:
  ad::Param& add_param(std::string name, ad::Shape shape);
  void init_params(uint64_t seed);
  ad::Var classifier_head(ad::Tape& tape, ad::Var features, ad::Var time_feats, int which);

  NetConfig cfg_;
  std::deque<ad::Param> store_;
  std::vector<ad::Param*> order_;
};

struct Combined {
  ad::Tensor probs;            // [B,K], mean of the two softmax outputs
  std::vector<int> predicted;  // argmax per row, ties to the lowest class index
};

Combined combine(const ad::Tensor& logits1, const ad::Tensor& logits2);
Combined combine_probs(const std::vector<float>& p1, const std::vector<float>& p2, int B, int K);

// Model sidecar describing the trained artifact: architecture, input length,
// preprocessing constants and normalizer stats. Needed to evaluate later.
struct ModelMeta {
  NetConfig net;
  int input_len = 0;
  int rr_mean = 0;
  int target_fs = 256;
  TimeFeatNormalizer normalizer;
  std::array<float, kNumClasses> class_weights{1, 1, 1, 1};

  void save(const std::filesystem::path& path) const;
  static ModelMeta load(const std::filesystem::path& path);
};

}  // namespace ecgda
