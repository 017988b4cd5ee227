#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ecgda/adam.hpp"
#include "ecgda/clusters.hpp"
#include "ecgda/eval_report.hpp"
#include "ecgda/losses.hpp"
#include "ecgda/net.hpp"
#include "ecgda/signal_prep.hpp"

namespace ecgda {

enum class ClassWeightMode { Balanced, Uniform };

struct TrainConfig {
  int e1 = 30;
  int e2 = 10;
  int e3 = 20;
  int batch_size = 512;
  float lr = 0.001f;
  float weight_decay = 0.0005f;
  uint64_t seed = 0;
  losses::LossWeights weights;
  losses::DroMode dro_mode = losses::DroMode::Max;
  float dro_eta = 0.01f;
  bool refresh_target_centroids = true;
  AugmentFactors augment_factors = kDefaultAugment;
  ClassWeightMode class_weight_mode = ClassWeightMode::Balanced;
  float confidence_threshold = 0.99f;
  NetConfig net;

  void validate() const;
};

// Flattened, net-ready view of a dataset.
struct PreparedDataset {
  int L = 0;
  int64_t n = 0;
  std::vector<float> waves;     // n*L
  std::vector<float> time_raw;  // n*3, seconds
  std::vector<int> labels;      // -1 = unlabeled
  std::array<int64_t, kNumClasses> counts{};
  Domain domain = Domain::Source;

  static PreparedDataset from(const LabeledDataset& ds);
};

struct EpochRecord {
  int epoch = 0;
  std::map<std::string, double> losses;  // per-component epoch means, plus "total"
  std::array<int64_t, kNumClasses> confident_counts{};
};

struct StageReport {
  std::string stage;
  uint64_t seed = 0;
  int64_t steps = 0;
  double wall_seconds = 0.0;  // console diagnostics only, never serialized
  std::vector<EpochRecord> epochs;
};

// One line-delimited JSON record per epoch. Wall time is excluded so artifact
// bytes depend only on seed/config/inputs.
void save_stage_report(const std::filesystem::path& path, const StageReport& report);

std::array<float, kNumClasses> class_weights_for(const PreparedDataset& source,
                                                 ClassWeightMode mode);

// Full no-update pass: features and both classifiers' probabilities.
struct ForwardPass {
  int feature_dim = 0;
  std::vector<float> features;  // n*D
  std::vector<float> probs1, probs2, probs;  // n*K; probs = combined
  std::vector<int> predicted;
};
ForwardPass full_forward(Network& net, const PreparedDataset& ds, const ModelMeta& meta,
                         int batch_size);

// Stage 1: weighted CE under group DRO plus classifier discrepancy.
StageReport pretrain(Network& net, const PreparedDataset& source, const TrainConfig& cfg,
                     const ModelMeta& meta);

// Stage 2: organize source clusters; fills cc_s, m_ctr, m_dis of `state`.
StageReport organize_source_clusters(Network& net, const PreparedDataset& source,
                                     const TrainConfig& cfg, const ModelMeta& meta,
                                     ClusterState& state);

// Confident-prediction selection and target centroids (cc_t, cc_m).
void build_target_centroids(Network& net, const PreparedDataset& target, const TrainConfig& cfg,
                            const ModelMeta& meta, ClusterState& state);

// Stage 3: domain adaptation per the combined objective.
StageReport adapt(Network& net, const PreparedDataset& source, const PreparedDataset& target,
                  ClusterState& state, const TrainConfig& cfg, const ModelMeta& meta);

// ---- full pipeline ----

struct PipelineOptions {
  bool run_stage2 = true;
  bool run_stage3 = true;       // stage-1-only = the no-adaptation baseline
  bool augment_eval = true;     // duplicate target classes before evaluation
  bool write_heatmap = false;
  std::string channel_source;   // empty = first channel
  std::string channel_target;
};

struct LoadedDomain {
  LabeledDataset data;  // unaugmented
  int rr_mean = 0;
  PrepStats stats;
};

// `path` is either a record-tree directory or a segment-cache file. For the
// target, pass the source rr_mean so both domains share one segment length.
LoadedDomain load_domain(const std::filesystem::path& path, const std::string& channel,
                         const PrepConfig& prep, Domain domain, int rr_mean_override = 0);

struct PipelineResult {
  std::unique_ptr<Network> net;
  ModelMeta meta;
  ClusterState clusters;
  std::vector<StageReport> reports;
  bool has_metrics = false;
  MetricsReport metrics;
  ConfusionMatrix confusion;
};

// record-io -> signal-prep -> pretrain -> organize clusters -> confident
// selection -> adapt -> evaluate; persists stage checkpoints, cluster state,
// reports, and metrics under out_dir.
PipelineResult run_pipeline(const std::filesystem::path& source_path,
                            const std::filesystem::path& target_path, const TrainConfig& cfg,
                            const PrepConfig& prep, const PipelineOptions& opts,
                            const std::filesystem::path& out_dir);

}  // namespace ecgda
