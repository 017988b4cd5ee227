#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ecgda/beat_types.hpp"
#include "ecgda/net.hpp"

namespace ecgda {

struct ConfusionMatrix {
  // rows = true class, columns = predicted class
  std::array<std::array<int64_t, kNumClasses>, kNumClasses> m{};

  int64_t& at(int t, int p) { return m[static_cast<size_t>(t)][static_cast<size_t>(p)]; }
  int64_t at(int t, int p) const { return m[static_cast<size_t>(t)][static_cast<size_t>(p)]; }
  int64_t total() const;
  int64_t trace() const;
  int64_t row_sum(int t) const;  // TP + FN
  int64_t col_sum(int p) const;  // TP + FP
};

struct ClassMetrics {
  std::optional<double> se;   // percent; nullopt when no true samples
  std::optional<double> ppv;  // percent; nullopt when no predictions
  double f1 = 0.0;            // percent; 0 when either side is undefined
};

struct MetricsReport {
  std::string dataset_id;
  std::string model_id;
  bool augmented = false;
  double overall_accuracy = 0.0;  // percent
  std::array<ClassMetrics, kNumClasses> classes;
};

// F1 from percentage Se/PPV: 2*se*ppv/(se+ppv), 0 when the denominator is 0.
double f1_from_se_ppv(double se, double ppv);

MetricsReport metrics_from(const ConfusionMatrix& cm, std::string dataset_id,
                           std::string model_id, bool augmented);

ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth,
                                           const std::vector<int>& predicted);

// Runs the combined classifier over a labeled dataset. Unlabeled segments are
// skipped. Never mutates parameters.
ConfusionMatrix evaluate(Network& net, const LabeledDataset& ds,
                         const TimeFeatNormalizer& normalizer, int batch_size = 512);

// Writes metrics.json and confusion.csv (and confusion.png when heatmap=true).
void emit_report(const MetricsReport& report, const ConfusionMatrix& cm,
                 const std::filesystem::path& out_dir, bool heatmap = false);

MetricsReport load_metrics(const std::filesystem::path& metrics_json);

double macro_f1(const MetricsReport& report);

}  // namespace ecgda
