#include "ecgda/eval_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "ecgda/png_writer.hpp"

namespace ecgda {

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (const auto& row : m)
    for (int64_t v : row) t += v;
  return t;
}

int64_t ConfusionMatrix::trace() const {
  int64_t t = 0;
  for (int k = 0; k < kNumClasses; ++k) t += at(k, k);
  return t;
}

int64_t ConfusionMatrix::row_sum(int t) const {
  int64_t s = 0;
  for (int p = 0; p < kNumClasses; ++p) s += at(t, p);
  return s;
}

int64_t ConfusionMatrix::col_sum(int p) const {
  int64_t s = 0;
  for (int t = 0; t < kNumClasses; ++t) s += at(t, p);
  return s;
}

double f1_from_se_ppv(double se, double ppv) {
  const double denom = se + ppv;
  return denom > 0.0 ? 2.0 * se * ppv / denom : 0.0;
}

MetricsReport metrics_from(const ConfusionMatrix& cm, std::string dataset_id,
                           std::string model_id, bool augmented) {
  MetricsReport r;
  r.dataset_id = std::move(dataset_id);
  r.model_id = std::move(model_id);
  r.augmented = augmented;
  const int64_t total = cm.total();
  r.overall_accuracy = total > 0 ? 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    ClassMetrics& c = r.classes[static_cast<size_t>(k)];
    const int64_t tp = cm.at(k, k);
    const int64_t actual = cm.row_sum(k);
    const int64_t predicted = cm.col_sum(k);
    if (actual > 0) c.se = 100.0 * static_cast<double>(tp) / static_cast<double>(actual);
    if (predicted > 0) c.ppv = 100.0 * static_cast<double>(tp) / static_cast<double>(predicted);
    c.f1 = (c.se && c.ppv) ? f1_from_se_ppv(*c.se, *c.ppv) : 0.0;
  }
  return r;
}

ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth,
                                           const std::vector<int>& predicted) {
  if (truth.size() != predicted.size())
    throw std::invalid_argument("confusion_from_predictions: size mismatch");
  ConfusionMatrix cm;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= kNumClasses || predicted[i] < 0 || predicted[i] >= kNumClasses)
      throw std::invalid_argument("confusion_from_predictions: class index out of range");
    cm.at(truth[i], predicted[i])++;
  }
  return cm;
}

ConfusionMatrix evaluate(Network& net, const LabeledDataset& ds,
                         const TimeFeatNormalizer& normalizer, int batch_size) {
  ConfusionMatrix cm;
  std::vector<size_t> labeled;
  for (size_t i = 0; i < ds.segments.size(); ++i)
    if (ds.segments[i].label) labeled.push_back(i);
  if (labeled.empty()) return cm;
  const int L = static_cast<int>(ds.segments[labeled[0]].waveform.size());
  for (size_t start = 0; start < labeled.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(labeled.size(), start + static_cast<size_t>(batch_size));
    const int B = static_cast<int>(end - start);
    ad::Tensor waves = ad::Tensor::zeros({B, L});
    ad::Tensor tf = ad::Tensor::zeros({B, 3});
    std::vector<int> truth(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
      const BeatSegment& s = ds.segments[labeled[start + static_cast<size_t>(b)]];
      std::copy(s.waveform.begin(), s.waveform.end(), waves.data.begin() + static_cast<int64_t>(b) * L);
      const float raw[3] = {s.rr_curr, s.rr_pre, s.rr_pre8};
      normalizer.apply_row(raw, &tf.data[static_cast<size_t>(b) * 3]);
      truth[static_cast<size_t>(b)] = class_index(*s.label);
    }
    ad::Tape tape;
    ad::Var feats = net.extract(tape, tape.input(waves));
    auto [l1, l2] = net.classify(tape, feats, tape.input(tf));
    Combined c = combine(ad::Tensor(l1.shape(), l1.val()), ad::Tensor(l2.shape(), l2.val()));
    for (int b = 0; b < B; ++b) cm.at(truth[static_cast<size_t>(b)], c.predicted[static_cast<size_t>(b)])++;
  }
  return cm;
}

namespace {

nlohmann::ordered_json round2_or_null(const std::optional<double>& v) {
  if (!v) return nullptr;
  return std::round(*v * 100.0) / 100.0;
}

}  // namespace

void emit_report(const MetricsReport& report, const ConfusionMatrix& cm,
                 const std::filesystem::path& out_dir, bool heatmap) {
  std::filesystem::create_directories(out_dir);
  {
    nlohmann::ordered_json j;
    j["dataset"] = report.dataset_id;
    j["model"] = report.model_id;
    j["augmented"] = report.augmented;
    j["overall_accuracy"] = std::round(report.overall_accuracy * 100.0) / 100.0;
    nlohmann::ordered_json cls;
    for (int k = 0; k < kNumClasses; ++k) {
      const ClassMetrics& c = report.classes[static_cast<size_t>(k)];
      nlohmann::ordered_json e;
      e["se"] = round2_or_null(c.se);
      e["ppv"] = round2_or_null(c.ppv);
      e["f1"] = std::round(c.f1 * 100.0) / 100.0;
      cls[class_name(class_from_index(k))] = e;
    }
    j["classes"] = cls;
    std::ofstream out(out_dir / "metrics.json");
    if (!out) throw std::runtime_error("emit_report: cannot write metrics.json");
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(out_dir / "confusion.csv");
    if (!out) throw std::runtime_error("emit_report: cannot write confusion.csv");
    out << "true\\pred";
    for (int p = 0; p < kNumClasses; ++p) out << "," << class_name(class_from_index(p));
    out << "\n";
    for (int t = 0; t < kNumClasses; ++t) {
      out << class_name(class_from_index(t));
      for (int p = 0; p < kNumClasses; ++p) out << "," << cm.at(t, p);
      out << "\n";
    }
  }
  if (heatmap) {
    const int cell = 64, w = cell * kNumClasses, h = cell * kNumClasses;
    std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3, 255);
    for (int t = 0; t < kNumClasses; ++t) {
      const int64_t row_total = std::max<int64_t>(1, cm.row_sum(t));
      for (int p = 0; p < kNumClasses; ++p) {
        const double frac = static_cast<double>(cm.at(t, p)) / static_cast<double>(row_total);
        const uint8_t r = static_cast<uint8_t>(255.0 * frac);
        const uint8_t b = static_cast<uint8_t>(255.0 * (1.0 - frac));
        for (int y = t * cell; y < (t + 1) * cell; ++y)
          for (int x = p * cell; x < (p + 1) * cell; ++x) {
            const size_t i = (static_cast<size_t>(y) * w + static_cast<size_t>(x)) * 3;
            const bool grid = y % cell == 0 || x % cell == 0;
            rgb[i] = grid ? 0 : r;
            rgb[i + 1] = grid ? 0 : static_cast<uint8_t>(64.0 * frac);
            rgb[i + 2] = grid ? 0 : b;
          }
      }
    }
    write_png_rgb(out_dir / "confusion.png", w, h, rgb);
  }
}

MetricsReport load_metrics(const std::filesystem::path& metrics_json) {
  std::ifstream in(metrics_json);
  if (!in) throw std::runtime_error("load_metrics: cannot open " + metrics_json.string());
  nlohmann::json j;
  in >> j;
  MetricsReport r;
  r.dataset_id = j.at("dataset").get<std::string>();
  r.model_id = j.at("model").get<std::string>();
  r.augmented = j.at("augmented").get<bool>();
  r.overall_accuracy = j.at("overall_accuracy").get<double>();
  for (int k = 0; k < kNumClasses; ++k) {
    const auto& e = j.at("classes").at(class_name(class_from_index(k)));
    ClassMetrics& c = r.classes[static_cast<size_t>(k)];
    if (!e.at("se").is_null()) c.se = e.at("se").get<double>();
    if (!e.at("ppv").is_null()) c.ppv = e.at("ppv").get<double>();
    c.f1 = e.at("f1").get<double>();
  }
  return r;
}

double macro_f1(const MetricsReport& report) {
  double sum = 0.0;
  for (const auto& c : report.classes) sum += c.f1;
  return sum / kNumClasses;
}

}  // namespace ecgda
