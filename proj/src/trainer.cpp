#include "ecgda/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "ecgda/checkpoint.hpp"
#include "ecgda/rng.hpp"

namespace ecgda {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
  if (e1 < 1 || e2 < 1 || e3 < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < kNumClasses)
    throw std::invalid_argument("TrainConfig: batch_size must be >= " + std::to_string(kNumClasses));
  if (lr <= 0.0f) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (confidence_threshold <= 0.0f || confidence_threshold >= 1.0f)
    throw std::invalid_argument("TrainConfig: confidence threshold must lie in (0,1)");
}

PreparedDataset PreparedDataset::from(const LabeledDataset& ds) {
  PreparedDataset out;
  out.domain = ds.domain;
  out.n = static_cast<int64_t>(ds.segments.size());
  if (out.n == 0) return out;
  out.L = static_cast<int>(ds.segments[0].waveform.size());
  out.waves.resize(static_cast<size_t>(out.n) * out.L);
  out.time_raw.resize(static_cast<size_t>(out.n) * 3);
  out.labels.resize(static_cast<size_t>(out.n), -1);
  for (int64_t i = 0; i < out.n; ++i) {
    const BeatSegment& s = ds.segments[static_cast<size_t>(i)];
    if (static_cast<int>(s.waveform.size()) != out.L)
      throw std::invalid_argument("PreparedDataset: unequal segment lengths");
    std::copy(s.waveform.begin(), s.waveform.end(), out.waves.begin() + i * out.L);
    out.time_raw[static_cast<size_t>(i) * 3 + 0] = s.rr_curr;
    out.time_raw[static_cast<size_t>(i) * 3 + 1] = s.rr_pre;
    out.time_raw[static_cast<size_t>(i) * 3 + 2] = s.rr_pre8;
    if (s.label) {
      out.labels[static_cast<size_t>(i)] = class_index(*s.label);
      out.counts[static_cast<size_t>(class_index(*s.label))]++;
    }
  }
  return out;
}

std::array<float, kNumClasses> class_weights_for(const PreparedDataset& source,
                                                 ClassWeightMode mode) {
  std::array<float, kNumClasses> w{1, 1, 1, 1};
  if (mode == ClassWeightMode::Uniform) return w;
  int64_t total = 0;
  for (int64_t c : source.counts) total += c;
  for (int k = 0; k < kNumClasses; ++k) {
    const int64_t nk = source.counts[static_cast<size_t>(k)];
    if (nk == 0)
      throw std::invalid_argument(std::string("class_weights_for: class ") +
                                  class_name(class_from_index(k)) + " absent from source");
    w[static_cast<size_t>(k)] =
        static_cast<float>(static_cast<double>(total) / (kNumClasses * static_cast<double>(nk)));
  }
  return w;
}

namespace {

struct BatchVars {
  Var waves;
  Var time_feats;
  std::vector<int> labels;
};

BatchVars stage_batch(Tape& tape, const PreparedDataset& ds, const ModelMeta& meta,
                      const std::vector<int64_t>& order, size_t lo, size_t hi) {
  const int B = static_cast<int>(hi - lo);
  Tensor waves = Tensor::zeros({B, ds.L});
  Tensor tf = Tensor::zeros({B, 3});
  BatchVars out;
  out.labels.resize(static_cast<size_t>(B), -1);
  for (int b = 0; b < B; ++b) {
    const int64_t i = order[lo + static_cast<size_t>(b)];
    std::copy(ds.waves.begin() + i * ds.L, ds.waves.begin() + (i + 1) * ds.L,
              waves.data.begin() + static_cast<int64_t>(b) * ds.L);
    meta.normalizer.apply_row(&ds.time_raw[static_cast<size_t>(i) * 3],
                              &tf.data[static_cast<size_t>(b) * 3]);
    out.labels[static_cast<size_t>(b)] = ds.labels[static_cast<size_t>(i)];
  }
  out.waves = tape.input(waves);
  out.time_feats = tape.input(tf);
  return out;
}

std::vector<int64_t> epoch_order(const PreparedDataset& ds, uint64_t seed, const char* stage,
                                 int epoch) {
  std::vector<int64_t> order(static_cast<size_t>(ds.n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, std::string("shuffle/") + stage, static_cast<uint64_t>(epoch));
  rng.shuffle(order);
  return order;
}

int64_t steps_per_epoch(int64_t n, int batch) {
  return std::max<int64_t>(1, n / batch);
}

Var classification_loss(Tape& tape, Var logits1, Var logits2, const std::vector<int>& labels,
                        const ModelMeta& meta, const TrainConfig& cfg, losses::DroState& dro) {
  Var ce1 = losses::weighted_ce(tape, logits1, labels, meta.class_weights);
  Var ce2 = losses::weighted_ce(tape, logits2, labels, meta.class_weights);
  Var per_sample = tape.affine(tape.add(ce1, ce2), 0.5f, 0.0f);  // mean of the two heads
  return losses::group_dro(tape, per_sample, labels, cfg.dro_mode, &dro);
}

Var centroids_const(Tape& tape, const std::array<std::vector<float>, kNumClasses>& cc, int dim) {
  std::vector<float> flat;
  flat.reserve(static_cast<size_t>(kNumClasses) * static_cast<size_t>(dim));
  for (const auto& row : cc) {
    if (static_cast<int>(row.size()) != dim)
      throw std::invalid_argument("centroids_const: centroid dim mismatch");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return tape.constant(std::move(flat), {kNumClasses, dim});
}

struct MeanTracker {
  std::map<std::string, double> sums;
  int64_t count = 0;
  void add(const std::string& key, double v) { sums[key] += v; }
  void tick() { ++count; }
  std::map<std::string, double> means() const {
    std::map<std::string, double> out;
    for (const auto& [k, v] : sums) out[k] = v / static_cast<double>(std::max<int64_t>(1, count));
    return out;
  }
};

}  // namespace

ForwardPass full_forward(Network& net, const PreparedDataset& ds, const ModelMeta& meta,
                         int batch_size) {
  ForwardPass out;
  const int D = net.config().feature_dim();
  const int K = net.config().n_classes;
  out.feature_dim = D;
  out.features.resize(static_cast<size_t>(ds.n) * D);
  out.probs1.resize(static_cast<size_t>(ds.n) * K);
  out.probs2.resize(static_cast<size_t>(ds.n) * K);
  out.probs.resize(static_cast<size_t>(ds.n) * K);
  out.predicted.resize(static_cast<size_t>(ds.n));
  std::vector<int64_t> order(static_cast<size_t>(ds.n));
  std::iota(order.begin(), order.end(), 0);
  for (int64_t lo = 0; lo < ds.n; lo += batch_size) {
    const int64_t hi = std::min<int64_t>(ds.n, lo + batch_size);
    Tape tape;
    BatchVars bv = stage_batch(tape, ds, meta, order, static_cast<size_t>(lo), static_cast<size_t>(hi));
    Var feats = net.extract(tape, bv.waves);
    auto [l1, l2] = net.classify(tape, feats, bv.time_feats);
    Var p1 = tape.softmax(l1);
    Var p2 = tape.softmax(l2);
    const auto& fv = feats.val();
    std::copy(fv.begin(), fv.end(), out.features.begin() + lo * D);
    std::copy(p1.val().begin(), p1.val().end(), out.probs1.begin() + lo * K);
    std::copy(p2.val().begin(), p2.val().end(), out.probs2.begin() + lo * K);
  }
  Combined comb = combine_probs(out.probs1, out.probs2, static_cast<int>(ds.n), K);
  out.probs = std::move(comb.probs.data);
  out.predicted = std::move(comb.predicted);
  return out;
}

StageReport pretrain(Network& net, const PreparedDataset& source, const TrainConfig& cfg,
                     const ModelMeta& meta) {
  cfg.validate();
  if (source.n == 0) throw std::invalid_argument("pretrain: empty source dataset");
  const auto t0 = std::chrono::steady_clock::now();
  StageReport report;
  report.stage = "pretrain";
  report.seed = cfg.seed;
  ad::Adam adam(net.params(), {cfg.lr, 0.9f, 0.999f, 1e-8f, cfg.weight_decay});
  losses::DroState dro{{0.25, 0.25, 0.25, 0.25}, cfg.dro_eta};

  for (int epoch = 1; epoch <= cfg.e1; ++epoch) {
    const auto order = epoch_order(source, cfg.seed, "stage1", epoch);
    const int64_t steps = steps_per_epoch(source.n, cfg.batch_size);
    MeanTracker track;
    for (int64_t j = 0; j < steps; ++j) {
      const size_t lo = static_cast<size_t>(j * cfg.batch_size);
      const size_t hi = std::min<size_t>(order.size(), lo + static_cast<size_t>(cfg.batch_size));
      Tape tape;
      BatchVars bv = stage_batch(tape, source, meta, order, lo, hi);
      Var feats = net.extract(tape, bv.waves);
      auto [l1, l2] = net.classify(tape, feats, bv.time_feats);
      Var l_cls = classification_loss(tape, l1, l2, bv.labels, meta, cfg, dro);
      Var l_dis = losses::discrepancy(tape, tape.softmax(l1), tape.softmax(l2));
      Var total = losses::pretrain_total(tape, l_cls, l_dis, cfg.weights.alpha);
      adam.zero_grad();
      tape.backward(total);
      adam.step();
      track.add("l_cls", l_cls.scalar());
      track.add("l_dis", l_dis.scalar());
      track.add("total", total.scalar());
      track.tick();
      ++report.steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.losses = track.means();
    report.epochs.push_back(std::move(rec));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

StageReport organize_source_clusters(Network& net, const PreparedDataset& source,
                                     const TrainConfig& cfg, const ModelMeta& meta,
                                     ClusterState& state) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  StageReport report;
  report.stage = "clusters";
  report.seed = cfg.seed;
  const int D = net.config().feature_dim();
  state.feature_dim = D;

  std::vector<int> labels(source.labels.begin(), source.labels.end());
  for (int y : labels)
    if (y < 0) throw std::invalid_argument("organize_source_clusters: source must be fully labeled");

  {
    ForwardPass fp = full_forward(net, source, meta, cfg.batch_size);
    state.cc_s = compute_centroids(fp.features, D, labels);
  }

  ad::Adam adam(net.params(), {cfg.lr, 0.9f, 0.999f, 1e-8f, cfg.weight_decay});
  losses::DroState dro{{0.25, 0.25, 0.25, 0.25}, cfg.dro_eta};
  for (int epoch = 1; epoch <= cfg.e2; ++epoch) {
    const auto order = epoch_order(source, cfg.seed, "stage2", epoch);
    const int64_t steps = steps_per_epoch(source.n, cfg.batch_size);
    MeanTracker track;
    for (int64_t j = 0; j < steps; ++j) {
      const size_t lo = static_cast<size_t>(j * cfg.batch_size);
      const size_t hi = std::min<size_t>(order.size(), lo + static_cast<size_t>(cfg.batch_size));
      Tape tape;
      BatchVars bv = stage_batch(tape, source, meta, order, lo, hi);
      Var feats = net.extract(tape, bv.waves);
      auto [l1, l2] = net.classify(tape, feats, bv.time_feats);
      Var l_cls = classification_loss(tape, l1, l2, bv.labels, meta, cfg, dro);
      Var cc_s = centroids_const(tape, state.cc_s, D);  // held fixed within the stage
      Var l_comp = losses::compacting(tape, feats, bv.labels, cc_s);
      Var l_sep = losses::separating(tape, cc_s, cfg.weights.t_m);
      Var total = losses::cluster_total(tape, l_cls, l_comp, l_sep, cfg.weights.gamma1,
                                        cfg.weights.gamma2);
      adam.zero_grad();
      tape.backward(total);
      adam.step();
      track.add("l_cls", l_cls.scalar());
      track.add("l_comp", l_comp.scalar());
      track.add("l_sep", l_sep.scalar());
      track.add("total", total.scalar());
      track.tick();
      ++report.steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.losses = track.means();
    report.epochs.push_back(std::move(rec));
  }

  // statistics follow the updated model
  {
    ForwardPass fp = full_forward(net, source, meta, cfg.batch_size);
    state.cc_s = compute_centroids(fp.features, D, labels);
    state.m_ctr = mean_intra_cluster_distance(fp.features, D, labels, state.cc_s);
    state.m_dis = mean_classifier_discrepancy(fp.probs1, fp.probs2, static_cast<int>(source.n),
                                              net.config().n_classes);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void build_target_centroids(Network& net, const PreparedDataset& target, const TrainConfig& cfg,
                            const ModelMeta& meta, ClusterState& state) {
  if (target.n == 0) throw std::invalid_argument("build_target_centroids: empty target dataset");
  ForwardPass fp = full_forward(net, target, meta, cfg.batch_size);
  ConfidentSelection sel =
      select_confident(fp.features, state.feature_dim, fp.probs, fp.probs1, fp.probs2, state.cc_s,
                       state.m_ctr, state.m_dis, cfg.confidence_threshold);
  compute_target_centroids(sel, fp.features, state.feature_dim, state);
}

StageReport adapt(Network& net, const PreparedDataset& source, const PreparedDataset& target,
                  ClusterState& state, const TrainConfig& cfg, const ModelMeta& meta) {
  cfg.validate();
  if (target.n == 0) throw std::invalid_argument("adapt: empty target dataset");
  for (int k = 0; k < kNumClasses; ++k)
    if (state.cc_t[static_cast<size_t>(k)].empty() || state.cc_m[static_cast<size_t>(k)].empty())
      throw std::invalid_argument("adapt: cluster state incomplete (run the cluster stage first)");
  const auto t0 = std::chrono::steady_clock::now();
  StageReport report;
  report.stage = "adapt";
  report.seed = cfg.seed;
  const int D = net.config().feature_dim();
  const int K = net.config().n_classes;

  ad::Adam adam(net.params(), {cfg.lr, 0.9f, 0.999f, 1e-8f, cfg.weight_decay});
  losses::DroState dro{{0.25, 0.25, 0.25, 0.25}, cfg.dro_eta};

  for (int epoch = 1; epoch <= cfg.e3; ++epoch) {
    const auto order = epoch_order(source, cfg.seed, "stage3", epoch);
    const int64_t steps = steps_per_epoch(source.n, cfg.batch_size);
    // target loader cycles with its own shuffle stream
    std::vector<int64_t> tgt_order(static_cast<size_t>(target.n));
    std::iota(tgt_order.begin(), tgt_order.end(), 0);
    uint64_t wrap = 0;
    {
      Rng rng(cfg.seed, "shuffle/stage3-target", static_cast<uint64_t>(epoch), wrap);
      rng.shuffle(tgt_order);
    }
    size_t tgt_cursor = 0;
    MeanTracker track;

    for (int64_t j = 0; j < steps; ++j) {
      const size_t lo = static_cast<size_t>(j * cfg.batch_size);
      const size_t hi = std::min<size_t>(order.size(), lo + static_cast<size_t>(cfg.batch_size));
      const size_t B = hi - lo;

      std::vector<int64_t> tgt_batch(B);
      for (size_t b = 0; b < B; ++b) {
        if (tgt_cursor >= tgt_order.size()) {
          ++wrap;
          Rng rng(cfg.seed, "shuffle/stage3-target", static_cast<uint64_t>(epoch), wrap);
          rng.shuffle(tgt_order);
          tgt_cursor = 0;
        }
        tgt_batch[b] = tgt_order[tgt_cursor++];
      }

      Tape tape;
      BatchVars bs = stage_batch(tape, source, meta, order, lo, hi);
      Var feats_s = net.extract(tape, bs.waves);
      auto [l1s, l2s] = net.classify(tape, feats_s, bs.time_feats);
      Var l_cls = classification_loss(tape, l1s, l2s, bs.labels, meta, cfg, dro);

      std::vector<int64_t> ident(tgt_batch.begin(), tgt_batch.end());
      BatchVars bt = stage_batch(tape, target, meta, ident, 0, B);
      Var feats_t = net.extract(tape, bt.waves);
      auto [l1t, l2t] = net.classify(tape, feats_t, bt.time_feats);
      Var p1t = tape.softmax(l1t);
      Var p2t = tape.softmax(l2t);
      // pseudo-labels: current combined argmax over the whole target batch
      Combined ct = combine_probs(p1t.val(), p2t.val(), static_cast<int>(B), K);
      const std::vector<int>& pseudo = ct.predicted;

      Var cc_s = centroids_const(tape, state.cc_s, D);
      Var cc_t = centroids_const(tape, state.cc_t, D);
      Var cc_m = centroids_const(tape, state.cc_m, D);

      Var l_comp_s = losses::compacting(tape, feats_s, bs.labels, cc_s);
      Var l_comp_t = losses::compacting(tape, feats_t, pseudo, cc_t);
      Var l_sep_s = losses::separating(tape, cc_s, cfg.weights.t_m);
      Var l_sep_t = losses::separating(tape, cc_t, cfg.weights.t_m);
      Var l_cd = losses::interdomain_cd(tape, cc_s, cc_t);

      Var pooled = tape.concat_rows(feats_s, feats_t);
      std::vector<int> pooled_labels(bs.labels);
      pooled_labels.insert(pooled_labels.end(), pseudo.begin(), pseudo.end());
      std::vector<int> present;
      Var batch_cc = tape.group_mean_rows(pooled, pooled_labels, K, &present);
      Var cc_m_rows = tape.gather_rows(cc_m, present);
      Var l_cmb = losses::running_combined(tape, batch_cc, cc_m_rows);

      Var total = losses::adapt_total(tape, l_cls, l_comp_s, l_comp_t, l_sep_s, l_sep_t, l_cd,
                                      l_cmb, cfg.weights);
      adam.zero_grad();
      tape.backward(total);
      adam.step();

      track.add("l_cls", l_cls.scalar());
      track.add("l_comp_s", l_comp_s.scalar());
      track.add("l_comp_t", l_comp_t.scalar());
      track.add("l_sep_s", l_sep_s.scalar());
      track.add("l_sep_t", l_sep_t.scalar());
      track.add("l_cd", l_cd.scalar());
      track.add("l_cmb", l_cmb.scalar());
      track.add("total", total.scalar());
      track.tick();
      ++report.steps;
    }

    if (cfg.refresh_target_centroids) {
      // recompute CP_t and CC_t on the adapted features; cc_m follows to keep
      // the ClusterState invariant
      build_target_centroids(net, target, cfg, meta, state);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.losses = track.means();
    rec.confident_counts = state.confident_count;
    report.epochs.push_back(std::move(rec));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void save_stage_report(const std::filesystem::path& path, const StageReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_stage_report: cannot write " + path.string());
  for (const auto& e : report.epochs) {
    nlohmann::ordered_json j;
    j["stage"] = report.stage;
    j["epoch"] = e.epoch;
    for (const auto& [k, v] : e.losses) j[k] = v;
    if (report.stage == "adapt") {
      for (int k = 0; k < kNumClasses; ++k)
        j[std::string("confident_") + class_name(class_from_index(k))] =
            e.confident_counts[static_cast<size_t>(k)];
    }
    j["seed"] = report.seed;
    out << j.dump() << "\n";
  }
}

// ---- dataset loading and the full pipeline ----

namespace {

std::vector<std::filesystem::path> record_dirs_in(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<fs::path> dirs;
  if (fs::exists(path / "meta.json")) {
    dirs.push_back(path);
    return dirs;
  }
  for (const auto& entry : fs::directory_iterator(path))
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty())
    throw std::runtime_error("no records found under " + path.string() +
                             " (expected <record>/meta.json)");
  return dirs;
}

}  // namespace

LoadedDomain load_domain(const std::filesystem::path& path, const std::string& channel,
                         const PrepConfig& prep, Domain domain, int rr_mean_override) {
  LoadedDomain out;
  if (is_segment_cache(path)) {
    out.data = read_segment_cache(path, &out.rr_mean);
    out.data.domain = domain;
    return out;
  }
  if (!std::filesystem::exists(path))
    throw std::runtime_error("dataset path does not exist: " + path.string());
  std::vector<PreparedSignal> sigs;
  for (const auto& dir : record_dirs_in(path))
    sigs.push_back(preprocess_record(load_record(dir), channel, prep));
  int rr = rr_mean_override;
  if (rr <= 0) rr = prep.rr_mean_samples > 0 ? prep.rr_mean_samples : rr_mean_from(sigs);
  out.rr_mean = rr;
  out.data = make_segments(sigs, rr, domain, prep, &out.stats);
  return out;
}

PipelineResult run_pipeline(const std::filesystem::path& source_path,
                            const std::filesystem::path& target_path, const TrainConfig& cfg,
                            const PrepConfig& prep, const PipelineOptions& opts,
                            const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out_dir);

  auto stage_fail = [](const std::string& stage, const std::exception& e) -> std::runtime_error {
    return std::runtime_error("[" + stage + "] " + e.what());
  };

  LoadedDomain source, target;
  try {
    source = load_domain(source_path, opts.channel_source, prep, Domain::Source);
    target = load_domain(target_path, opts.channel_target, prep, Domain::Target, source.rr_mean);
  } catch (const std::exception& e) {
    throw stage_fail("preprocess", e);
  }

  LabeledDataset source_aug = augment(source.data, cfg.augment_factors);
  PreparedDataset src = PreparedDataset::from(source_aug);
  PreparedDataset tgt = PreparedDataset::from(target.data);
  std::fill(tgt.labels.begin(), tgt.labels.end(), -1);  // labels stay held out

  PipelineResult result;
  result.meta.net = cfg.net;
  result.meta.input_len = src.L;
  result.meta.rr_mean = source.rr_mean;
  result.meta.target_fs = prep.target_fs;
  result.meta.normalizer.fit(source_aug);
  result.meta.class_weights = class_weights_for(src, cfg.class_weight_mode);
  result.net = std::make_unique<Network>(cfg.net, cfg.seed);
  result.meta.save(out_dir / "model_meta.json");

  try {
    StageReport r = pretrain(*result.net, src, cfg, result.meta);
    save_stage_report(out_dir / "stage1_report.jsonl", r);
    ad::save_params(out_dir / "stage1.ckpt", result.net->params());
    result.reports.push_back(std::move(r));
  } catch (const std::exception& e) {
    throw stage_fail("pretrain", e);
  }

  if (opts.run_stage2) {
    try {
      StageReport r = organize_source_clusters(*result.net, src, cfg, result.meta, result.clusters);
      build_target_centroids(*result.net, tgt, cfg, result.meta, result.clusters);
      save_stage_report(out_dir / "stage2_report.jsonl", r);
      ad::save_params(out_dir / "stage2.ckpt", result.net->params());
      result.clusters.save(out_dir / "clusters.txt");
      result.reports.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw stage_fail("clusters", e);
    }
  }

  if (opts.run_stage2 && opts.run_stage3) {
    try {
      StageReport r = adapt(*result.net, src, tgt, result.clusters, cfg, result.meta);
      save_stage_report(out_dir / "stage3_report.jsonl", r);
      ad::save_params(out_dir / "stage3.ckpt", result.net->params());
      result.clusters.save(out_dir / "clusters.txt");
      result.reports.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw stage_fail("adapt", e);
    }
  }

  // target evaluation (held-out labels), augmented by default per the
  // experimental protocol
  if (target.data.fully_labeled() && !target.data.segments.empty()) {
    try {
      LabeledDataset eval_ds =
          opts.augment_eval ? augment(target.data, cfg.augment_factors) : target.data;
      result.confusion = evaluate(*result.net, eval_ds, result.meta.normalizer, cfg.batch_size);
      const std::string model_id =
          opts.run_stage2 && opts.run_stage3 ? "adapted" : "baseline";
      result.metrics = metrics_from(result.confusion, target_path.string(), model_id,
                                    opts.augment_eval);
      result.has_metrics = true;
      emit_report(result.metrics, result.confusion, out_dir, opts.write_heatmap);
    } catch (const std::exception& e) {
      throw stage_fail("evaluate", e);
    }
  }
  return result;
}

}  // namespace ecgda
