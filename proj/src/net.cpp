#include "ecgda/net.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "ecgda/rng.hpp"

namespace ecgda {

using ad::Param;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

uint64_t architecture_hash(const NetConfig& cfg) {
  std::string desc = "res1d;k=" + std::to_string(cfg.kernel) + ";c=";
  for (int c : cfg.channels) desc += std::to_string(c) + ",";
  desc += ";fc=" + std::to_string(cfg.fc1) + "," + std::to_string(cfg.fc2) + ";t=" +
          std::to_string(cfg.n_time) + ";K=" + std::to_string(cfg.n_classes);
  return fnv1a64(desc);
}

void TimeFeatNormalizer::fit(const LabeledDataset& ds) {
  if (ds.segments.empty()) throw std::invalid_argument("TimeFeatNormalizer: empty dataset");
  std::array<double, 3> sum{0, 0, 0}, sq{0, 0, 0};
  for (const auto& s : ds.segments) {
    const float f[3] = {s.rr_curr, s.rr_pre, s.rr_pre8};
    for (int i = 0; i < 3; ++i) {
      sum[static_cast<size_t>(i)] += f[i];
      sq[static_cast<size_t>(i)] += static_cast<double>(f[i]) * f[i];
    }
  }
  const double n = static_cast<double>(ds.segments.size());
  for (int i = 0; i < 3; ++i) {
    const double m = sum[static_cast<size_t>(i)] / n;
    const double var = std::max(0.0, sq[static_cast<size_t>(i)] / n - m * m);
    mean[static_cast<size_t>(i)] = static_cast<float>(m);
    stddev[static_cast<size_t>(i)] = static_cast<float>(var > 1e-12 ? std::sqrt(var) : 1.0);
  }
}

void TimeFeatNormalizer::apply_row(const float* in, float* out) const {
  for (int i = 0; i < 3; ++i)
    out[i] = (in[i] - mean[static_cast<size_t>(i)]) / stddev[static_cast<size_t>(i)];
}

std::vector<float> TimeFeatNormalizer::apply(const LabeledDataset& ds) const {
  std::vector<float> out(ds.segments.size() * 3);
  for (size_t i = 0; i < ds.segments.size(); ++i) {
    const float f[3] = {ds.segments[i].rr_curr, ds.segments[i].rr_pre, ds.segments[i].rr_pre8};
    apply_row(f, &out[i * 3]);
  }
  return out;
}

Network::Network(NetConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.channels.empty()) throw std::invalid_argument("NetConfig: empty channel plan");
  int cin = 1;
  for (size_t b = 0; b < cfg_.channels.size(); ++b) {
    const int cout = cfg_.channels[b];
    const std::string pre = "f.block" + std::to_string(b + 1) + ".";
    add_param(pre + "conv1.w", {cout, cin, cfg_.kernel});
    add_param(pre + "conv1.b", {cout});
    add_param(pre + "conv2.w", {cout, cout, cfg_.kernel});
    add_param(pre + "conv2.b", {cout});
    add_param(pre + "shortcut.w", {cout, cin, 1});
    add_param(pre + "shortcut.b", {cout});
    cin = cout;
  }
  for (int c = 1; c <= 2; ++c) {
    const std::string pre = "c" + std::to_string(c) + ".";
    add_param(pre + "fc1.w", {cfg_.fc1, cfg_.feature_dim()});
    add_param(pre + "fc1.b", {cfg_.fc1});
    add_param(pre + "fc2.w", {cfg_.fc2, cfg_.fc1});
    add_param(pre + "fc2.b", {cfg_.fc2});
    add_param(pre + "fc3.w", {cfg_.n_classes, cfg_.fc2 + cfg_.n_time});
    add_param(pre + "fc3.b", {cfg_.n_classes});
  }
  init_params(seed);
}

Param& Network::add_param(std::string name, Shape shape) {
  store_.emplace_back(std::move(name), Tensor::zeros(std::move(shape)));
  order_.push_back(&store_.back());
  return store_.back();
}

void Network::init_params(uint64_t seed) {
  // Kaiming-style uniform, fan-in scaling; independent streams for F, C1, C2
  // so the two classifiers start from different draws.
  for (Param* p : order_) {
    if (p->name.size() >= 2 && p->name[p->name.size() - 1] == 'b') continue;  // biases stay zero
    std::string stream = "init/f";
    if (p->name.rfind("c1.", 0) == 0) stream = "init/c1";
    if (p->name.rfind("c2.", 0) == 0) stream = "init/c2";
    Rng rng(seed, stream + "/" + p->name);
    const Shape& s = p->value.shape;
    int64_t fan_in = 1;
    for (size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : p->value.data) v = static_cast<float>(rng.uniform(-bound, bound));
  }
}

std::vector<Param*> Network::params() { return order_; }

std::vector<const Param*> Network::params() const {
  return {order_.begin(), order_.end()};
}

Var Network::extract(Tape& tape, Var batch) {
  const Shape& s = batch.shape();
  if (s.size() != 2) throw std::invalid_argument("extract: batch must be [B,L], got " + shape_str(s));
  if (s[1] < 8)
    throw std::invalid_argument("extract: segment length " + std::to_string(s[1]) +
                                " below minimum 8 (pooling underflow)");
  Var x = tape.reshape(batch, {s[0], 1, s[1]});
  for (size_t b = 0; b < cfg_.channels.size(); ++b) {
    const std::string pre = "f.block" + std::to_string(b + 1) + ".";
    auto param = [&](const std::string& n) -> Param& {
      for (Param* p : order_)
        if (p->name == pre + n) return *p;
      throw std::logic_error("extract: missing param " + pre + n);
    };
    Var d1 = tape.relu(tape.conv1d(x, tape.leaf(param("conv1.w")), tape.leaf(param("conv1.b")), 1, true));
    Var d2 = tape.conv1d(d1, tape.leaf(param("conv2.w")), tape.leaf(param("conv2.b")), 1, true);
    Var sc = tape.conv1d(x, tape.leaf(param("shortcut.w")), tape.leaf(param("shortcut.b")), 1, true);
    x = tape.maxpool1d(tape.relu(tape.add(d2, sc)), 2, 2);
  }
  return tape.global_avg_pool(x);
}

Var Network::classifier_head(Tape& tape, Var features, Var time_feats, int which) {
  const std::string pre = "c" + std::to_string(which) + ".";
  auto param = [&](const std::string& n) -> Param& {
    for (Param* p : order_)
      if (p->name == pre + n) return *p;
    throw std::logic_error("classify: missing param " + pre + n);
  };
  Var h = tape.relu(tape.dense(features, tape.leaf(param("fc1.w")), tape.leaf(param("fc1.b"))));
  h = tape.relu(tape.dense(h, tape.leaf(param("fc2.w")), tape.leaf(param("fc2.b"))));
  h = tape.concat_cols(h, time_feats);
  return tape.dense(h, tape.leaf(param("fc3.w")), tape.leaf(param("fc3.b")));
}

std::pair<Var, Var> Network::classify(Tape& tape, Var features, Var time_feats) {
  const Shape& fs = features.shape();
  const Shape& ts = time_feats.shape();
  if (fs.size() != 2 || fs[1] != cfg_.feature_dim())
    throw std::invalid_argument("classify: features must be [B," +
                                std::to_string(cfg_.feature_dim()) + "], got " + shape_str(fs));
  if (ts.size() != 2 || ts[0] != fs[0] || ts[1] != cfg_.n_time)
    throw std::invalid_argument("classify: time features must be [B," +
                                std::to_string(cfg_.n_time) + "], got " + shape_str(ts));
  return {classifier_head(tape, features, time_feats, 1),
          classifier_head(tape, features, time_feats, 2)};
}

uint64_t Network::param_checksum() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Param* p : order_) {
    for (float v : p->value.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      h ^= bits;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

Combined combine_probs(const std::vector<float>& p1, const std::vector<float>& p2, int B, int K) {
  Combined out;
  out.probs = Tensor::zeros({B, K});
  out.predicted.resize(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    int best = 0;
    for (int k = 0; k < K; ++k) {
      const size_t i = static_cast<size_t>(b) * K + static_cast<size_t>(k);
      out.probs.data[i] = 0.5f * (p1[i] + p2[i]);
      if (out.probs.data[i] > out.probs.data[static_cast<size_t>(b) * K + best]) best = k;
    }
    out.predicted[static_cast<size_t>(b)] = best;
  }
  return out;
}

Combined combine(const Tensor& logits1, const Tensor& logits2) {
  if (logits1.shape != logits2.shape || logits1.ndim() != 2)
    throw std::invalid_argument("combine: logits must be matching [B,K] tensors");
  const int B = logits1.dim(0), K = logits1.dim(1);
  auto softmax_rows = [&](const Tensor& t) {
    std::vector<float> out(t.data.size());
    for (int b = 0; b < B; ++b) {
      const float* x = &t.data[static_cast<size_t>(b) * K];
      float mx = x[0];
      for (int k = 1; k < K; ++k) mx = std::max(mx, x[k]);
      double denom = 0.0;
      for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(x[k] - mx));
      for (int k = 0; k < K; ++k)
        out[static_cast<size_t>(b) * K + k] =
            static_cast<float>(std::exp(static_cast<double>(x[k] - mx)) / denom);
    }
    return out;
  };
  return combine_probs(softmax_rows(logits1), softmax_rows(logits2), B, K);
}

void ModelMeta::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["architecture_hash"] = architecture_hash(net);
  j["channels"] = net.channels;
  j["kernel"] = net.kernel;
  j["fc1"] = net.fc1;
  j["fc2"] = net.fc2;
  j["feature_dim"] = net.feature_dim();
  j["input_len"] = input_len;
  j["rr_mean"] = rr_mean;
  j["target_fs"] = target_fs;
  j["time_feat_mean"] = normalizer.mean;
  j["time_feat_std"] = normalizer.stddev;
  j["class_weights"] = class_weights;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ModelMeta: cannot write " + path.string());
  out << j.dump(2) << "\n";
}

ModelMeta ModelMeta::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ModelMeta: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  ModelMeta m;
  m.net.channels = j.at("channels").get<std::vector<int>>();
  m.net.kernel = j.at("kernel").get<int>();
  m.net.fc1 = j.at("fc1").get<int>();
  m.net.fc2 = j.at("fc2").get<int>();
  m.input_len = j.at("input_len").get<int>();
  m.rr_mean = j.at("rr_mean").get<int>();
  m.target_fs = j.at("target_fs").get<int>();
  m.normalizer.mean = j.at("time_feat_mean").get<std::array<float, 3>>();
  m.normalizer.stddev = j.at("time_feat_std").get<std::array<float, 3>>();
  m.class_weights = j.at("class_weights").get<std::array<float, kNumClasses>>();
  return m;
}

}  // namespace ecgda
