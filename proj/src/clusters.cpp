#include "ecgda/clusters.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ecgda {

float euclidean(const float* a, const float* b, int dim) {
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return static_cast<float>(std::sqrt(acc));
}

void ClusterState::recompute_cc_m() {
  for (int k = 0; k < kNumClasses; ++k) {
    auto& m = cc_m[static_cast<size_t>(k)];
    const auto& s = cc_s[static_cast<size_t>(k)];
    const auto& t = cc_t[static_cast<size_t>(k)];
    if (s.size() != t.size()) throw std::logic_error("ClusterState: cc_s/cc_t dim mismatch");
    m.resize(s.size());
    for (size_t i = 0; i < s.size(); ++i) m[i] = 0.5f * (s[i] + t[i]);
  }
}

std::array<std::vector<float>, kNumClasses> compute_centroids(const std::vector<float>& features,
                                                              int feature_dim,
                                                              const std::vector<int>& labels) {
  const size_t n = labels.size();
  if (features.size() != n * static_cast<size_t>(feature_dim))
    throw std::invalid_argument("compute_centroids: features/labels size mismatch");
  std::array<std::vector<double>, kNumClasses> acc;
  std::array<int64_t, kNumClasses> count{};
  for (auto& a : acc) a.assign(static_cast<size_t>(feature_dim), 0.0);
  for (size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= kNumClasses) throw std::invalid_argument("compute_centroids: bad label");
    count[static_cast<size_t>(y)]++;
    const float* row = &features[i * static_cast<size_t>(feature_dim)];
    for (int d = 0; d < feature_dim; ++d) acc[static_cast<size_t>(y)][static_cast<size_t>(d)] += row[d];
  }
  std::string missing;
  for (int k = 0; k < kNumClasses; ++k)
    if (count[static_cast<size_t>(k)] == 0) missing += std::string(missing.empty() ? "" : ",") + class_name(class_from_index(k));
  if (!missing.empty())
    throw std::invalid_argument("compute_centroids: no samples for class(es) " + missing);
  std::array<std::vector<float>, kNumClasses> out;
  for (int k = 0; k < kNumClasses; ++k) {
    out[static_cast<size_t>(k)].resize(static_cast<size_t>(feature_dim));
    for (int d = 0; d < feature_dim; ++d)
      out[static_cast<size_t>(k)][static_cast<size_t>(d)] = static_cast<float>(
          acc[static_cast<size_t>(k)][static_cast<size_t>(d)] / static_cast<double>(count[static_cast<size_t>(k)]));
  }
  return out;
}

std::array<float, kNumClasses> mean_intra_cluster_distance(
    const std::vector<float>& features, int feature_dim, const std::vector<int>& labels,
    const std::array<std::vector<float>, kNumClasses>& centroids) {
  std::array<double, kNumClasses> acc{};
  std::array<int64_t, kNumClasses> count{};
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= kNumClasses)
      throw std::invalid_argument("mean_intra_cluster_distance: bad label");
    acc[static_cast<size_t>(y)] += euclidean(&features[i * static_cast<size_t>(feature_dim)],
                                             centroids[static_cast<size_t>(y)].data(), feature_dim);
    count[static_cast<size_t>(y)]++;
  }
  std::array<float, kNumClasses> out{};
  for (int k = 0; k < kNumClasses; ++k) {
    if (count[static_cast<size_t>(k)] == 0)
      throw std::invalid_argument(std::string("mean_intra_cluster_distance: empty class ") +
                                  class_name(class_from_index(k)));
    out[static_cast<size_t>(k)] =
        static_cast<float>(acc[static_cast<size_t>(k)] / static_cast<double>(count[static_cast<size_t>(k)]));
  }
  return out;
}

float mean_classifier_discrepancy(const std::vector<float>& probs1,
                                  const std::vector<float>& probs2, int n, int k) {
  if (n <= 0) throw std::invalid_argument("mean_classifier_discrepancy: empty sample set");
  if (probs1.size() != static_cast<size_t>(n) * static_cast<size_t>(k) || probs1.size() != probs2.size())
    throw std::invalid_argument("mean_classifier_discrepancy: size mismatch");
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += euclidean(&probs1[static_cast<size_t>(i) * k], &probs2[static_cast<size_t>(i) * k], k);
  return static_cast<float>(acc / n);
}

ConfidentSelection select_confident(const std::vector<float>& target_features, int feature_dim,
                                    const std::vector<float>& probs,
                                    const std::vector<float>& probs1,
                                    const std::vector<float>& probs2,
                                    const std::array<std::vector<float>, kNumClasses>& cc_s,
                                    const std::array<float, kNumClasses>& m_ctr, float m_dis,
                                    float threshold) {
  const int K = kNumClasses;
  const size_t n = probs.size() / static_cast<size_t>(K);
  ConfidentSelection out;
  for (size_t i = 0; i < n; ++i) {
    const float* p = &probs[i * static_cast<size_t>(K)];
    int pred = 0;
    for (int k = 1; k < K; ++k)
      if (p[k] > p[pred]) pred = k;
    if (!(p[pred] > threshold)) continue;
    const float feat_dist = euclidean(&target_features[i * static_cast<size_t>(feature_dim)],
                                      cc_s[static_cast<size_t>(pred)].data(), feature_dim);
    if (!(feat_dist < m_ctr[static_cast<size_t>(pred)])) continue;
    const float dis = euclidean(&probs1[i * static_cast<size_t>(K)], &probs2[i * static_cast<size_t>(K)], K);
    if (!(dis < m_dis)) continue;
    out.picks.emplace_back(static_cast<int>(i), pred);
    out.per_class[static_cast<size_t>(pred)]++;
  }
  return out;
}

void compute_target_centroids(const ConfidentSelection& confident,
                              const std::vector<float>& target_features, int feature_dim,
                              ClusterState& state) {
  std::array<std::vector<double>, kNumClasses> acc;
  std::array<int64_t, kNumClasses> count{};
  for (auto& a : acc) a.assign(static_cast<size_t>(feature_dim), 0.0);
  for (const auto& [idx, label] : confident.picks) {
    const float* row = &target_features[static_cast<size_t>(idx) * static_cast<size_t>(feature_dim)];
    for (int d = 0; d < feature_dim; ++d) acc[static_cast<size_t>(label)][static_cast<size_t>(d)] += row[d];
    count[static_cast<size_t>(label)]++;
  }
  for (int k = 0; k < kNumClasses; ++k) {
    auto& t = state.cc_t[static_cast<size_t>(k)];
    if (count[static_cast<size_t>(k)] == 0) {
      t = state.cc_s[static_cast<size_t>(k)];  // borrow the source centroid
      state.cc_t_fallback[static_cast<size_t>(k)] = true;
    } else {
      t.resize(static_cast<size_t>(feature_dim));
      for (int d = 0; d < feature_dim; ++d)
        t[static_cast<size_t>(d)] = static_cast<float>(acc[static_cast<size_t>(k)][static_cast<size_t>(d)] /
                                                       static_cast<double>(count[static_cast<size_t>(k)]));
      state.cc_t_fallback[static_cast<size_t>(k)] = false;
    }
  }
  state.confident_count = confident.per_class;
  state.recompute_cc_m();
}

namespace {

void write_vec(std::ostream& out, const char* key, const std::vector<float>& v) {
  out << key;
  char buf[40];
  for (float x : v) {
    std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(x));
    out << buf;
  }
  out << "\n";
}

std::vector<float> read_vec(std::istringstream& line) {
  std::vector<float> v;
  float x;
  while (line >> x) v.push_back(x);
  return v;
}

}  // namespace

void ClusterState::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ClusterState: cannot write " + path.string());
  out << "clusters v1\n";
  out << "feature_dim " << feature_dim << "\n";
  char buf[40];
  for (int k = 0; k < kNumClasses; ++k) {
    out << "class " << class_name(class_from_index(k)) << "\n";
    write_vec(out, "cc_s", cc_s[static_cast<size_t>(k)]);
    write_vec(out, "cc_t", cc_t[static_cast<size_t>(k)]);
    write_vec(out, "cc_m", cc_m[static_cast<size_t>(k)]);
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(m_ctr[static_cast<size_t>(k)]));
    out << "m_ctr " << buf << "\n";
    out << "confident_count " << confident_count[static_cast<size_t>(k)] << "\n";
    out << "fallback " << (cc_t_fallback[static_cast<size_t>(k)] ? 1 : 0) << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(m_dis));
  out << "m_dis " << buf << "\n";
}

ClusterState ClusterState::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ClusterState: cannot open " + path.string());
  std::string line;
  auto next = [&](const std::string& expect_key) -> std::istringstream {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string key;
      ss >> key;
      if (key != expect_key)
        throw std::runtime_error("ClusterState: expected '" + expect_key + "', got '" + key +
                                 "' in " + path.string());
      return ss;
    }
    throw std::runtime_error("ClusterState: truncated file " + path.string());
  };
  std::getline(in, line);
  if (line != "clusters v1") throw std::runtime_error("ClusterState: bad header in " + path.string());
  ClusterState st;
  { auto ss = next("feature_dim"); ss >> st.feature_dim; }
  for (int k = 0; k < kNumClasses; ++k) {
    { auto ss = next("class"); std::string nm; ss >> nm; }
    { auto ss = next("cc_s"); st.cc_s[static_cast<size_t>(k)] = read_vec(ss); }
    { auto ss = next("cc_t"); st.cc_t[static_cast<size_t>(k)] = read_vec(ss); }
    { auto ss = next("cc_m"); st.cc_m[static_cast<size_t>(k)] = read_vec(ss); }
    { auto ss = next("m_ctr"); ss >> st.m_ctr[static_cast<size_t>(k)]; }
    { auto ss = next("confident_count"); ss >> st.confident_count[static_cast<size_t>(k)]; }
    { auto ss = next("fallback"); int f = 0; ss >> f; st.cc_t_fallback[static_cast<size_t>(k)] = f != 0; }
  }
  { auto ss = next("m_dis"); ss >> st.m_dis; }
  return st;
}

}  // namespace ecgda
