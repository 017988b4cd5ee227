#include "ecgda/signal_prep.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace ecgda {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Design cutoffs sit half a transition band outside the nominal passband so the
// double-pass response still meets the -3 dB bound at band_lo+1 / band_hi-1.
constexpr double kEdgeOffsetHz = 0.5;

std::vector<double> hamming_sinc_lowpass(int taps, double fc_norm, double gain) {
  // fc_norm: cutoff as a fraction of the sampling rate
  std::vector<double> h(static_cast<size_t>(taps));
  const int mid = (taps - 1) / 2;
  for (int n = 0; n < taps; ++n) {
    const int m = n - mid;
    double v = (m == 0) ? 2.0 * fc_norm : std::sin(2.0 * kPi * fc_norm * m) / (kPi * m);
    const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (taps - 1));
    h[static_cast<size_t>(n)] = gain * v * w;
  }
  return h;
}

}  // namespace

void PrepConfig::validate() const {
  if (!(0.0f < band_lo && band_lo < band_hi && band_hi < static_cast<float>(target_fs) / 2.0f))
    throw std::invalid_argument("PrepConfig: need 0 < band_lo < band_hi < target_fs/2");
  if (filter_order < 8) throw std::invalid_argument("PrepConfig: filter_order too small");
  if (target_fs <= 0) throw std::invalid_argument("PrepConfig: target_fs must be positive");
}

std::vector<float> fir_bandpass_taps(int order, float lo_hz, float hi_hz, int fs) {
  if (order % 2 != 0) ++order;  // odd tap count, type-I linear phase
  const int taps = order + 1;
  const double lo = std::max(0.1, static_cast<double>(lo_hz) - kEdgeOffsetHz) / fs;
  const double hi = std::min(fs / 2.0 - 0.1, static_cast<double>(hi_hz) + kEdgeOffsetHz) / fs;
  auto lp_hi = hamming_sinc_lowpass(taps, hi, 1.0);
  auto lp_lo = hamming_sinc_lowpass(taps, lo, 1.0);
  std::vector<float> h(static_cast<size_t>(taps));
  for (int n = 0; n < taps; ++n)
    h[static_cast<size_t>(n)] = static_cast<float>(lp_hi[static_cast<size_t>(n)] - lp_lo[static_cast<size_t>(n)]);
  return h;
}

std::vector<float> bandpass(const std::vector<float>& x, int fs, const PrepConfig& cfg) {
  cfg.validate();
  if (fs <= static_cast<int>(2.0f * cfg.band_hi))
    throw std::invalid_argument("bandpass: fs must exceed twice band_hi");
  const int order = std::max(8, static_cast<int>(std::lround(
                                    static_cast<double>(cfg.filter_order) * fs / 256.0)));
  const std::vector<float> h = fir_bandpass_taps(order, cfg.band_lo, cfg.band_hi, fs);
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t m = static_cast<int64_t>(h.size());
  if (n <= m)
    throw std::invalid_argument("bandpass: signal length " + std::to_string(n) +
                                " not longer than filter length " + std::to_string(m));

  // Forward-backward as one centered convolution with g = h (*) h (h symmetric),
  // on a reflection-padded signal so steady state holds at the edges.
  const int64_t gl = 2 * m - 1;
  std::vector<double> g(static_cast<size_t>(gl), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < m; ++j)
      g[static_cast<size_t>(i + j)] += static_cast<double>(h[static_cast<size_t>(i)]) * h[static_cast<size_t>(j)];

  const int64_t pad = gl / 2;  // = m - 1
  std::vector<double> ext(static_cast<size_t>(n + 2 * pad));
  for (int64_t i = 0; i < pad; ++i)
    ext[static_cast<size_t>(i)] = x[static_cast<size_t>(std::min(n - 1, pad - i))];
  for (int64_t i = 0; i < n; ++i) ext[static_cast<size_t>(pad + i)] = x[static_cast<size_t>(i)];
  for (int64_t i = 0; i < pad; ++i)
    ext[static_cast<size_t>(pad + n + i)] = x[static_cast<size_t>(std::max<int64_t>(0, n - 2 - i))];

  std::vector<float> y(static_cast<size_t>(n));
  for (int64_t t = 0; t < n; ++t) {
    double acc = 0.0;
    const double* xe = &ext[static_cast<size_t>(t)];
    for (int64_t k = 0; k < gl; ++k) acc += g[static_cast<size_t>(k)] * xe[k];
    y[static_cast<size_t>(t)] = static_cast<float>(acc);
  }
  return y;
}

int64_t resampled_length(int64_t n, int fs_in, int fs_out) {
  return static_cast<int64_t>(std::llround(static_cast<double>(n) * fs_out / fs_in));
}

std::vector<float> resample(const std::vector<float>& x, int fs_in, int fs_out) {
  if (fs_in <= 0 || fs_out <= 0) throw std::invalid_argument("resample: rates must be positive");
  if (fs_in == fs_out) return x;
  const int g = std::gcd(fs_in, fs_out);
  const int up = fs_out / g;
  const int down = fs_in / g;
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t out_len = resampled_length(n, fs_in, fs_out);

  // Low-pass at the virtual rate fs_in*up, cutoff at the tighter Nyquist.
  const int half = 10 * std::max(up, down);
  const int taps = 2 * half + 1;
  const double fc = 0.5 / std::max(up, down) * 0.92;  // slight headroom below Nyquist
  auto h = hamming_sinc_lowpass(taps, fc, static_cast<double>(up));

  std::vector<float> y(static_cast<size_t>(out_len));
  for (int64_t j = 0; j < out_len; ++j) {
    // virtual index of output sample j is j*down = i*up + phase
    const int64_t v = j * down;
    const int64_t i0 = v / up;
    const int64_t phase = v - i0 * up;
    double acc = 0.0;
    // h index k such that h[half + (v - i*up)] pairs with x[i]
    for (int64_t i = i0; i >= 0; --i) {
      const int64_t k = half + (v - i * up);
      if (k >= taps) break;
      acc += h[static_cast<size_t>(k)] * static_cast<double>(x[static_cast<size_t>(i)]);
    }
    for (int64_t i = i0 + 1; i < n; ++i) {
      const int64_t k = half + (v - i * up);
      if (k < 0) break;
      acc += h[static_cast<size_t>(k)] * static_cast<double>(x[static_cast<size_t>(i)]);
    }
    (void)phase;
    y[static_cast<size_t>(j)] = static_cast<float>(acc);
  }
  return y;
}

int compute_rr_mean(const std::vector<int64_t>& r_peaks) {
  if (r_peaks.size() < 2) throw std::invalid_argument("compute_rr_mean: need at least 2 peaks");
  long double sum = 0.0L;
  for (size_t i = 1; i < r_peaks.size(); ++i) sum += static_cast<long double>(r_peaks[i] - r_peaks[i - 1]);
  const long double mean = sum / static_cast<long double>(r_peaks.size() - 1);
  return static_cast<int>(std::floor(mean));
}

std::vector<SegmentWindow> segment(const std::vector<float>& signal,
                                   const std::vector<int64_t>& r_peaks, int rr_mean,
                                   int64_t* dropped) {
  if (rr_mean < 2) throw std::invalid_argument("segment: rr_mean too small");
  const int64_t half = rr_mean / 2;
  const int64_t n = static_cast<int64_t>(signal.size());
  std::vector<SegmentWindow> out;
  int64_t drop = 0;
  for (int64_t r : r_peaks) {
    const int64_t lo = r - half;
    const int64_t hi = r + half;  // inclusive
    if (lo < 0 || hi >= n) {
      ++drop;
      continue;
    }
    SegmentWindow w;
    w.r_index = r;
    w.waveform.assign(signal.begin() + lo, signal.begin() + hi + 1);
    out.push_back(std::move(w));
  }
  if (dropped) *dropped = drop;
  return out;
}

TimeFeatures time_features(const std::vector<int64_t>& r_peaks, size_t i, int fs) {
  if (i == 0 || i >= r_peaks.size())
    throw std::invalid_argument("time_features: beat index must be in [1, n_peaks)");
  if (fs <= 0) throw std::invalid_argument("time_features: fs must be positive");
  auto interval = [&](size_t j) {  // interval j ends at peak j, j >= 1
    return static_cast<double>(r_peaks[j] - r_peaks[j - 1]) / fs;
  };
  TimeFeatures tf;
  tf.rr_curr = static_cast<float>(interval(i));
  double sum_all = 0.0;
  for (size_t j = 1; j <= i; ++j) sum_all += interval(j);
  tf.rr_pre = static_cast<float>(sum_all / static_cast<double>(i));
  const size_t w = std::min<size_t>(8, i);
  double sum8 = 0.0;
  for (size_t j = i + 1 - w; j <= i; ++j) sum8 += interval(j);
  tf.rr_pre8 = static_cast<float>(sum8 / static_cast<double>(w));
  return tf;
}

PreparedSignal preprocess_record(const EcgRecord& rec, const std::string& channel,
                                 const PrepConfig& cfg) {
  cfg.validate();
  const std::vector<float>& raw = rec.channel(channel);
  std::vector<float> filtered = bandpass(raw, rec.fs, cfg);
  std::vector<float> wave = resample(filtered, rec.fs, cfg.target_fs);
  PreparedSignal out;
  out.record_id = rec.record_id;
  out.wave = std::move(wave);
  const int64_t n = static_cast<int64_t>(out.wave.size());
  for (const auto& [idx, sym] : rec.annotations) {
    int64_t mapped = static_cast<int64_t>(
        std::llround(static_cast<double>(idx) * cfg.target_fs / rec.fs));
    if (mapped >= n) mapped = n - 1;
    out.peaks.push_back(mapped);
    out.symbols.push_back(sym);
  }
  return out;
}

int rr_mean_from(const std::vector<PreparedSignal>& sigs) {
  // pooled mean over per-record successive differences
  long double sum = 0.0L;
  int64_t count = 0;
  for (const auto& s : sigs) {
    for (size_t i = 1; i < s.peaks.size(); ++i) {
      sum += static_cast<long double>(s.peaks[i] - s.peaks[i - 1]);
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("rr_mean_from: no RR intervals in source domain");
  return static_cast<int>(std::floor(sum / static_cast<long double>(count)));
}

LabeledDataset make_segments(const std::vector<PreparedSignal>& sigs, int rr_mean, Domain domain,
                             const PrepConfig& cfg, PrepStats* stats) {
  LabeledDataset ds;
  ds.domain = domain;
  PrepStats st;
  const int64_t half = rr_mean / 2;
  for (const auto& sig : sigs) {
    const int64_t n = static_cast<int64_t>(sig.wave.size());
    st.beats_total += static_cast<int64_t>(sig.peaks.size());
    for (size_t i = 0; i < sig.peaks.size(); ++i) {
      if (i == 0) {
        st.dropped_first++;  // no RR_curr for the first beat of a record
        continue;
      }
      auto label = map_symbol(sig.symbols[i]);
      if (!label) {
        st.rejected_symbol++;
        continue;
      }
      const int64_t r = sig.peaks[i];
      if (r - half < 0 || r + half >= n) {
        st.dropped_window++;
        continue;
      }
      BeatSegment seg;
      seg.waveform.assign(sig.wave.begin() + (r - half), sig.wave.begin() + (r + half + 1));
      const TimeFeatures tf = time_features(sig.peaks, i, cfg.target_fs);
      seg.rr_curr = tf.rr_curr;
      seg.rr_pre = tf.rr_pre;
      seg.rr_pre8 = tf.rr_pre8;
      seg.label = label;
      seg.source_record = sig.record_id;
      seg.r_index = r;
      ds.segments.push_back(std::move(seg));
    }
  }
  ds.recount();
  if (stats) *stats = st;
  return ds;
}

// ---- segment cache ----

namespace {
constexpr uint32_t kCacheMagic = 0x45434753;  // "ECGS"
}

void write_segment_cache(const std::filesystem::path& path, const LabeledDataset& ds, int rr_mean) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_segment_cache: cannot open " + path.string());
  const uint32_t L = ds.segments.empty() ? 0 : static_cast<uint32_t>(ds.segments[0].waveform.size());
  const uint32_t fs = 256;
  const uint32_t rr = static_cast<uint32_t>(rr_mean);
  const uint64_t count = ds.segments.size();
  out.write(reinterpret_cast<const char*>(&kCacheMagic), 4);
  out.write(reinterpret_cast<const char*>(&L), 4);
  out.write(reinterpret_cast<const char*>(&fs), 4);
  out.write(reinterpret_cast<const char*>(&rr), 4);
  out.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& s : ds.segments) {
    if (s.waveform.size() != L)
      throw std::runtime_error("write_segment_cache: unequal segment lengths");
    out.write(reinterpret_cast<const char*>(s.waveform.data()),
              static_cast<std::streamsize>(sizeof(float) * L));
    const float feats[3] = {s.rr_curr, s.rr_pre, s.rr_pre8};
    out.write(reinterpret_cast<const char*>(feats), sizeof(feats));
    const uint8_t lab = s.label ? static_cast<uint8_t>(class_index(*s.label)) : uint8_t{255};
    out.write(reinterpret_cast<const char*>(&lab), 1);
  }
}

LabeledDataset read_segment_cache(const std::filesystem::path& path, int* rr_mean) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_segment_cache: cannot open " + path.string());
  uint32_t magic = 0, L = 0, fs = 0, rr = 0;
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  in.read(reinterpret_cast<char*>(&L), 4);
  in.read(reinterpret_cast<char*>(&fs), 4);
  in.read(reinterpret_cast<char*>(&rr), 4);
  in.read(reinterpret_cast<char*>(&count), 8);
  if (!in || magic != kCacheMagic)
    throw std::runtime_error("read_segment_cache: bad header in " + path.string());
  LabeledDataset ds;
  ds.segments.resize(count);
  for (auto& s : ds.segments) {
    s.waveform.resize(L);
    float feats[3];
    uint8_t lab = 255;
    in.read(reinterpret_cast<char*>(s.waveform.data()), static_cast<std::streamsize>(sizeof(float) * L));
    in.read(reinterpret_cast<char*>(feats), sizeof(feats));
    in.read(reinterpret_cast<char*>(&lab), 1);
    if (!in) throw std::runtime_error("read_segment_cache: truncated file " + path.string());
    s.rr_curr = feats[0];
    s.rr_pre = feats[1];
    s.rr_pre8 = feats[2];
    if (lab != 255) s.label = class_from_index(lab);
  }
  ds.recount();
  if (rr_mean) *rr_mean = static_cast<int>(rr);
  return ds;
}

bool is_segment_cache(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) return false;
  std::ifstream in(path, std::ios::binary);
  uint32_t magic = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  return in && magic == kCacheMagic;
}

}  // namespace ecgda
