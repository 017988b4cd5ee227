#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecgda/beat_types.hpp"
#include "ecgda/record_io.hpp"

namespace ecgda {

struct PrepConfig {
  float band_lo = 3.0f;   // Hz
  float band_hi = 20.0f;  // Hz
  int target_fs = 256;
  // Reference FIR order at 256 Hz, scaled with the actual rate. The realized
  // filter is applied forward-backward (zero phase), so stopband attenuation
  // doubles in dB.
  int filter_order = 256;
  int rr_mean_samples = 0;  // 0 = compute from the source domain

  void validate() const;
};

// Linear-phase FIR band-pass taps (windowed sinc, Hamming), odd length.
std::vector<float> fir_bandpass_taps(int order, float lo_hz, float hi_hz, int fs);

// Zero-phase band-pass: forward-backward FIR with reflected edges, equal length.
std::vector<float> bandpass(const std::vector<float>& x, int fs, const PrepConfig& cfg = {});

int64_t resampled_length(int64_t n, int fs_in, int fs_out);

// Polyphase rational resampler (FIR low-pass at the common upsampled rate).
std::vector<float> resample(const std::vector<float>& x, int fs_in, int fs_out);

// Arithmetic mean of successive R-peak differences, floored to integer samples.
// Throws if fewer than two peaks.
int compute_rr_mean(const std::vector<int64_t>& r_peaks);

struct SegmentWindow {
  int64_t r_index = 0;
  std::vector<float> waveform;  // length 2*floor(rr_mean/2)+1
};

// Windows [R - floor(rr_mean/2), R + floor(rr_mean/2]] per peak; windows that
// cross a record boundary are dropped, and the drop count reported.
std::vector<SegmentWindow> segment(const std::vector<float>& signal,
                                   const std::vector<int64_t>& r_peaks, int rr_mean,
                                   int64_t* dropped = nullptr);

struct TimeFeatures {
  float rr_curr = 0, rr_pre = 0, rr_pre8 = 0;  // seconds
};

// Features for beat i >= 1: the interval ending at i, the mean of all intervals
// up to i, and the mean of the last min(8, i) intervals.
TimeFeatures time_features(const std::vector<int64_t>& r_peaks, size_t i, int fs);

// ---- record-level pipeline ----

struct PreparedSignal {
  std::string record_id;
  std::vector<float> wave;       // filtered, at target_fs
  std::vector<int64_t> peaks;    // annotation indices mapped to target_fs
  std::vector<char> symbols;     // raw annotation symbols, parallel to peaks
};

struct PrepStats {
  int64_t beats_total = 0;
  int64_t dropped_window = 0;   // window crossed a record boundary
  int64_t dropped_first = 0;    // beat 0 of each record (no RR_curr)
  int64_t rejected_symbol = 0;  // symbol outside the four AAMI classes
};

PreparedSignal preprocess_record(const EcgRecord& rec, const std::string& channel,
                                 const PrepConfig& cfg);

// Pooled over all prepared signals (the source domain).
int rr_mean_from(const std::vector<PreparedSignal>& sigs);

LabeledDataset make_segments(const std::vector<PreparedSignal>& sigs, int rr_mean, Domain domain,
                             const PrepConfig& cfg, PrepStats* stats = nullptr);

// ---- segment cache ----
// Binary: header {L, fs, rr_mean, count}, then per segment L float32 LE
// waveform samples, 3 feature floats, and a label byte (255 = unlabeled).
void write_segment_cache(const std::filesystem::path& path, const LabeledDataset& ds, int rr_mean);
LabeledDataset read_segment_cache(const std::filesystem::path& path, int* rr_mean = nullptr);
bool is_segment_cache(const std::filesystem::path& path);

}  // namespace ecgda
