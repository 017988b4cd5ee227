#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ecgda/beat_types.hpp"

namespace ecgda {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A raw multi-channel ECG record: named channels of equal length, a sampling
// rate, and beat annotations (sample index + symbol), strictly increasing.
struct EcgRecord {
  std::string record_id;
  std::vector<std::string> channel_names;
  std::vector<std::vector<float>> channels;
  int fs = 0;
  std::vector<std::pair<int64_t, char>> annotations;

  int64_t n_samples() const { return channels.empty() ? 0 : static_cast<int64_t>(channels[0].size()); }
  const std::vector<float>& channel(const std::string& name) const;  // empty name = first channel
  void validate() const;                                             // throws ParseError
};

// Directory layout: <dir>/meta.json, <dir>/signal.csv, <dir>/annotations.csv.
EcgRecord load_record(const std::filesystem::path& dir);
void write_record(const EcgRecord& rec, const std::filesystem::path& dir);

// AAMI EC57 mapping; nullopt = rejected (Q, paced and anything unlisted).
std::optional<BeatClass> map_symbol(char symbol);

// Per-class duplication factors: k extra copies appended per original segment.
using AugmentFactors = std::array<int, kNumClasses>;
inline constexpr AugmentFactors kDefaultAugment{0, 2, 5, 10};

// Originals first, then copies grouped by class; copies carry duplicated=true.
LabeledDataset augment(const LabeledDataset& ds, const AugmentFactors& factors = kDefaultAugment);

}  // namespace ecgda
