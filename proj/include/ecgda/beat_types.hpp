#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecgda {

// AAMI EC57 heartbeat classes. Q-type beats are rejected at mapping time and
// never stored, so the enum has exactly four values.
enum class BeatClass : uint8_t { N = 0, V = 1, S = 2, F = 3 };

inline constexpr int kNumClasses = 4;

inline const char* class_name(BeatClass k) {
  switch (k) {
    case BeatClass::N: return "N";
    case BeatClass::V: return "V";
    case BeatClass::S: return "S";
    case BeatClass::F: return "F";
  }
  return "?";
}

inline int class_index(BeatClass k) { return static_cast<int>(k); }

inline BeatClass class_from_index(int i) {
  if (i < 0 || i >= kNumClasses) throw std::out_of_range("BeatClass index out of range");
  return static_cast<BeatClass>(i);
}

enum class Domain : uint8_t { Source = 0, Target = 1 };

// One fixed-length heartbeat window around an R-peak, plus the three RR time
// features in seconds. All segments of a dataset share the same waveform length.
struct BeatSegment {
  std::vector<float> waveform;
  float rr_curr = 0.0f;
  float rr_pre = 0.0f;
  float rr_pre8 = 0.0f;
  std::optional<BeatClass> label;
  std::string source_record;
  int64_t r_index = -1;     // R-peak sample index at the unified rate
  bool duplicated = false;  // true for augmentation copies
};

struct LabeledDataset {
  std::vector<BeatSegment> segments;
  Domain domain = Domain::Source;
  std::array<int64_t, kNumClasses> class_counts{};

  void recount() {
    class_counts.fill(0);
    for (const auto& s : segments)
      if (s.label) class_counts[class_index(*s.label)]++;
  }

  size_t size() const { return segments.size(); }
  bool fully_labeled() const {
    for (const auto& s : segments)
      if (!s.label) return false;
    return true;
  }
};

}  // namespace ecgda
