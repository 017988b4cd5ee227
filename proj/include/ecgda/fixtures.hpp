#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ecgda/record_io.hpp"

namespace ecgda {

// Synthetic quasi-ECG generator: four beat classes with distinct QRS
// width/amplitude/secondary-bump morphology, imbalanced priors, and a
// configurable target-domain shift (amplitude scale, beat width, T-wave
// amplitude, noise level, heart rate). Desk-scale stand-in for a real
// cross-database experiment.
struct FixtureConfig {
  int n_beats = 2000;
  int n_records = 4;
  double shift = 0.0;  // 0 = no domain shift
  uint64_t seed = 1;
  int fs_source = 360;
  int fs_target = 257;
  std::array<double, kNumClasses> priors{0.70, 0.15, 0.10, 0.05};
  double rr_base = 0.40;  // seconds
};

std::vector<EcgRecord> generate_domain(const FixtureConfig& cfg, Domain domain);

// Writes <out_dir>/source/<rec>/... and <out_dir>/target/<rec>/...
void write_fixtures(const std::filesystem::path& out_dir, const FixtureConfig& cfg);

}  // namespace ecgda
