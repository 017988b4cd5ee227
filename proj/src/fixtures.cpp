#include "ecgda/fixtures.hpp"

#include <cmath>

#include "ecgda/rng.hpp"

namespace ecgda {

namespace {

struct BeatShape {
  double qrs_amp, qrs_sigma;
  double dip_amp, dip_offset, dip_sigma;
  double t_amp, t_offset, t_sigma;
  double p_amp, p_offset, p_sigma;
};

// class-specific morphology templates (seconds, unit amplitude scale)
BeatShape shape_for(BeatClass k) {
  switch (k) {
    case BeatClass::N:
      return {1.00, 0.012, -0.25, 0.035, 0.014, 0.28, 0.18, 0.045, 0.12, -0.16, 0.030};
    case BeatClass::V:
      return {1.35, 0.040, -0.50, 0.070, 0.035, -0.35, 0.22, 0.060, 0.00, -0.16, 0.030};
    case BeatClass::S:
      return {0.92, 0.013, -0.22, 0.034, 0.013, 0.22, 0.17, 0.042, 0.05, -0.12, 0.022};
    case BeatClass::F:
      return {1.15, 0.024, -0.32, 0.050, 0.022, 0.15, 0.20, 0.050, 0.06, -0.15, 0.026};
  }
  return {};
}

char symbol_for(BeatClass k) {
  switch (k) {
    case BeatClass::N: return 'N';
    case BeatClass::V: return 'V';
    case BeatClass::S: return 'A';  // atrial premature, maps to S
    case BeatClass::F: return 'F';
  }
  return '?';
}

double gauss(double t, double sigma) { return std::exp(-0.5 * t * t / (sigma * sigma)); }

struct DomainShift {
  double amp = 1.0, width = 1.0, t_amp = 1.0, noise = 0.015, rr = 1.0;
};

DomainShift shift_params(double s, Domain domain) {
  DomainShift d;
  if (domain == Domain::Target) {
    d.amp = 1.0 + 0.9 * s;
    d.width = 1.0 + 0.5 * s;
    d.t_amp = 1.0 - 0.8 * s;
    d.noise = 0.015 + 0.07 * s;
    d.rr = 1.0 - 0.22 * s;
  }
  return d;
}

}  // namespace

std::vector<EcgRecord> generate_domain(const FixtureConfig& cfg, Domain domain) {
  const bool target = domain == Domain::Target;
  const int fs = target ? cfg.fs_target : cfg.fs_source;
  const DomainShift sh = shift_params(cfg.shift, domain);
  const char* dom_tag = target ? "target" : "source";
  Rng cls_rng(cfg.seed, std::string("fixtures/class/") + dom_tag);

  std::vector<EcgRecord> records;
  const int per_record = cfg.n_beats / cfg.n_records;
  int remaining = cfg.n_beats;
  for (int r = 0; r < cfg.n_records; ++r) {
    const int beats = (r + 1 == cfg.n_records) ? remaining : per_record;
    remaining -= beats;
    Rng rng(cfg.seed, std::string("fixtures/signal/") + dom_tag, static_cast<uint64_t>(r));
    const double rec_amp = 1.0 + 0.10 * rng.normal();
    const double rec_rr = cfg.rr_base * sh.rr * (1.0 + 0.05 * rng.normal());

    // beat classes and times
    std::vector<BeatClass> classes(static_cast<size_t>(beats));
    for (auto& c : classes) {
      const double u = cls_rng.uniform();
      double acc = 0.0;
      int k = kNumClasses - 1;
      for (int i = 0; i < kNumClasses; ++i) {
        acc += cfg.priors[static_cast<size_t>(i)];
        if (u < acc) {
          k = i;
          break;
        }
      }
      c = class_from_index(k);
    }
    std::vector<double> times(static_cast<size_t>(beats));
    double t = 1.0;
    for (int i = 0; i < beats; ++i) {
      times[static_cast<size_t>(i)] = t;
      double rr = rec_rr * (1.0 + 0.06 * rng.normal());
      if (i + 1 < beats && classes[static_cast<size_t>(i + 1)] == BeatClass::S) rr *= 0.68;
      if (classes[static_cast<size_t>(i)] == BeatClass::V) rr *= 1.22;  // compensatory pause
      t += std::max(0.22, rr);
    }

    const int64_t n = static_cast<int64_t>(std::ceil((t + 1.0) * fs));
    std::vector<float> wave(static_cast<size_t>(n), 0.0f);
    for (int i = 0; i < beats; ++i) {
      const BeatShape base = shape_for(classes[static_cast<size_t>(i)]);
      const double amp = rec_amp * sh.amp * (1.0 + 0.07 * rng.normal());
      const double width = sh.width * (1.0 + 0.04 * rng.normal());
      const double tc = times[static_cast<size_t>(i)];
      const int64_t lo = std::max<int64_t>(0, static_cast<int64_t>((tc - 0.40) * fs));
      const int64_t hi = std::min<int64_t>(n - 1, static_cast<int64_t>((tc + 0.42) * fs));
      for (int64_t j = lo; j <= hi; ++j) {
        const double dt = static_cast<double>(j) / fs - tc;
        double v = base.qrs_amp * gauss(dt, base.qrs_sigma * width);
        v += base.dip_amp * gauss(dt - base.dip_offset * width, base.dip_sigma * width);
        v += base.t_amp * sh.t_amp * gauss(dt - base.t_offset, base.t_sigma * width);
        v += base.p_amp * gauss(dt - base.p_offset, base.p_sigma);
        wave[static_cast<size_t>(j)] += static_cast<float>(amp * v);
      }
    }
    // baseline wander (removed by the band-pass) and in-band noise
    const double wander_phase = rng.uniform(0.0, 6.2831853);
    for (int64_t j = 0; j < n; ++j) {
      const double tt = static_cast<double>(j) / fs;
      double v = 0.15 * std::sin(2.0 * 3.14159265358979 * 0.25 * tt + wander_phase);
      v += sh.noise * rng.normal();
      wave[static_cast<size_t>(j)] += static_cast<float>(v);
    }

    EcgRecord rec;
    rec.record_id = std::string(target ? "tgt" : "src") + (r < 10 ? "0" : "") + std::to_string(r);
    rec.fs = fs;
    rec.channel_names = {target ? "V5" : "MLII"};
    rec.channels = {std::move(wave)};
    for (int i = 0; i < beats; ++i) {
      const int64_t idx = static_cast<int64_t>(std::llround(times[static_cast<size_t>(i)] * fs));
      rec.annotations.emplace_back(idx, symbol_for(classes[static_cast<size_t>(i)]));
    }
    rec.validate();
    records.push_back(std::move(rec));
  }
  return records;
}

void write_fixtures(const std::filesystem::path& out_dir, const FixtureConfig& cfg) {
  for (Domain d : {Domain::Source, Domain::Target}) {
    const auto records = generate_domain(cfg, d);
    const std::filesystem::path base = out_dir / (d == Domain::Source ? "source" : "target");
    for (const auto& rec : records) write_record(rec, base / rec.record_id);
  }
}

}  // namespace ecgda
