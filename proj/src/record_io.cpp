#include "ecgda/record_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ecgda {

namespace {

std::string fmt_float(float v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

float parse_float(const std::string& tok, const std::string& where, int64_t line) {
  const char* p = tok.c_str();
  char* end = nullptr;
  float v = std::strtof(p, &end);
  if (end == p || *end != '\0')
    throw ParseError(where + " line " + std::to_string(line) + ": bad float '" + tok + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

const std::vector<float>& EcgRecord::channel(const std::string& name) const {
  if (channels.empty()) throw ParseError("record " + record_id + ": no channels");
  if (name.empty()) return channels[0];
  for (size_t i = 0; i < channel_names.size(); ++i)
    if (channel_names[i] == name) return channels[i];
  throw ParseError("record " + record_id + ": no channel named '" + name + "'");
}

void EcgRecord::validate() const {
  if (fs <= 0) throw ParseError("record " + record_id + ": fs must be positive");
  if (channels.empty() || channels[0].empty())
    throw ParseError("record " + record_id + ": empty signal");
  if (channel_names.size() != channels.size())
    throw ParseError("record " + record_id + ": channel name/data count mismatch");
  const size_t len = channels[0].size();
  for (size_t i = 1; i < channels.size(); ++i)
    if (channels[i].size() != len)
      throw ParseError("record " + record_id + ": channel length mismatch (channel " +
                       channel_names[i] + " has " + std::to_string(channels[i].size()) +
                       " samples, expected " + std::to_string(len) + ")");
  int64_t prev = -1;
  for (size_t i = 0; i < annotations.size(); ++i) {
    const auto& [idx, sym] = annotations[i];
    if (idx <= prev)
      throw ParseError("record " + record_id + ": non-monotone annotation index at entry " +
                       std::to_string(i) + " (" + std::to_string(idx) + " after " +
                       std::to_string(prev) + ")");
    if (idx >= static_cast<int64_t>(len))
      throw ParseError("record " + record_id + ": annotation index " + std::to_string(idx) +
                       " beyond signal length " + std::to_string(len));
    (void)sym;
    prev = idx;
  }
}

EcgRecord load_record(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path meta_path = dir / "meta.json";
  const fs::path signal_path = dir / "signal.csv";
  const fs::path ann_path = dir / "annotations.csv";
  for (const auto& p : {meta_path, signal_path, ann_path})
    if (!fs::exists(p)) throw ParseError("missing file: " + p.string());

  EcgRecord rec;
  int64_t expected_samples = -1;
  {
    std::ifstream in(meta_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw ParseError(meta_path.string() + ": malformed JSON: " + e.what());
    }
    try {
      rec.record_id = j.at("record_id").get<std::string>();
      rec.fs = j.at("fs").get<int>();
      rec.channel_names = j.at("channel_names").get<std::vector<std::string>>();
      expected_samples = j.at("n_samples").get<int64_t>();
    } catch (const std::exception& e) {
      throw ParseError(meta_path.string() + ": missing or malformed field: " + e.what());
    }
  }

  {
    std::ifstream in(signal_path);
    std::string line;
    if (!std::getline(in, line))
      throw ParseError(signal_path.string() + " line 1: malformed header (empty file)");
    auto header = split_csv(line);
    if (header != rec.channel_names)
      throw ParseError(signal_path.string() + " line 1: malformed header (channel names do not match meta.json)");
    rec.channels.assign(rec.channel_names.size(), {});
    if (expected_samples >= 0)
      for (auto& c : rec.channels) c.reserve(static_cast<size_t>(expected_samples));
    int64_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto toks = split_csv(line);
      if (toks.size() != rec.channels.size())
        throw ParseError(signal_path.string() + " line " + std::to_string(lineno) +
                         ": expected " + std::to_string(rec.channels.size()) + " columns, got " +
                         std::to_string(toks.size()));
      for (size_t c = 0; c < toks.size(); ++c)
        rec.channels[c].push_back(parse_float(toks[c], signal_path.string(), lineno));
    }
    if (expected_samples >= 0 && rec.n_samples() != expected_samples)
      throw ParseError(signal_path.string() + ": sample count " + std::to_string(rec.n_samples()) +
                       " does not match meta.json n_samples " + std::to_string(expected_samples));
  }

  {
    std::ifstream in(ann_path);
    std::string line;
    if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"sample_index", "symbol"})
      throw ParseError(ann_path.string() + " line 1: malformed header (expected 'sample_index,symbol')");
    int64_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto toks = split_csv(line);
      if (toks.size() != 2 || toks[1].size() != 1)
        throw ParseError(ann_path.string() + " line " + std::to_string(lineno) + ": expected 'index,symbol'");
      char* end = nullptr;
      long long idx = std::strtoll(toks[0].c_str(), &end, 10);
      if (end == toks[0].c_str() || *end != '\0' || idx < 0)
        throw ParseError(ann_path.string() + " line " + std::to_string(lineno) + ": bad sample index '" +
                         toks[0] + "'");
      rec.annotations.emplace_back(idx, toks[1][0]);
    }
  }

  rec.validate();
  return rec;
}

void write_record(const EcgRecord& rec, const std::filesystem::path& dir) {
  rec.validate();
  std::filesystem::create_directories(dir);
  {
    nlohmann::ordered_json j;
    j["record_id"] = rec.record_id;
    j["fs"] = rec.fs;
    j["channel_names"] = rec.channel_names;
    j["n_samples"] = rec.n_samples();
    std::ofstream out(dir / "meta.json");
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "signal.csv");
    for (size_t c = 0; c < rec.channel_names.size(); ++c)
      out << (c ? "," : "") << rec.channel_names[c];
    out << "\n";
    const int64_t n = rec.n_samples();
    for (int64_t i = 0; i < n; ++i) {
      for (size_t c = 0; c < rec.channels.size(); ++c)
        out << (c ? "," : "") << fmt_float(rec.channels[c][static_cast<size_t>(i)]);
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "annotations.csv");
    out << "sample_index,symbol\n";
    for (const auto& [idx, sym] : rec.annotations) out << idx << "," << sym << "\n";
  }
}

std::optional<BeatClass> map_symbol(char symbol) {
  switch (symbol) {
    case 'N':
    case 'L':
    case 'R':
    case 'e':
    case 'j':
      return BeatClass::N;
    case 'V':
    case 'E':
      return BeatClass::V;
    case 'A':
    case 'a':
    case 'J':
    case 'S':
      return BeatClass::S;
    case 'F':
      return BeatClass::F;
    default:
      return std::nullopt;
  }
}

LabeledDataset augment(const LabeledDataset& ds, const AugmentFactors& factors) {
  LabeledDataset out;
  out.domain = ds.domain;
  out.segments.reserve(ds.segments.size() * 2);
  out.segments = ds.segments;
  // copies appended after all originals, grouped by class
  for (int k = 0; k < kNumClasses; ++k) {
    const int f = factors[k];
    if (f < 0) throw std::invalid_argument("augment: negative factor");
    if (f == 0) continue;
    for (int round = 0; round < f; ++round) {
      for (const auto& s : ds.segments) {
        if (s.label && class_index(*s.label) == k) {
          out.segments.push_back(s);
          out.segments.back().duplicated = true;
        }
      }
    }
  }
  out.recount();
  return out;
}

}  // namespace ecgda
