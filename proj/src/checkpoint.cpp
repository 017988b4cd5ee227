#include "ecgda/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ecgda::ad {

namespace {

constexpr uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_params(const std::filesystem::path& path, const std::vector<const Param*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const Param* p : params) {
    put_u32(out, static_cast<uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(out, static_cast<uint32_t>(p->value.shape.size()));
    for (int d : p->value.shape) put_u32(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

void save_params(const std::filesystem::path& path, const std::vector<Param*>& params) {
  std::vector<const Param*> cp(params.begin(), params.end());
  save_params(path, cp);
}

void load_params(const std::filesystem::path& path, const std::vector<Param*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const uint32_t version = get_u32(in);
  if (version != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  const uint32_t count = get_u32(in);
  if (count != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch (file has " +
                             std::to_string(count) + ", model has " +
                             std::to_string(params.size()) + ")");
  for (Param* p : params) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != p->name)
      throw std::runtime_error("checkpoint: parameter name mismatch, file has '" + name +
                               "', model expects '" + p->name + "'");
    const uint32_t ndim = get_u32(in);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(get_u32(in));
    if (shape != p->value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                               shape_str(shape) + " vs model " + shape_str(p->value.shape));
    in.read(reinterpret_cast<char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated data for '" + name + "'");
  }
}

}  // namespace ecgda::ad
