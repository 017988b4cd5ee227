#include "ecgda/png_writer.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

namespace ecgda {

namespace {

uint32_t crc32_of(const uint8_t* data, size_t n, uint32_t crc = 0xffffffffu) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc;
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> head;
  put_be32(head, static_cast<uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  uint32_t crc = crc32_of(reinterpret_cast<const uint8_t*>(type), 4);
  crc = crc32_of(payload.data(), payload.size(), crc);
  crc ^= 0xffffffffu;
  std::vector<uint8_t> tail;
  put_be32(tail, crc);
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<uint8_t>& rgb) {
  if (rgb.size() != static_cast<size_t>(width) * height * 3)
    throw std::invalid_argument("write_png_rgb: pixel buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_png_rgb: cannot open " + path.string());

  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(out, "IHDR", ihdr);

  // raw scanlines, filter byte 0 per row
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (static_cast<size_t>(width) * 3 + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const uint8_t* row = &rgb[static_cast<size_t>(y) * width * 3];
    raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
  }

  // zlib stream with stored deflate blocks
  std::vector<uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  size_t pos = 0;
  while (pos < raw.size()) {
    const size_t chunk = std::min<size_t>(65535, raw.size() - pos);
    const bool last = pos + chunk == raw.size();
    idat.push_back(last ? 1 : 0);
    idat.push_back(static_cast<uint8_t>(chunk & 0xff));
    idat.push_back(static_cast<uint8_t>(chunk >> 8));
    idat.push_back(static_cast<uint8_t>(~chunk & 0xff));
    idat.push_back(static_cast<uint8_t>((~chunk >> 8) & 0xff));
    idat.insert(idat.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
                raw.begin() + static_cast<std::ptrdiff_t>(pos + chunk));
    pos += chunk;
  }
  uint32_t a = 1, b = 0;  // adler32
  for (uint8_t byte : raw) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  put_be32(idat, (b << 16) | a);
  write_chunk(out, "IDAT", idat);
  write_chunk(out, "IEND", {});
}

}  // namespace ecgda
