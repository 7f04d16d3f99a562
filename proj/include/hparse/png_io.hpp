#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hparse/raster.hpp"

namespace hparse {

// Minimal PNG codec over zlib. Writes grayscale 8/16-bit and RGB 8-bit,
// non-interlaced, filter type 0. Reads the same plus palette images (the
// palette index is taken as the stored value) and all five scanline filters.
namespace png {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

struct Raw {
  int width = 0;
  int height = 0;
  int bit_depth = 0;   // 8 or 16
  int color_type = 0;  // 0 gray, 2 rgb, 3 palette
  // Unfiltered scanline bytes; 16-bit samples big-endian.
  std::vector<std::uint8_t> data;
};

inline int channels_for(int color_type) {
  switch (color_type) {
    case 0:
    case 3:
      return 1;
    case 2:
      return 3;
    default:
      throw std::runtime_error("png: unsupported color type " + std::to_string(color_type));
  }
}

inline std::vector<std::uint8_t> encode(const Raw& img) {
  const int ch = channels_for(img.color_type);
  const std::size_t row_bytes =
      static_cast<std::size_t>(img.width) * ch * (img.bit_depth / 8);
  if (img.data.size() != row_bytes * img.height)
    throw std::runtime_error("png encode: data size mismatch");

  std::vector<std::uint8_t> out;
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.insert(out.end(), sig, sig + 8);

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(static_cast<std::uint8_t>(img.bit_depth));
  ihdr.push_back(static_cast<std::uint8_t>(img.color_type));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);

  // Filter byte 0 before each scanline.
  std::vector<std::uint8_t> filtered;
  filtered.reserve((row_bytes + 1) * img.height);
  for (int r = 0; r < img.height; ++r) {
    filtered.push_back(0);
    const std::uint8_t* row = img.data.data() + static_cast<std::size_t>(r) * row_bytes;
    filtered.insert(filtered.end(), row, row + row_bytes);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(filtered.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, filtered.data(),
                static_cast<uLong>(filtered.size()), 6) != Z_OK)
    throw std::runtime_error("png encode: compression failed");
  comp.resize(comp_len);
  append_chunk(out, "IDAT", comp);
  append_chunk(out, "IEND", {});
  return out;
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

inline Raw decode(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  auto bad = [&origin](const std::string& why) -> std::runtime_error {
    return std::runtime_error("malformed png " + origin + ": " + why);
  };
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0) throw bad("bad signature");

  Raw img;
  std::vector<std::uint8_t> idat;
  std::vector<std::array<std::uint8_t, 3>> palette;
  bool saw_ihdr = false, saw_iend = false;
  std::size_t pos = 8;
  while (pos + 8 <= bytes.size() && !saw_iend) {
    const std::uint32_t len = get_be32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) throw bad("truncated chunk");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const std::uint8_t* data = bytes.data() + pos + 8;
    const std::uint32_t stored_crc = get_be32(bytes.data() + pos + 8 + len);
    const auto calc_crc = crc32(0L, bytes.data() + pos + 4, 4 + len);
    if (stored_crc != static_cast<std::uint32_t>(calc_crc)) throw bad("chunk crc mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw bad("bad IHDR length");
      img.width = static_cast<int>(get_be32(data));
      img.height = static_cast<int>(get_be32(data + 4));
      img.bit_depth = data[8];
      img.color_type = data[9];
      if (img.width < 1 || img.height < 1) throw bad("bad dimensions");
      if (data[12] != 0) throw bad("interlaced images unsupported");
      if (img.bit_depth != 8 && !(img.bit_depth == 16 && img.color_type == 0))
        throw bad("unsupported bit depth " + std::to_string(img.bit_depth));
      channels_for(img.color_type);  // throws on unsupported type
      saw_ihdr = true;
    } else if (std::memcmp(type, "PLTE", 4) == 0) {
      if (len % 3 != 0) throw bad("bad PLTE length");
      for (std::uint32_t i = 0; i + 2 < len; i += 3)
        palette.push_back({data[i], data[i + 1], data[i + 2]});
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
    }
    // Ancillary chunks are skipped.
    pos += 12 + len;
  }
  if (!saw_ihdr) throw bad("missing IHDR");
  if (!saw_iend) throw bad("missing IEND");
  if (img.color_type == 3 && palette.empty()) throw bad("palette image without PLTE");
  if (idat.empty()) throw bad("missing IDAT");

  const int ch = channels_for(img.color_type);
  const std::size_t row_bytes =
      static_cast<std::size_t>(img.width) * ch * (img.bit_depth / 8);
  const std::size_t expect = (row_bytes + 1) * img.height;
  std::vector<std::uint8_t> raw(expect);
  uLongf raw_len = static_cast<uLongf>(expect);
  const int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || raw_len != expect) throw bad("bad IDAT stream");

  // Undo per-scanline filters.
  const std::size_t bpp = static_cast<std::size_t>(ch) * (img.bit_depth / 8);
  img.data.assign(row_bytes * img.height, 0);
  for (int r = 0; r < img.height; ++r) {
    const std::uint8_t filter = raw[static_cast<std::size_t>(r) * (row_bytes + 1)];
    const std::uint8_t* src = raw.data() + static_cast<std::size_t>(r) * (row_bytes + 1) + 1;
    std::uint8_t* dst = img.data.data() + static_cast<std::size_t>(r) * row_bytes;
    const std::uint8_t* prev =
        r > 0 ? img.data.data() + static_cast<std::size_t>(r - 1) * row_bytes : nullptr;
    for (std::size_t i = 0; i < row_bytes; ++i) {
      const int a = i >= bpp ? dst[i - bpp] : 0;
      const int b = prev ? prev[i] : 0;
      const int c = (prev && i >= bpp) ? prev[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw bad("unknown filter type " + std::to_string(filter));
      }
      dst[i] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  return img;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace png

// ---------------------------------------------------------------------------
// Label maps: 8-bit single-channel raster, pixel value = class id, 255 ignore.

inline std::vector<std::uint8_t> encode_label_map(const LabelMap& m) {
  png::Raw raw;
  raw.width = m.width;
  raw.height = m.height;
  raw.bit_depth = 8;
  raw.color_type = 0;
  raw.data = m.labels;
  return png::encode(raw);
}

inline void write_label_map(const LabelMap& m, const std::string& path) {
  png::write_file(path, encode_label_map(m));
}

// num_classes > 0 enables label range validation (value < C or == 255).
inline LabelMap decode_label_map(const std::vector<std::uint8_t>& bytes,
                                 const std::string& origin, int num_classes = 0) {
  const png::Raw raw = png::decode(bytes, origin);
  if (raw.bit_depth != 8 || (raw.color_type != 0 && raw.color_type != 3))
    throw std::runtime_error("label raster " + origin +
                             ": expected 8-bit single-channel, got depth " +
                             std::to_string(raw.bit_depth) + " color type " +
                             std::to_string(raw.color_type));
  LabelMap m(raw.height, raw.width);
  m.labels = raw.data;
  if (num_classes > 0) {
    for (int r = 0; r < m.height; ++r)
      for (int c = 0; c < m.width; ++c) {
        const std::uint8_t v = m.at(r, c);
        if (v != kIgnoreLabel && v >= num_classes)
          throw std::runtime_error("label raster " + origin + ": value " + std::to_string(v) +
                                   " at pixel (" + std::to_string(r) + "," + std::to_string(c) +
                                   ") exceeds class count " + std::to_string(num_classes));
      }
  }
  return m;
}

inline LabelMap read_label_map(const std::string& path, int num_classes = 0) {
  return decode_label_map(png::read_file(path), path, num_classes);
}

// ---------------------------------------------------------------------------
// 8-bit images (1 or 3 channels) for the synthetic dataset.

inline void write_image(const ImageU8& img, const std::string& path) {
  png::Raw raw;
  raw.width = img.width;
  raw.height = img.height;
  raw.bit_depth = 8;
  raw.color_type = img.channels == 3 ? 2 : 0;
  raw.data = img.values;
  png::write_file(path, png::encode(raw));
}

inline ImageU8 read_image(const std::string& path) {
  const png::Raw raw = png::decode(png::read_file(path), path);
  if (raw.bit_depth != 8)
    throw std::runtime_error("image " + path + ": expected 8-bit raster");
  ImageU8 img(raw.height, raw.width, png::channels_for(raw.color_type));
  img.values = raw.data;
  return img;
}

// ---------------------------------------------------------------------------
// 16-bit grayscale rasters (heatmap dumps, value = round(65535 * h)).

inline void write_gray16(const std::vector<std::uint16_t>& values, int height, int width,
                         const std::string& path) {
  if (values.size() != static_cast<std::size_t>(height) * width)
    throw std::invalid_argument("write_gray16: size mismatch");
  png::Raw raw;
  raw.width = width;
  raw.height = height;
  raw.bit_depth = 16;
  raw.color_type = 0;
  raw.data.resize(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    raw.data[2 * i] = static_cast<std::uint8_t>(values[i] >> 8);
    raw.data[2 * i + 1] = static_cast<std::uint8_t>(values[i] & 0xff);
  }
  png::write_file(path, png::encode(raw));
}

inline std::vector<std::uint16_t> read_gray16(const std::string& path, int& height, int& width) {
  const png::Raw raw = png::decode(png::read_file(path), path);
  if (raw.bit_depth != 16 || raw.color_type != 0)
    throw std::runtime_error("raster " + path + ": expected 16-bit grayscale");
  height = raw.height;
  width = raw.width;
  std::vector<std::uint16_t> values(static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<std::uint16_t>((raw.data[2 * i] << 8) | raw.data[2 * i + 1]);
  return values;
}

}  // namespace hparse
