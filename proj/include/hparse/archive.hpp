#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace hparse {

// Minimal uncompressed ustar reader/writer, enough for submission archives:
// regular files with short names. Wire format per POSIX.1-1988: 512-byte
// headers, octal size field, checksum over the header with the checksum
// field blanked, two zero blocks at the end.
struct TarEntry {
  std::string name;
  std::string data;
};

namespace detail {

inline void tar_octal(char* field, std::size_t width, std::uint64_t value) {
  // width includes the terminating NUL.
  for (std::size_t i = width - 1; i-- > 0;) {
    field[i] = static_cast<char>('0' + (value & 7));
    value >>= 3;
  }
  field[width - 1] = '\0';
  if (value != 0) throw std::invalid_argument("tar: value does not fit octal field");
}

inline std::uint64_t tar_parse_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  bool seen = false;
  for (std::size_t i = 0; i < width; ++i) {
    const char c = field[i];
    if (c == '\0') break;
    if (c == ' ') {
      if (seen) break;
      continue;
    }
    if (c < '0' || c > '7') throw std::runtime_error("tar: malformed octal field");
    v = v * 8 + static_cast<std::uint64_t>(c - '0');
    seen = true;
  }
  return v;
}

inline unsigned tar_checksum(const char* block) {
  unsigned sum = 0;
  for (int i = 0; i < 512; ++i)
    sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(block[i]);
  return sum;
}

}  // namespace detail

inline std::string tar_pack(const std::vector<TarEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > 100)
      throw std::invalid_argument("tar: entry name empty or longer than 100 bytes: " + e.name);
    char block[512];
    std::memset(block, 0, sizeof(block));
    std::memcpy(block, e.name.data(), e.name.size());
    detail::tar_octal(block + 100, 8, 0644);             // mode
    detail::tar_octal(block + 108, 8, 0);                // uid
    detail::tar_octal(block + 116, 8, 0);                // gid
    detail::tar_octal(block + 124, 12, e.data.size());   // size
    detail::tar_octal(block + 136, 12, 0);               // mtime, fixed for determinism
    block[156] = '0';                                    // regular file
    std::memcpy(block + 257, "ustar", 6);
    std::memcpy(block + 263, "00", 2);
    const unsigned sum = detail::tar_checksum(block);
    char chk[8];
    detail::tar_octal(chk, 7, sum);
    std::memcpy(block + 148, chk, 7);
    block[155] = ' ';
    out.append(block, sizeof(block));
    out.append(e.data);
    const std::size_t pad = (512 - e.data.size() % 512) % 512;
    out.append(pad, '\0');
  }
  out.append(1024, '\0');
  return out;
}

inline std::vector<TarEntry> tar_unpack(const std::string& bytes) {
  std::vector<TarEntry> entries;
  std::size_t off = 0;
  auto block_is_zero = [&](std::size_t at) {
    for (std::size_t i = 0; i < 512; ++i)
      if (bytes[at + i] != '\0') return false;
    return true;
  };
  while (off + 512 <= bytes.size()) {
    if (block_is_zero(off)) break;  // end-of-archive marker
    const char* block = bytes.data() + off;
    if (std::memcmp(block + 257, "ustar", 5) != 0)
      throw std::runtime_error("tar: missing ustar magic at offset " + std::to_string(off));
    const auto stored = detail::tar_parse_octal(block + 148, 8);
    const unsigned computed = detail::tar_checksum(block);
    if (stored != computed)
      throw std::runtime_error("tar: header checksum mismatch at offset " + std::to_string(off));

    std::string name(block + 345, strnlen(block + 345, 155));  // prefix
    if (!name.empty()) name += "/";
    name.append(block, strnlen(block, 100));
    const std::uint64_t size = detail::tar_parse_octal(block + 124, 12);
    const char type = block[156];
    off += 512;
    const std::size_t padded = (size + 511) / 512 * 512;
    if (off + padded > bytes.size())
      throw std::runtime_error("tar: truncated archive, entry " + name);
    if (type == '0' || type == '\0')
      entries.push_back({name, bytes.substr(off, size)});
    else if (type != '5')  // directories are tolerated and skipped
      throw std::runtime_error("tar: unsupported entry type '" + std::string(1, type) +
                               "' for " + name);
    off += padded;
  }
  if (off + 512 > bytes.size() || !block_is_zero(off))
    throw std::runtime_error("tar: missing end-of-archive marker");
  return entries;
}

}  // namespace hparse
