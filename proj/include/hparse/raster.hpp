#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hparse {

// Reserved label value for pixels excluded from evaluation and training.
inline constexpr std::uint8_t kIgnoreLabel = 255;

// Per-pixel hard class indices, row-major.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {
    if (h < 1 || w < 1) throw std::invalid_argument("LabelMap: size must be >= 1x1");
  }

  std::uint8_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t pixel_count() const { return labels.size(); }

  bool same_shape(const LabelMap& o) const { return height == o.height && width == o.width; }

  bool operator==(const LabelMap& o) const = default;
};

// Per-pixel class probability field, row-major, channel-minor.
struct ProbMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  ProbMap() = default;
  ProbMap(int h, int w, int c)
      : height(h), width(w), channels(c),
        values(static_cast<std::size_t>(h) * w * c, 0.0) {}

  double at(int r, int c, int k) const {
    return values[(static_cast<std::size_t>(r) * width + c) * channels + k];
  }
  double& at(int r, int c, int k) {
    return values[(static_cast<std::size_t>(r) * width + c) * channels + k];
  }

  // Per-pixel channel sums must be 1 within tol.
  bool is_normalized(double tol = 1e-6) const {
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        double s = 0.0;
        for (int k = 0; k < channels; ++k) s += at(r, c, k);
        if (std::abs(s - 1.0) > tol) return false;
      }
    return true;
  }

  static ProbMap one_hot(const LabelMap& m, int num_classes) {
    ProbMap p(m.height, m.width, num_classes);
    for (int r = 0; r < m.height; ++r)
      for (int c = 0; c < m.width; ++c) {
        const std::uint8_t v = m.at(r, c);
        if (v >= num_classes)
          throw std::invalid_argument("one_hot: label " + std::to_string(v) +
                                      " out of range for " + std::to_string(num_classes) +
                                      " classes");
        p.at(r, c, v) = 1.0;
      }
    return p;
  }
};

// Interleaved 8-bit image, 1 or 3 channels.
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> values;

  ImageU8() = default;
  ImageU8(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c),
        values(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t at(int r, int c, int k) const {
    return values[(static_cast<std::size_t>(r) * width + c) * channels + k];
  }
  std::uint8_t& at(int r, int c, int k) {
    return values[(static_cast<std::size_t>(r) * width + c) * channels + k];
  }

  bool operator==(const ImageU8& o) const = default;
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> mask;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w)
      : height(h), width(w), mask(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t at(int r, int c) const { return mask[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t& at(int r, int c) { return mask[static_cast<std::size_t>(r) * width + c]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : mask) n += v;
    return n;
  }
};

}  // namespace hparse
