#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hparse/raster.hpp"

namespace hparse {

// Dense H x W x C field of doubles, row-major, channel-minor. Used for
// logits, gradients and network activations.
struct Tensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int h, int w, int c)
      : height(h), width(w), channels(c), v(static_cast<std::size_t>(h) * w * c, 0.0) {}

  double at(int r, int c, int k) const {
    return v[(static_cast<std::size_t>(r) * width + c) * channels + k];
  }
  double& at(int r, int c, int k) {
    return v[(static_cast<std::size_t>(r) * width + c) * channels + k];
  }

  bool same_shape(const Tensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  static Tensor from_image(const ImageU8& img) {
    Tensor t(img.height, img.width, img.channels);
    for (std::size_t i = 0; i < img.values.size(); ++i)
      t.v[i] = img.values[i] / 255.0;
    return t;
  }
};

// Per-pixel softmax over channels, numerically stabilized.
inline ProbMap softmax(const Tensor& logits) {
  ProbMap p(logits.height, logits.width, logits.channels);
  const int c = logits.channels;
  for (int r = 0; r < logits.height; ++r)
    for (int col = 0; col < logits.width; ++col) {
      double m = logits.at(r, col, 0);
      for (int k = 1; k < c; ++k) m = std::max(m, logits.at(r, col, k));
      double z = 0.0;
      for (int k = 0; k < c; ++k) {
        const double e = std::exp(logits.at(r, col, k) - m);
        p.at(r, col, k) = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (int k = 0; k < c; ++k) p.at(r, col, k) *= inv;
    }
  return p;
}

// Hard per-pixel argmax; ties break toward the lowest class id.
inline LabelMap argmax_labels(const Tensor& logits) {
  LabelMap m(logits.height, logits.width);
  for (int r = 0; r < logits.height; ++r)
    for (int c = 0; c < logits.width; ++c) {
      int best = 0;
      double best_v = logits.at(r, c, 0);
      for (int k = 1; k < logits.channels; ++k) {
        const double v = logits.at(r, c, k);
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      m.at(r, c) = static_cast<std::uint8_t>(best);
    }
  return m;
}

}  // namespace hparse
