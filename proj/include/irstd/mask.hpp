#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace irstd {

// H x W binary label image, row-major, values in {0, 1}.
struct BinaryMask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> v;

  static BinaryMask zeros(int h, int w) { return {h, w, std::vector<uint8_t>(static_cast<size_t>(h) * w, 0)}; }

  uint8_t at(int row, int col) const { return v[static_cast<size_t>(row) * w + col]; }
  void set(int row, int col, uint8_t val) { v[static_cast<size_t>(row) * w + col] = val; }

  int64_t count() const {
    int64_t c = 0;
    for (uint8_t x : v) c += x;
    return c;
  }

  bool empty_mask() const { return count() == 0; }
};

// Max-pool downsampling of a binary mask; dims must be divisible by factor.
inline BinaryMask max_pool_mask(const BinaryMask& m, int factor) {
  if (factor <= 0) throw std::invalid_argument("max_pool_mask: non-positive factor");
  if (m.h % factor != 0 || m.w % factor != 0) {
    throw std::invalid_argument("max_pool_mask: dims not divisible by factor");
  }
  BinaryMask out = BinaryMask::zeros(m.h / factor, m.w / factor);
  for (int r = 0; r < m.h; ++r) {
    for (int c = 0; c < m.w; ++c) {
      if (m.at(r, c)) out.set(r / factor, c / factor, 1);
    }
  }
  return out;
}

}  // namespace irstd
