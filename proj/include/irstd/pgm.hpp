#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace irstd {

struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> pixels;  // row-major
};

// Binary PGM (P5), maxval 255.
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace irstd
