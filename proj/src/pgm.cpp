#include "irstd/pgm.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace irstd {

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (static_cast<int64_t>(img.pixels.size()) != static_cast<int64_t>(img.h) * img.w) {
    throw std::invalid_argument("write_pgm: size mismatch");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path.string());
  f << "P5\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw std::runtime_error("write_pgm: write failed " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pgm: cannot open " + path.string());

  auto next_token = [&f, &path]() {
    std::string tok;
    while (f >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(f, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("read_pgm: truncated header " + path.string());
  };

  if (next_token() != "P5") throw std::runtime_error("read_pgm: not a P5 file " + path.string());
  GrayImage img;
  img.w = std::stoi(next_token());
  img.h = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (img.w <= 0 || img.h <= 0 || maxval != 255) {
    throw std::runtime_error("read_pgm: unsupported header " + path.string());
  }
  f.get();  // single whitespace after maxval
  img.pixels.resize(static_cast<size_t>(img.h) * img.w);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw std::runtime_error("read_pgm: truncated pixel data " + path.string());
  }
  return img;
}

}  // namespace irstd
