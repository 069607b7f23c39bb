#include "irstd/unet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "irstd/rng.hpp"

namespace irstd {

namespace {

void add_conv(ModelParams& mp, Rng& rng, const std::string& name, int out_ch,
              int in_ch, int k, double bias_init = 0.0) {
  double stddev = std::sqrt(2.0 / (in_ch * k * k));  // He fan-in
  mp.params.emplace_back(name + ".w",
                         Tensor::randn({out_ch, in_ch, k, k}, rng, stddev, true));
  mp.params.emplace_back(name + ".b",
                         Tensor::full({out_ch}, bias_init, true));
}

// Targets cover a tiny fraction of the image; starting the prediction heads
// at sigmoid(0) = 0.5 makes early training spend all its budget pushing the
// background down. A negative prior bias starts predictions near the
// foreground base rate instead.
constexpr double kHeadBiasPrior = -2.0;

Tensor conv_block(const ModelParams& mp, const std::string& name, const Tensor& x) {
  Tensor y = conv2d(x, mp.at(name + ".w"), mp.at(name + ".b"), 1, 1);
  if (mp.config.use_instance_norm) y = instance_norm(y);
  return relu(y);
}

Tensor stage(const ModelParams& mp, const std::string& name, const Tensor& x) {
  return conv_block(mp, name + ".c2", conv_block(mp, name + ".c1", x));
}

Tensor head(const ModelParams& mp, const std::string& name, const Tensor& x) {
  return sigmoid(conv2d(x, mp.at(name + ".w"), mp.at(name + ".b"), 1, 0));
}

// --- binary serialization helpers (explicit little-endian) ---

constexpr char kMagic[5] = {'M', 'S', 'H', 'N', '1'};
constexpr uint32_t kFormatVersion = 1;

struct ByteWriter {
  std::vector<uint8_t> bytes;
  void u8(uint8_t v) { bytes.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
};

struct ByteReader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > bytes.size()) throw CheckpointError("checkpoint truncated");
  }
  uint8_t u8() { need(1); return bytes[pos++]; }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s(bytes.begin() + pos, bytes.begin() + pos + n);
    pos += n;
    return s;
  }
};

uint64_t fnv1a(const uint8_t* data, size_t n) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Tensor& ModelParams::at(const std::string& name) {
  for (auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw std::invalid_argument("ModelParams: unknown parameter " + name);
}

const Tensor& ModelParams::at(const std::string& name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

int64_t ModelParams::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : params) t.zero_grad();
}

ModelParams build(const UNetConfig& config) {
  if (config.height % 8 != 0 || config.width % 8 != 0 || config.height <= 0 ||
      config.width <= 0) {
    throw std::invalid_argument("build: input size must be divisible by 8");
  }
  for (int m : config.channel_multipliers) {
    if (m <= 0) throw std::invalid_argument("build: non-positive channel multiplier");
  }
  if (config.base_channels <= 0) {
    throw std::invalid_argument("build: non-positive base_channels");
  }

  const int c1 = config.scale_channels(1);  // bottleneck, H/8
  const int c2 = config.scale_channels(2);
  const int c3 = config.scale_channels(3);
  const int c4 = config.scale_channels(4);  // full resolution

  ModelParams mp;
  mp.config = config;
  Rng rng(config.seed);

  // encoder, fine to coarse
  add_conv(mp, rng, "enc_s4.c1", c4, 1, 3);
  add_conv(mp, rng, "enc_s4.c2", c4, c4, 3);
  add_conv(mp, rng, "enc_s3.c1", c3, c4, 3);
  add_conv(mp, rng, "enc_s3.c2", c3, c3, 3);
  add_conv(mp, rng, "enc_s2.c1", c2, c3, 3);
  add_conv(mp, rng, "enc_s2.c2", c2, c2, 3);
  add_conv(mp, rng, "enc_s1.c1", c1, c2, 3);
  add_conv(mp, rng, "enc_s1.c2", c1, c1, 3);
  // decoder with skip concatenation
  add_conv(mp, rng, "dec_s2.c1", c2, c1 + c2, 3);
  add_conv(mp, rng, "dec_s2.c2", c2, c2, 3);
  add_conv(mp, rng, "dec_s3.c1", c3, c2 + c3, 3);
  add_conv(mp, rng, "dec_s3.c2", c3, c3, 3);
  add_conv(mp, rng, "dec_s4.c1", c4, c3 + c4, 3);
  add_conv(mp, rng, "dec_s4.c2", c4, c4, 3);
  // per-scale heads and the fusion head, 1x1
  add_conv(mp, rng, "head1", 1, c1, 1, kHeadBiasPrior);
  add_conv(mp, rng, "head2", 1, c2, 1, kHeadBiasPrior);
  add_conv(mp, rng, "head3", 1, c3, 1, kHeadBiasPrior);
  add_conv(mp, rng, "head4", 1, c4, 1, kHeadBiasPrior);
  add_conv(mp, rng, "fuse", 1, 4, 1, kHeadBiasPrior);
  return mp;
}

MultiScaleOutputs forward(const ModelParams& mp, const Tensor& image) {
  const auto& cfg = mp.config;
  if (image.shape() != std::vector<int>{1, 1, cfg.height, cfg.width}) {
    throw std::invalid_argument("forward: image must be 1x1xHxW matching config");
  }

  Tensor e4 = stage(mp, "enc_s4", image);                 // H
  Tensor e3 = stage(mp, "enc_s3", max_pool2d(e4, 2));     // H/2
  Tensor e2 = stage(mp, "enc_s2", max_pool2d(e3, 2));     // H/4
  Tensor x1 = stage(mp, "enc_s1", max_pool2d(e2, 2));     // H/8, bottleneck
  Tensor x2 = stage(mp, "dec_s2", concat_channels({upsample_bilinear(x1, 2), e2}));
  Tensor x3 = stage(mp, "dec_s3", concat_channels({upsample_bilinear(x2, 2), e3}));
  Tensor x4 = stage(mp, "dec_s4", concat_channels({upsample_bilinear(x3, 2), e4}));

  Tensor p1 = head(mp, "head1", x1);
  Tensor p2 = head(mp, "head2", x2);
  Tensor p3 = head(mp, "head3", x3);
  Tensor p4 = head(mp, "head4", x4);
  Tensor fused = head(mp, "fuse", concat_channels({upsample_bilinear(p1, 8),
                                                   upsample_bilinear(p2, 4),
                                                   upsample_bilinear(p3, 2), p4}));

  MultiScaleOutputs out;
  auto squeeze = [](const Tensor& t) {
    return reshape(t, {t.shape()[2], t.shape()[3]});
  };
  out.scale_preds = {squeeze(p1), squeeze(p2), squeeze(p3), squeeze(p4)};
  out.fused = squeeze(fused);
  return out;
}

void save_checkpoint(const ModelParams& mp, const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 5);
  w.u32(kFormatVersion);
  const auto& c = mp.config;
  w.u32(static_cast<uint32_t>(c.height));
  w.u32(static_cast<uint32_t>(c.width));
  w.u32(static_cast<uint32_t>(c.base_channels));
  for (int m : c.channel_multipliers) w.u32(static_cast<uint32_t>(m));
  w.u64(c.seed);
  w.u8(c.use_instance_norm ? 1 : 0);
  w.u32(static_cast<uint32_t>(mp.params.size()));
  for (const auto& [name, t] : mp.params) {
    w.str(name);
    w.u32(static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) w.u32(static_cast<uint32_t>(d));
    for (double v : t.data()) w.f64(v);
  }
  w.u64(fnv1a(w.bytes.data(), w.bytes.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(w.bytes.data()),
          static_cast<std::streamsize>(w.bytes.size()));
  if (!f) throw CheckpointError("checkpoint write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path, const UNetConfig* expect) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 5 + 8 || std::memcmp(bytes.data(), kMagic, 5) != 0) {
    throw CheckpointError("bad checkpoint magic");
  }
  uint64_t expected_sum = 0;
  for (int i = 0; i < 8; ++i) {
    expected_sum |= static_cast<uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
  }
  if (fnv1a(bytes.data(), bytes.size() - 8) != expected_sum) {
    throw CheckpointError("checkpoint checksum mismatch");
  }

  ByteReader r{bytes, 5};
  uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  UNetConfig cfg;
  cfg.height = static_cast<int>(r.u32());
  cfg.width = static_cast<int>(r.u32());
  cfg.base_channels = static_cast<int>(r.u32());
  for (auto& m : cfg.channel_multipliers) m = static_cast<int>(r.u32());
  cfg.seed = r.u64();
  cfg.use_instance_norm = r.u8() != 0;
  if (expect && !(cfg == *expect)) {
    throw ConfigMismatchError("checkpoint config does not match the expected config");
  }

  ModelParams mp;
  mp.config = cfg;
  uint32_t n_params = r.u32();
  for (uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    uint32_t ndim = r.u32();
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = r.f64();
    mp.params.emplace_back(std::move(name),
                           Tensor::from_data(std::move(shape), std::move(data), true));
  }
  return mp;
}

}  // namespace irstd
