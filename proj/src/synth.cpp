#include "irstd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "irstd/metrics.hpp"
#include "irstd/pgm.hpp"
#include "irstd/rng.hpp"

namespace irstd {

namespace {

using nlohmann::ordered_json;

// mask radius of a Gaussian blob at the 25% cutoff
double mask_radius(double sigma) { return sigma * std::sqrt(2.0 * std::log(4.0)); }

// per-bucket sigma sub-ranges, clamped to the configured range
std::pair<double, double> bucket_sigma_range(const SceneConfig& cfg, int bucket) {
  static constexpr double lo[3] = {0.7, 1.3, 2.5};
  static constexpr double hi[3] = {1.05, 2.2, 4.0};
  double a = std::max(cfg.sigma_min, lo[bucket]);
  double b = std::min(cfg.sigma_max, hi[bucket]);
  if (a >= b) return {lo[bucket], hi[bucket]};
  return {a, b};
}

void validate(const SceneConfig& cfg) {
  if (cfg.height <= 0 || cfg.width <= 0) throw std::invalid_argument("SceneConfig: bad size");
  if (cfg.min_targets < 0 || cfg.max_targets < cfg.min_targets) {
    throw std::invalid_argument("SceneConfig: empty target-count range");
  }
  if (cfg.sigma_min <= 0 || cfg.sigma_max < cfg.sigma_min) {
    throw std::invalid_argument("SceneConfig: empty sigma range");
  }
  if (cfg.peak_max < cfg.peak_min || cfg.peak_min <= 0) {
    throw std::invalid_argument("SceneConfig: empty peak range");
  }
  double mix_sum = cfg.scale_mix[0] + cfg.scale_mix[1] + cfg.scale_mix[2];
  if (mix_sum <= 0) throw std::invalid_argument("SceneConfig: scale_mix sums to zero");
  // 5x5 box smoothing reduces the noise std by ~5
  if (cfg.peak_min < cfg.contrast_margin * cfg.noise_std / 5.0) {
    throw std::invalid_argument("SceneConfig: peak below the contrast margin");
  }
}

// separable box filter, radius 2, two axes
std::vector<double> box_smooth5(const std::vector<double>& in, int h, int w) {
  std::vector<double> tmp(in.size()), out(in.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      int n = 0;
      for (int d = -2; d <= 2; ++d) {
        int cc = c + d;
        if (cc < 0 || cc >= w) continue;
        s += in[static_cast<size_t>(r) * w + cc];
        ++n;
      }
      tmp[static_cast<size_t>(r) * w + c] = s / n;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      int n = 0;
      for (int d = -2; d <= 2; ++d) {
        int rr = r + d;
        if (rr < 0 || rr >= h) continue;
        s += tmp[static_cast<size_t>(rr) * w + c];
        ++n;
      }
      out[static_cast<size_t>(r) * w + c] = s / n;
    }
  }
  return out;
}

int sample_bucket(const SceneConfig& cfg, Rng& rng) {
  double mix_sum = cfg.scale_mix[0] + cfg.scale_mix[1] + cfg.scale_mix[2];
  double u = rng.uniform() * mix_sum;
  if (u < cfg.scale_mix[0]) return 0;
  if (u < cfg.scale_mix[0] + cfg.scale_mix[1]) return 1;
  return 2;
}

GrayImage quantize(const std::vector<double>& img, int h, int w) {
  GrayImage out{h, w, std::vector<uint8_t>(img.size())};
  for (size_t i = 0; i < img.size(); ++i) {
    double v = std::clamp(img[i], 0.0, 1.0);
    out.pixels[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

ordered_json config_json(const SceneConfig& c) {
  return ordered_json{{"height", c.height},
                      {"width", c.width},
                      {"min_targets", c.min_targets},
                      {"max_targets", c.max_targets},
                      {"sigma_min", c.sigma_min},
                      {"sigma_max", c.sigma_max},
                      {"peak_min", c.peak_min},
                      {"peak_max", c.peak_max},
                      {"base_level", c.base_level},
                      {"noise_std", c.noise_std},
                      {"clutter_blobs", c.clutter_blobs},
                      {"clutter_amp", c.clutter_amp},
                      {"clutter_sigma_min", c.clutter_sigma_min},
                      {"clutter_sigma_max", c.clutter_sigma_max},
                      {"scale_mix", c.scale_mix},
                      {"contrast_margin", c.contrast_margin},
                      {"seed", c.seed}};
}

uint64_t fnv1a_bytes(const uint8_t* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string sample_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%05d.pgm", id);
  return buf;
}

ordered_json targets_json(const std::vector<TargetInfo>& targets) {
  ordered_json arr = ordered_json::array();
  for (const auto& t : targets) {
    arr.push_back({{"row", t.row}, {"col", t.col}, {"pixels", t.pixel_count}, {"bucket", t.bucket}});
  }
  return arr;
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m,
                    const ordered_json* config) {
  ordered_json j;
  j["version"] = 1;
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  if (config) j["config"] = *config;
  j["skipped"] = m.skipped;
  j["samples"] = ordered_json::array();
  for (const auto& e : m.entries) {
    ordered_json js;
    js["id"] = e.id;
    js["split"] = e.split;
    js["image"] = e.image;
    js["mask"] = e.mask;
    js["targets"] = targets_json(e.targets);
    j["samples"].push_back(js);
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest in " + dir.string());
  f << j.dump(2) << "\n";
}

}  // namespace

std::string scene_config_hash(const SceneConfig& config) {
  std::string s = config_json(config).dump();
  uint64_t h = fnv1a_bytes(reinterpret_cast<const uint8_t*>(s.data()), s.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Sample generate_scene(const SceneConfig& cfg, int index) {
  validate(cfg);
  const int h = cfg.height, w = cfg.width;
  Rng rng = Rng::derive(cfg.seed, static_cast<uint64_t>(index));

  std::vector<double> noise(static_cast<size_t>(h) * w);
  for (auto& v : noise) v = rng.normal(0.0, cfg.noise_std);
  std::vector<double> img = box_smooth5(noise, h, w);
  for (auto& v : img) v += cfg.base_level;

  for (int k = 0; k < cfg.clutter_blobs; ++k) {
    double cr = rng.uniform(0.0, h - 1.0);
    double cc = rng.uniform(0.0, w - 1.0);
    double sigma = rng.uniform(cfg.clutter_sigma_min, cfg.clutter_sigma_max);
    double amp = rng.uniform(-cfg.clutter_amp, cfg.clutter_amp);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        img[static_cast<size_t>(r) * w + c] += amp * std::exp(-d2 / (2 * sigma * sigma));
      }
    }
  }

  Sample sample;
  sample.h = h;
  sample.w = w;
  sample.mask = BinaryMask::zeros(h, w);

  int n_targets = rng.uniform_int(cfg.min_targets, cfg.max_targets);
  for (int t = 0; t < n_targets; ++t) {
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      int bucket = sample_bucket(cfg, rng);
      auto [slo, shi] = bucket_sigma_range(cfg, bucket);
      double sigma = rng.uniform(slo, shi);
      double radius = mask_radius(sigma);
      double margin = std::ceil(radius) + 2.0;
      if (2 * margin >= h - 1 || 2 * margin >= w - 1) continue;
      double cr = rng.uniform(margin, h - 1 - margin);
      double cc = rng.uniform(margin, w - 1 - margin);

      // candidate mask pixels: contribution >= 25% of peak <=> within radius
      std::vector<std::pair<int, int>> pixels;
      int r0 = static_cast<int>(std::floor(cr - radius)), r1 = static_cast<int>(std::ceil(cr + radius));
      int c0 = static_cast<int>(std::floor(cc - radius)), c1 = static_cast<int>(std::ceil(cc + radius));
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
          if (d2 <= radius * radius) pixels.emplace_back(r, c);
        }
      }
      if (pixels.empty()) continue;
      int count = static_cast<int>(pixels.size());
      if (scale_bucket(count) != bucket) continue;

      // keep targets separated so components do not merge
      bool collision = false;
      for (auto [r, c] : pixels) {
        for (int dr = -1; dr <= 1 && !collision; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            int rr = r + dr, ccx = c + dc;
            if (rr >= 0 && rr < h && ccx >= 0 && ccx < w && sample.mask.at(rr, ccx)) {
              collision = true;
              break;
            }
          }
        }
        if (collision) break;
      }
      if (collision) continue;

      double peak = rng.uniform(cfg.peak_min, cfg.peak_max);
      int er0 = std::max(0, static_cast<int>(std::floor(cr - 4 * sigma)));
      int er1 = std::min(h - 1, static_cast<int>(std::ceil(cr + 4 * sigma)));
      int ec0 = std::max(0, static_cast<int>(std::floor(cc - 4 * sigma)));
      int ec1 = std::min(w - 1, static_cast<int>(std::ceil(cc + 4 * sigma)));
      for (int r = er0; r <= er1; ++r) {
        for (int c = ec0; c <= ec1; ++c) {
          double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
          img[static_cast<size_t>(r) * w + c] += peak * std::exp(-d2 / (2 * sigma * sigma));
        }
      }
      for (auto [r, c] : pixels) sample.mask.set(r, c, 1);
      sample.targets.push_back({cr, cc, count, bucket});
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("generate_scene: target placement failed (overcrowded config)");
    }
  }

  GrayImage q = quantize(img, h, w);
  sample.image.resize(q.pixels.size());
  for (size_t i = 0; i < q.pixels.size(); ++i) sample.image[i] = q.pixels[i] / 255.0;
  return sample;
}

DatasetManifest generate_dataset(const SceneConfig& cfg, int n_train, int n_test,
                                 const std::filesystem::path& out_dir) {
  if (n_train <= 0 || n_test <= 0) {
    throw std::invalid_argument("generate_dataset: split sizes must be positive");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (!std::filesystem::is_directory(out_dir / "images") ||
      !std::filesystem::is_directory(out_dir / "masks")) {
    throw std::runtime_error("generate_dataset: cannot create output directory " + out_dir.string());
  }

  DatasetManifest manifest;
  manifest.seed = cfg.seed;
  manifest.config_hash = scene_config_hash(cfg);

  const int total = n_train + n_test;
  for (int id = 0; id < total; ++id) {
    Sample s = generate_scene(cfg, id);
    std::string name = sample_name(id);
    GrayImage img{s.h, s.w, {}};
    img.pixels.resize(s.image.size());
    for (size_t i = 0; i < s.image.size(); ++i) {
      img.pixels[i] = static_cast<uint8_t>(std::lround(s.image[i] * 255.0));
    }
    GrayImage msk{s.h, s.w, std::vector<uint8_t>(s.mask.v.size())};
    for (size_t i = 0; i < s.mask.v.size(); ++i) msk.pixels[i] = s.mask.v[i] ? 255 : 0;
    write_pgm(out_dir / "images" / name, img);
    write_pgm(out_dir / "masks" / name, msk);

    SampleEntry e;
    e.id = id;
    e.split = id < n_train ? "train" : "test";
    e.image = "images/" + name;
    e.mask = "masks/" + name;
    e.targets = s.targets;
    manifest.entries.push_back(std::move(e));
  }

  ordered_json cj = config_json(cfg);
  write_manifest(out_dir, manifest, &cj);
  return manifest;
}

DatasetManifest ingest_external(const std::filesystem::path& image_dir,
                                const std::filesystem::path& mask_dir,
                                const std::filesystem::path& out_dir) {
  if (!std::filesystem::is_directory(image_dir) || !std::filesystem::is_directory(mask_dir)) {
    throw std::invalid_argument("ingest_external: image/mask directory not found");
  }
  std::vector<std::filesystem::path> images;
  for (const auto& entry : std::filesystem::directory_iterator(image_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      images.push_back(entry.path());
    }
  }
  std::sort(images.begin(), images.end());

  std::filesystem::create_directories(out_dir / "images");
  std::filesystem::create_directories(out_dir / "masks");

  DatasetManifest manifest;
  int id = 0;
  for (const auto& img_path : images) {
    std::filesystem::path mask_path = mask_dir / img_path.filename();
    if (!std::filesystem::exists(mask_path)) {
      manifest.skipped += 1;
      continue;
    }
    GrayImage img, msk;
    try {
      img = read_pgm(img_path);
      msk = read_pgm(mask_path);
    } catch (const std::runtime_error&) {
      manifest.skipped += 1;
      continue;
    }
    if (img.h != msk.h || img.w != msk.w) {
      manifest.skipped += 1;
      continue;
    }
    for (auto& p : msk.pixels) p = p >= 128 ? 255 : 0;

    std::string name = sample_name(id);
    write_pgm(out_dir / "images" / name, img);
    write_pgm(out_dir / "masks" / name, msk);

    BinaryMask bm = BinaryMask::zeros(msk.h, msk.w);
    for (size_t i = 0; i < msk.pixels.size(); ++i) bm.v[i] = msk.pixels[i] ? 1 : 0;
    auto cc = connected_components(bm);

    SampleEntry e;
    e.id = id;
    e.split = "train";  // split reassignment is the caller's policy
    e.image = "images/" + name;
    e.mask = "masks/" + name;
    for (const auto& comp : cc.components) {
      e.targets.push_back({comp.row, comp.col, comp.pixel_count, scale_bucket(comp.pixel_count)});
    }
    manifest.entries.push_back(std::move(e));
    ++id;
  }
  if (manifest.entries.empty()) {
    throw std::runtime_error("ingest_external: no valid image/mask pairs found");
  }
  write_manifest(out_dir, manifest, nullptr);
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir) {
  std::ifstream f(dataset_dir / "manifest.json");
  if (!f) throw std::runtime_error("load_manifest: missing manifest.json in " + dataset_dir.string());
  ordered_json j = ordered_json::parse(f);
  DatasetManifest m;
  m.seed = j.value("seed", uint64_t{0});
  m.config_hash = j.value("config_hash", std::string{});
  m.skipped = j.value("skipped", 0);
  for (const auto& js : j.at("samples")) {
    SampleEntry e;
    e.id = js.at("id").get<int>();
    e.split = js.at("split").get<std::string>();
    e.image = js.at("image").get<std::string>();
    e.mask = js.at("mask").get<std::string>();
    if (js.contains("targets")) {
      for (const auto& jt : js["targets"]) {
        e.targets.push_back({jt.at("row").get<double>(), jt.at("col").get<double>(),
                             jt.at("pixels").get<int>(), jt.at("bucket").get<int>()});
      }
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::vector<LoadedSample> load_split(const std::filesystem::path& dataset_dir,
                                     const std::string& split) {
  DatasetManifest m = load_manifest(dataset_dir);
  std::vector<LoadedSample> out;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    GrayImage img = read_pgm(dataset_dir / e.image);
    GrayImage msk = read_pgm(dataset_dir / e.mask);
    if (img.h != msk.h || img.w != msk.w) {
      throw std::runtime_error("load_split: image/mask size mismatch for id " + std::to_string(e.id));
    }
    LoadedSample s;
    s.h = img.h;
    s.w = img.w;
    s.image.resize(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) s.image[i] = img.pixels[i] / 255.0;
    s.mask = BinaryMask::zeros(msk.h, msk.w);
    for (size_t i = 0; i < msk.pixels.size(); ++i) s.mask.v[i] = msk.pixels[i] >= 128 ? 1 : 0;
    out.push_back(std::move(s));
  }
  return out;
}

uint64_t dataset_content_hash(const std::filesystem::path& dataset_dir) {
  DatasetManifest m = load_manifest(dataset_dir);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : m.entries) {
    for (const auto& rel : {e.image, e.mask}) {
      std::ifstream f(dataset_dir / rel, std::ios::binary);
      if (!f) throw std::runtime_error("dataset_content_hash: missing " + rel);
      std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
      h = fnv1a_bytes(bytes.data(), bytes.size(), h);
    }
  }
  return h;
}

}  // namespace irstd
