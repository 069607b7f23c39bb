#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "irstd/mask.hpp"

namespace irstd {

// Deterministic synthetic infrared-scene generator: smoothed Gaussian noise
// plus low-frequency clutter for the background, 2-D Gaussian intensity
// blobs for the targets. A pixel belongs to a target's mask iff that
// target's contribution is at least 25% of its peak.
struct SceneConfig {
  int height = 64;
  int width = 64;
  int min_targets = 1;
  int max_targets = 3;
  double sigma_min = 0.7;   // target blob stddev range, pixels
  double sigma_max = 4.0;
  double peak_min = 0.5;    // target peak intensity above background
  double peak_max = 0.85;
  double base_level = 0.25;
  double noise_std = 0.05;  // raw noise, smoothed with a 5x5 box filter
  int clutter_blobs = 3;
  double clutter_amp = 0.08;
  double clutter_sigma_min = 6.0;
  double clutter_sigma_max = 14.0;
  // target pixel-count mix across buckets (0,10], (10,40], (40,inf)
  std::array<double, 3> scale_mix = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  double contrast_margin = 3.0;  // peak_min >= margin * smoothed noise std
  uint64_t seed = 0;
};

struct TargetInfo {
  double row = 0.0;  // center, 0-based pixel coordinates
  double col = 0.0;
  int pixel_count = 0;
  int bucket = 0;
};

struct Sample {
  int h = 0;
  int w = 0;
  std::vector<double> image;  // [0,1], already quantized to 8-bit levels
  BinaryMask mask;
  std::vector<TargetInfo> targets;
};

// Deterministic in (config.seed, index).
Sample generate_scene(const SceneConfig& config, int index);

struct SampleEntry {
  int id = 0;
  std::string split;  // "train" or "test"
  std::string image;  // path relative to the dataset dir
  std::string mask;
  std::vector<TargetInfo> targets;
};

struct DatasetManifest {
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<SampleEntry> entries;
  int skipped = 0;  // ingestion: pairs rejected
};

// Canonical hash of a scene config (manifest provenance field).
std::string scene_config_hash(const SceneConfig& config);

// Writes images/, masks/ and manifest.json under out_dir.
DatasetManifest generate_dataset(const SceneConfig& config, int n_train, int n_test,
                                 const std::filesystem::path& out_dir);

// Pairs 8-bit grayscale PGM images with same-stem masks, normalizes them
// into out_dir (masks binarized at 128) and writes a manifest. Unpaired or
// unreadable files are skipped and counted.
DatasetManifest ingest_external(const std::filesystem::path& image_dir,
                                const std::filesystem::path& mask_dir,
                                const std::filesystem::path& out_dir);

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir);

struct LoadedSample {
  int h = 0;
  int w = 0;
  std::vector<double> image;  // [0,1]
  BinaryMask mask;
};

// Loads all samples of one split ("train"/"test") from a dataset directory.
std::vector<LoadedSample> load_split(const std::filesystem::path& dataset_dir,
                                     const std::string& split);

// FNV-1a over the bytes of every sample file, in manifest order.
uint64_t dataset_content_hash(const std::filesystem::path& dataset_dir);

}  // namespace irstd
