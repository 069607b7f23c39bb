#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "irstd/losses.hpp"
#include "irstd/metrics.hpp"
#include "irstd/synth.hpp"
#include "irstd/unet.hpp"

namespace irstd {

struct TrainConfig {
  // optimizer (AdaGrad)
  double lr = 0.05;
  double eps = 1e-10;
  // A strictly zero-initialized accumulator makes the first step exactly
  // +-lr for every coordinate at once; a tiny positive floor keeps the
  // update finite and well-defined without damping training. (Large floors
  // such as 0.1 were measured to slow convergence badly here.)
  double accumulator_init = 1e-6;
  int batch_size = 4;
  int epochs = 30;
  // objective
  LossKind loss = LossKind::kSls;
  LocationKind location_variant = LocationKind::kPolar;
  VarMode var_mode = VarMode::kPopulation;
  int supervised_scales = 4;   // heads supervised in addition to the fused map
  int warmup_epochs = 0;       // IoU-only warm-up before switching to SLS
  // model
  int base_channels = 8;
  std::array<int, 4> channel_multipliers = {8, 4, 2, 1};
  bool use_instance_norm = true;
  // data / evaluation
  std::string dataset_dir;
  double eval_threshold = 0.5;
  std::vector<uint64_t> seeds = {1, 2, 3};
};

// Parses a `key = value` config file ('#' comments) into cfg; unknown keys
// are an error. Returns the keys that were set.
std::vector<std::string> load_config_file(const std::filesystem::path& path, TrainConfig& cfg);
void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

LossKind parse_loss_kind(const std::string& s);
LocationKind parse_location_kind(const std::string& s);
const char* loss_kind_name(LossKind k);
const char* location_kind_name(LocationKind k);

struct AdaGradState {
  double lr = 0.05;
  double eps = 1e-10;
  std::vector<std::vector<double>> accum;  // aligned with ModelParams order
};

AdaGradState make_adagrad(const ModelParams& params, double lr, double eps,
                          double accumulator_init = 0.0);
// accumulator += g^2; param -= lr * g / (sqrt(accumulator) + eps).
// Throws on non-finite gradients.
void adagrad_step(ModelParams& params, AdaGradState& state);

struct EpochStats {
  double loss = 0.0;
  std::vector<double> scale_terms;     // per supervised prediction, then fused
  std::vector<double> location_terms;
};

struct RunRecord {
  TrainConfig config;
  uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  bool diverged = false;
  EvalReport eval;
  std::string checkpoint_path;
  double wall_seconds = 0.0;  // informational; not serialized (records must
                              // be reproducible byte for byte)
};

// Deterministic given (config, seed). Writes <out_dir>/<name>.ckpt and
// <out_dir>/<name>.json; name defaults to "run_seed<seed>".
RunRecord train(const TrainConfig& cfg, uint64_t seed,
                const std::filesystem::path& out_dir, const std::string& name = "");

std::string run_record_to_json(const RunRecord& record);
void save_run_record(const RunRecord& record, const std::filesystem::path& path);

EvalReport evaluate(const ModelParams& params, const std::vector<LoadedSample>& samples,
                    double threshold = 0.5, const MatchOptions& match = {});
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& dataset_dir,
                               double threshold = 0.5, const MatchOptions& match = {});
// Evaluation with an arbitrary per-sample predictor (probability map HxW).
EvalReport evaluate_with(
    const std::function<std::vector<double>(const LoadedSample&)>& predictor,
    const std::vector<LoadedSample>& samples, double threshold = 0.5,
    const MatchOptions& match = {});

struct AblationCell {
  std::string value;
  bool failed = false;
  std::string error;
  std::vector<std::string> record_paths;
  std::vector<double> ious, pds, fas;  // one entry per seed
  double iou_min = 0, iou_median = 0, iou_max = 0;
  double pd_min = 0, pd_median = 0, pd_max = 0;
  double fa_min = 0, fa_median = 0, fa_max = 0;
};

struct AblationTable {
  std::string axis;  // "loss" | "location" | "scales"
  std::vector<AblationCell> cells;
};

// One run per (value, seed); independent runs may execute concurrently.
// A failed member run marks its cell failed, the others proceed.
AblationTable ablate(const TrainConfig& base, const std::string& axis,
                     const std::vector<std::string>& values,
                     const std::filesystem::path& out_dir, int n_threads = 0);

std::string ablation_csv(const AblationTable& table);
std::string ablation_json(const AblationTable& table);

// Plot-data emission (plain columnar text).
void emit_loss_curve(const RunRecord& record, const std::filesystem::path& path);
// Scale-weight surface over pixel-count pairs (area-normalized).
void emit_weight_grid(const std::filesystem::path& path, int image_side = 256,
                      int max_pixels = 100);
// Polar location penalty over centroid offsets from the image center.
void emit_location_grid(const std::filesystem::path& path, int image_side = 256,
                        int max_offset = 100, int step = 5);

struct GradCheckResult {
  std::string name;
  double max_err = 0.0;
};

// Finite-difference verification of every loss gradient plus the end-to-end
// detector loss; `trials` random instances per family.
std::vector<GradCheckResult> run_grad_suite(int trials, uint64_t seed,
                                            double step = 1e-5);

}  // namespace irstd
