#pragma once

#include <optional>
#include <string>
#include <vector>

#include "irstd/mask.hpp"
#include "irstd/tensor.hpp"

namespace irstd {

// pixel -> 1 iff p >= threshold
BinaryMask binarize(const Tensor& pred, double threshold = 0.5);
BinaryMask binarize(const std::vector<double>& values, int h, int w,
                    double threshold = 0.5);

struct Component {
  int label = 0;        // 1-based
  int pixel_count = 0;
  double row = 0.0;     // centroid, 0-based pixel coordinates
  double col = 0.0;
};

struct ComponentLabeling {
  int h = 0;
  int w = 0;
  std::vector<int> labels;  // 0 = background, labels contiguous 1..K
  std::vector<Component> components;
};

// Union-find labeling, deterministic raster order; 8-connectivity by default.
ComponentLabeling connected_components(const BinaryMask& mask, bool eight_connected = true);

// Dataset-level IoU: accumulate intersections and unions, then divide.
double pixel_iou(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts);
// Mean of per-image IoU (empty/empty images count as IoU 1).
double pixel_iou_per_image_mean(const std::vector<BinaryMask>& preds,
                                const std::vector<BinaryMask>& gts);

struct MatchOptions {
  double match_dist = 3.0;   // centroid distance threshold, pixels
  bool eight_connected = true;
  bool exclude_matched_fa = false;  // drop pixels of matched components from Fa
};

struct DetectionResult {
  double pd = 0.0;
  int64_t n_all = 0;      // gt targets
  int64_t n_matched = 0;  // correctly predicted targets
  int64_t n_missed = 0;
  int64_t n_false_components = 0;  // predicted components left unmatched
};

// A gt component is detected iff a predicted component centroid lies within
// match_dist; greedy nearest-first one-to-one matching per image. Throws if
// the whole set has no gt targets.
DetectionResult prob_detection(const std::vector<BinaryMask>& preds,
                               const std::vector<BinaryMask>& gts,
                               const MatchOptions& opts = {});

// Fa = sum of false-positive pixels / sum of all pixels.
double false_alarm_rate(const std::vector<BinaryMask>& preds,
                        const std::vector<BinaryMask>& gts,
                        const MatchOptions& opts = {});

struct BucketReport {
  std::string range;    // e.g. "(0,10]"
  bool present = false; // false when no gt target falls in the bucket
  double iou = 0.0;     // over images containing the bucket
  double pd = 0.0;      // over gt targets in the bucket
  double fa = 0.0;      // over images containing the bucket
  int64_t n_targets = 0;
  int64_t n_matched = 0;
};

struct EvalReport {
  double iou = 0.0;
  double iou_per_image_mean = 0.0;
  std::optional<double> pd;  // absent when the set has no gt targets
  double fa = 0.0;
  int64_t p_false = 0;
  int64_t p_all = 0;
  int64_t n_all = 0;
  int64_t n_matched = 0;
  int64_t n_missed = 0;
  int64_t n_false_components = 0;
  double threshold = 0.5;
  MatchOptions match;
  std::vector<BucketReport> buckets;  // (0,10], (10,40], (40,inf)
};

// Target pixel-count buckets used for the stratified breakdown.
int scale_bucket(int pixel_count);  // 0, 1 or 2
extern const char* const kBucketNames[3];

EvalReport bucketed_eval(const std::vector<BinaryMask>& preds,
                         const std::vector<BinaryMask>& gts,
                         const MatchOptions& opts = {}, double threshold = 0.5);

// Versioned JSON / CSV serialization of a report.
std::string eval_report_to_json(const EvalReport& report);
std::string eval_report_buckets_csv(const EvalReport& report);

}  // namespace irstd
