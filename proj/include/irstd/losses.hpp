#pragma once

#include <stdexcept>
#include <vector>

#include "irstd/mask.hpp"
#include "irstd/tensor.hpp"

namespace irstd {

// Raised when a centroid is requested from a mask with (near-)zero mass.
struct EmptyMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 1-based image coordinates: x = column, y = row. Keeps x, y >= 1 for any
// nonempty mask so arctan(y/x) stays inside (0, pi/2).
struct Centroid {
  double x = 0.0;
  double y = 0.0;
};

struct PolarPoint {
  double d = 0.0;      // radial distance, pixels
  double theta = 0.0;  // radians, in (0, pi/2)
};

enum class VarMode {
  kPopulation,  // Var(a,b) = (a-b)^2 / 4
  kSample,      // Var(a,b) = (a-b)^2 / 2
};

enum class LocationKind { kPolar, kL1, kL2 };

struct SlsOptions {
  LocationKind location = LocationKind::kPolar;
  VarMode var_mode = VarMode::kPopulation;
};

inline constexpr double kMassEps = 1e-8;

// Predictions are HxW tensors of post-sigmoid probabilities. Set sizes use
// the soft relaxation: |A_p ∩ A_gt| = Σ p·g, |A_p| = Σ p.

// 1 - I/U; 0 when both masks are empty.
Tensor soft_iou_loss(const Tensor& pred, const BinaryMask& gt);
// 1 - 2I/(Σp + Σg); 0 when both empty.
Tensor dice_loss(const Tensor& pred, const BinaryMask& gt);

// Scale weight of the weighted-IoU loss: (min(a,b)+Var)/(max(a,b)+Var).
// Scales are fractions of image area.
double scale_weight(double scale_p, double scale_gt, VarMode var_mode = VarMode::kPopulation);
Tensor scale_weight_t(const Tensor& scale_p, const Tensor& scale_gt,
                      VarMode var_mode = VarMode::kPopulation);

// 1 - w * IoU, gradients flowing through both the IoU ratio and w.
Tensor scale_sensitive_loss(const Tensor& pred, const BinaryMask& gt,
                            VarMode var_mode = VarMode::kPopulation);

// Mass-weighted mean of 1-based pixel coordinates. Throws EmptyMaskError
// when the mass is below kMassEps.
Centroid soft_centroid(const BinaryMask& mask);
// Differentiable variant; returns (x, y) as scalar tensors.
std::pair<Tensor, Tensor> soft_centroid(const Tensor& mask);

PolarPoint to_polar(const Centroid& c);
std::pair<Tensor, Tensor> to_polar(const Tensor& x, const Tensor& y);

// Plain-double polar penalty between two centroids (grid emission, tests).
double location_penalty(const Centroid& pred, const Centroid& gt);

// Polar-coordinate center-point penalty, in [0, 2]. An empty prediction
// yields the constant supremum (no centroid gradient); empty gt is an error.
Tensor location_sensitive_loss(const Tensor& pred, const BinaryMask& gt,
                               LocationKind kind = LocationKind::kPolar);

struct LossBreakdown {
  Tensor total;
  Tensor scale_term;
  Tensor location_term;
  double weight = 1.0;  // w of the scale term (1 when gt is empty)
};

// L_SLS = L_S + L_L. For an empty gt (possible on downsampled crops) the
// location term is 0 and the scale term degrades to Σpred/(H*W).
LossBreakdown sls_loss(const Tensor& pred, const BinaryMask& gt,
                       const SlsOptions& opts = {});

enum class LossKind { kIoU, kDice, kSls };

// Composite multi-scale objective: mean of the per-scale losses over the
// supervised predictions. scale_preds holds p1..p4 (coarse to fine, p_i of
// size H/2^{4-i}); fused is the full-resolution fusion output. The ground
// truth is downsampled by max-pooling to match each scale.
// supervised_scales selects how many of the per-scale heads participate
// (counting from the finest, i.e. n=2 supervises {p3, p4, fused}); the
// fused prediction is always supervised.
Tensor multiscale_loss(const std::vector<Tensor>& scale_preds, const Tensor& fused,
                       const BinaryMask& gt, int supervised_scales = 4,
                       LossKind kind = LossKind::kSls, const SlsOptions& opts = {});

// Per-scale breakdown of the last multiscale_loss-style evaluation, for the
// training log: (scale term, location term) per supervised prediction.
struct MultiscaleBreakdown {
  std::vector<double> scale_terms;
  std::vector<double> location_terms;
  double total = 0.0;
};
MultiscaleBreakdown multiscale_breakdown(const std::vector<Tensor>& scale_preds,
                                         const Tensor& fused, const BinaryMask& gt,
                                         int supervised_scales = 4,
                                         LossKind kind = LossKind::kSls,
                                         const SlsOptions& opts = {});

}  // namespace irstd
