#include "irstd/losses.hpp"

#include <cmath>

namespace irstd {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_pred_shape(const Tensor& pred, const BinaryMask& gt, const char* op) {
  if (pred.shape().size() != 2 || pred.shape()[0] != gt.h || pred.shape()[1] != gt.w) {
    throw std::invalid_argument(std::string(op) + ": prediction/ground-truth shape mismatch");
  }
}

Tensor gt_tensor(const BinaryMask& gt) {
  std::vector<double> v(gt.v.begin(), gt.v.end());
  return Tensor::from_data({gt.h, gt.w}, std::move(v));
}

double pred_mass(const Tensor& pred) {
  double s = 0.0;
  for (double v : pred.data()) s += v;
  return s;
}

// Intersection and union under the soft relaxation.
struct SoftSets {
  Tensor intersection;
  Tensor pred_sum;
  double gt_sum;
};

SoftSets soft_sets(const Tensor& pred, const BinaryMask& gt) {
  return {sum(mul(pred, gt_tensor(gt))), sum(pred), static_cast<double>(gt.count())};
}

}  // namespace

Tensor soft_iou_loss(const Tensor& pred, const BinaryMask& gt) {
  check_pred_shape(pred, gt, "soft_iou_loss");
  auto s = soft_sets(pred, gt);
  if (s.gt_sum == 0.0 && s.pred_sum.value() == 0.0) return Tensor::scalar(0.0);
  Tensor u = sub(add(s.pred_sum, Tensor::scalar(s.gt_sum)), s.intersection);
  return sub(Tensor::scalar(1.0), div(s.intersection, u));
}

Tensor dice_loss(const Tensor& pred, const BinaryMask& gt) {
  check_pred_shape(pred, gt, "dice_loss");
  auto s = soft_sets(pred, gt);
  Tensor denom = add(s.pred_sum, Tensor::scalar(s.gt_sum));
  if (denom.value() == 0.0) return Tensor::scalar(0.0);
  Tensor two_i = mul(Tensor::scalar(2.0), s.intersection);
  return sub(Tensor::scalar(1.0), div(two_i, denom));
}

double scale_weight(double scale_p, double scale_gt, VarMode var_mode) {
  if (scale_p == 0.0 && scale_gt == 0.0) {
    throw std::invalid_argument("scale_weight: both scales zero");
  }
  double diff = scale_p - scale_gt;
  double var = diff * diff / (var_mode == VarMode::kPopulation ? 4.0 : 2.0);
  return (std::min(scale_p, scale_gt) + var) / (std::max(scale_p, scale_gt) + var);
}

Tensor scale_weight_t(const Tensor& scale_p, const Tensor& scale_gt, VarMode var_mode) {
  if (scale_p.value() == 0.0 && scale_gt.value() == 0.0) {
    throw std::invalid_argument("scale_weight: both scales zero");
  }
  Tensor diff = sub(scale_p, scale_gt);
  double denom = var_mode == VarMode::kPopulation ? 4.0 : 2.0;
  Tensor var = div(mul(diff, diff), Tensor::scalar(denom));
  return div(add(minimum(scale_p, scale_gt), var),
             add(maximum(scale_p, scale_gt), var));
}

Tensor scale_sensitive_loss(const Tensor& pred, const BinaryMask& gt, VarMode var_mode) {
  check_pred_shape(pred, gt, "scale_sensitive_loss");
  auto s = soft_sets(pred, gt);
  double area = static_cast<double>(gt.h) * gt.w;
  Tensor scale_p = div(s.pred_sum, Tensor::scalar(area));
  Tensor scale_g = Tensor::scalar(s.gt_sum / area);
  Tensor w = scale_weight_t(scale_p, scale_g, var_mode);
  Tensor u = sub(add(s.pred_sum, Tensor::scalar(s.gt_sum)), s.intersection);
  Tensor iou = div(s.intersection, u);
  return sub(Tensor::scalar(1.0), mul(w, iou));
}

Centroid soft_centroid(const BinaryMask& mask) {
  double sx = 0.0, sy = 0.0;
  int64_t n = mask.count();
  if (n == 0) throw EmptyMaskError("soft_centroid: empty mask");
  for (int r = 0; r < mask.h; ++r) {
    for (int c = 0; c < mask.w; ++c) {
      if (mask.at(r, c)) {
        sx += c + 1;
        sy += r + 1;
      }
    }
  }
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

std::pair<Tensor, Tensor> soft_centroid(const Tensor& mask) {
  if (mask.shape().size() != 2) throw std::invalid_argument("soft_centroid: mask must be HxW");
  const int h = mask.shape()[0], w = mask.shape()[1];
  if (pred_mass(mask) < kMassEps) throw EmptyMaskError("soft_centroid: mass below epsilon");
  std::vector<double> cols(static_cast<size_t>(h) * w), rows(cols.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      cols[static_cast<size_t>(r) * w + c] = c + 1;
      rows[static_cast<size_t>(r) * w + c] = r + 1;
    }
  }
  Tensor mass = sum(mask);
  Tensor x = div(sum(mul(mask, Tensor::from_data({h, w}, std::move(cols)))), mass);
  Tensor y = div(sum(mul(mask, Tensor::from_data({h, w}, std::move(rows)))), mass);
  return {x, y};
}

PolarPoint to_polar(const Centroid& c) {
  return {std::sqrt(c.x * c.x + c.y * c.y), std::atan(c.y / c.x)};
}

std::pair<Tensor, Tensor> to_polar(const Tensor& x, const Tensor& y) {
  Tensor d = sqrt_op(add(mul(x, x), mul(y, y)));
  Tensor theta = atan_op(div(y, x));
  return {d, theta};
}

double location_penalty(const Centroid& pred, const Centroid& gt) {
  PolarPoint p = to_polar(pred);
  PolarPoint g = to_polar(gt);
  double radial = 1.0 - std::min(p.d, g.d) / std::max(p.d, g.d);
  double dtheta = p.theta - g.theta;
  return radial + 4.0 / (kPi * kPi) * dtheta * dtheta;
}

Tensor location_sensitive_loss(const Tensor& pred, const BinaryMask& gt, LocationKind kind) {
  check_pred_shape(pred, gt, "location_sensitive_loss");
  if (gt.empty_mask()) throw EmptyMaskError("location_sensitive_loss: empty gt mask");
  Centroid cgt = soft_centroid(gt);
  double diag = std::sqrt(static_cast<double>(gt.h) * gt.h + static_cast<double>(gt.w) * gt.w);

  if (pred_mass(pred) < kMassEps) {
    // no usable centroid: return the variant's supremum, without gradient
    switch (kind) {
      case LocationKind::kPolar: return Tensor::scalar(2.0);
      case LocationKind::kL2: return Tensor::scalar(1.0);
      case LocationKind::kL1: return Tensor::scalar((gt.h + gt.w) / diag);
    }
  }

  auto [cx, cy] = soft_centroid(pred);
  switch (kind) {
    case LocationKind::kPolar: {
      auto [dp, thetap] = to_polar(cx, cy);
      PolarPoint pgt = to_polar(cgt);
      Tensor dgt = Tensor::scalar(pgt.d);
      Tensor radial = sub(Tensor::scalar(1.0), div(minimum(dp, dgt), maximum(dp, dgt)));
      Tensor dtheta = sub(thetap, Tensor::scalar(pgt.theta));
      Tensor angular = mul(Tensor::scalar(4.0 / (kPi * kPi)), mul(dtheta, dtheta));
      return add(radial, angular);
    }
    case LocationKind::kL2: {
      Tensor dx = sub(cx, Tensor::scalar(cgt.x));
      Tensor dy = sub(cy, Tensor::scalar(cgt.y));
      Tensor sq = add(mul(dx, dx), mul(dy, dy));
      if (sq.value() == 0.0) return Tensor::scalar(0.0);  // sqrt kink at the minimum
      return div(sqrt_op(sq), Tensor::scalar(diag));
    }
    case LocationKind::kL1: {
      Tensor dx = abs_op(sub(cx, Tensor::scalar(cgt.x)));
      Tensor dy = abs_op(sub(cy, Tensor::scalar(cgt.y)));
      return div(add(dx, dy), Tensor::scalar(diag));
    }
  }
  throw std::invalid_argument("location_sensitive_loss: unknown kind");
}

LossBreakdown sls_loss(const Tensor& pred, const BinaryMask& gt, const SlsOptions& opts) {
  check_pred_shape(pred, gt, "sls_loss");
  LossBreakdown out;
  double area = static_cast<double>(gt.h) * gt.w;
  if (gt.empty_mask()) {
    // The weight w is undefined at |A_gt| = 0: fall back to a predicted-mass
    // penalty and drop the location term.
    out.scale_term = div(sum(pred), Tensor::scalar(area));
    out.location_term = Tensor::scalar(0.0);
    out.weight = 1.0;
  } else {
    out.scale_term = scale_sensitive_loss(pred, gt, opts.var_mode);
    out.location_term = location_sensitive_loss(pred, gt, opts.location);
    out.weight = scale_weight(pred_mass(pred) / area,
                              static_cast<double>(gt.count()) / area, opts.var_mode);
  }
  out.total = add(out.scale_term, out.location_term);
  return out;
}

namespace {

Tensor base_loss(const Tensor& pred, const BinaryMask& gt, LossKind kind,
                 const SlsOptions& opts, double* scale_term, double* location_term) {
  switch (kind) {
    case LossKind::kIoU: {
      Tensor l = soft_iou_loss(pred, gt);
      if (scale_term) *scale_term = l.value();
      if (location_term) *location_term = 0.0;
      return l;
    }
    case LossKind::kDice: {
      Tensor l = dice_loss(pred, gt);
      if (scale_term) *scale_term = l.value();
      if (location_term) *location_term = 0.0;
      return l;
    }
    case LossKind::kSls: {
      LossBreakdown b = sls_loss(pred, gt, opts);
      if (scale_term) *scale_term = b.scale_term.value();
      if (location_term) *location_term = b.location_term.value();
      return b.total;
    }
  }
  throw std::invalid_argument("base_loss: unknown loss kind");
}

std::vector<Tensor> multiscale_terms(const std::vector<Tensor>& scale_preds,
                                     const Tensor& fused, const BinaryMask& gt,
                                     int supervised_scales, LossKind kind,
                                     const SlsOptions& opts, MultiscaleBreakdown* bd) {
  if (scale_preds.size() != 4) {
    throw std::invalid_argument("multiscale_loss: expected 4 per-scale predictions");
  }
  if (supervised_scales < 0 || supervised_scales > 4) {
    throw std::invalid_argument("multiscale_loss: supervised_scales must be in [0, 4]");
  }
  if (fused.shape().size() != 2 || fused.shape()[0] != gt.h || fused.shape()[1] != gt.w) {
    throw std::invalid_argument("multiscale_loss: fused prediction shape mismatch");
  }
  std::vector<Tensor> terms;
  for (int i = 0; i < 4; ++i) {
    int factor = 1 << (3 - i);  // p1 is 1/8 scale, p4 full resolution
    const auto& s = scale_preds[i].shape();
    if (s.size() != 2 || s[0] * factor != gt.h || s[1] * factor != gt.w) {
      throw std::invalid_argument("multiscale_loss: per-scale prediction shape mismatch");
    }
    if (i < 4 - supervised_scales) continue;  // coarsest scales dropped first
    BinaryMask gt_i = factor == 1 ? gt : max_pool_mask(gt, factor);
    double st = 0.0, lt = 0.0;
    terms.push_back(base_loss(scale_preds[i], gt_i, kind, opts, &st, &lt));
    if (bd) {
      bd->scale_terms.push_back(st);
      bd->location_terms.push_back(lt);
    }
  }
  double st = 0.0, lt = 0.0;
  terms.push_back(base_loss(fused, gt, kind, opts, &st, &lt));
  if (bd) {
    bd->scale_terms.push_back(st);
    bd->location_terms.push_back(lt);
  }
  return terms;
}

}  // namespace

Tensor multiscale_loss(const std::vector<Tensor>& scale_preds, const Tensor& fused,
                       const BinaryMask& gt, int supervised_scales, LossKind kind,
                       const SlsOptions& opts) {
  auto terms = multiscale_terms(scale_preds, fused, gt, supervised_scales, kind, opts, nullptr);
  Tensor total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return div(total, Tensor::scalar(static_cast<double>(terms.size())));
}

MultiscaleBreakdown multiscale_breakdown(const std::vector<Tensor>& scale_preds,
                                         const Tensor& fused, const BinaryMask& gt,
                                         int supervised_scales, LossKind kind,
                                         const SlsOptions& opts) {
  MultiscaleBreakdown bd;
  auto terms = multiscale_terms(scale_preds, fused, gt, supervised_scales, kind, opts, &bd);
  double total = 0.0;
  for (const auto& t : terms) total += t.value();
  bd.total = total / static_cast<double>(terms.size());
  return bd;
}

}  // namespace irstd
