#include "irstd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace irstd {

namespace {

struct ImageMatch {
  ComponentLabeling pred_cc;
  ComponentLabeling gt_cc;
  std::vector<bool> gt_matched;    // per gt component
  std::vector<bool> pred_matched;  // per pred component
};

// Greedy nearest-first one-to-one matching of component centroids.
ImageMatch match_image(const BinaryMask& pred, const BinaryMask& gt,
                       const MatchOptions& opts) {
  ImageMatch m;
  m.pred_cc = connected_components(pred, opts.eight_connected);
  m.gt_cc = connected_components(gt, opts.eight_connected);
  m.gt_matched.assign(m.gt_cc.components.size(), false);
  m.pred_matched.assign(m.pred_cc.components.size(), false);

  struct Pair {
    double dist;
    size_t gi, pi;
  };
  std::vector<Pair> pairs;
  for (size_t gi = 0; gi < m.gt_cc.components.size(); ++gi) {
    for (size_t pi = 0; pi < m.pred_cc.components.size(); ++pi) {
      double dr = m.gt_cc.components[gi].row - m.pred_cc.components[pi].row;
      double dc = m.gt_cc.components[gi].col - m.pred_cc.components[pi].col;
      double d = std::sqrt(dr * dr + dc * dc);
      if (d <= opts.match_dist) pairs.push_back({d, gi, pi});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.gi != b.gi) return a.gi < b.gi;
    return a.pi < b.pi;
  });
  for (const auto& p : pairs) {
    if (!m.gt_matched[p.gi] && !m.pred_matched[p.pi]) {
      m.gt_matched[p.gi] = true;
      m.pred_matched[p.pi] = true;
    }
  }
  return m;
}

void check_matched_lists(const std::vector<BinaryMask>& preds,
                         const std::vector<BinaryMask>& gts) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("metrics: pred/gt list length mismatch");
  }
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].h != gts[i].h || preds[i].w != gts[i].w) {
      throw std::invalid_argument("metrics: pred/gt shape mismatch");
    }
  }
}

int64_t false_pixels(const BinaryMask& pred, const BinaryMask& gt,
                     const MatchOptions& opts, const ImageMatch* match) {
  std::vector<bool> keep;
  if (opts.exclude_matched_fa && match) {
    keep.assign(match->pred_cc.components.size() + 1, true);
    for (size_t pi = 0; pi < match->pred_matched.size(); ++pi) {
      if (match->pred_matched[pi]) keep[pi + 1] = false;
    }
  }
  int64_t fp = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    if (pred.v[i] && !gt.v[i]) {
      if (!keep.empty() && !keep[match->pred_cc.labels[i]]) continue;
      ++fp;
    }
  }
  return fp;
}

}  // namespace

const char* const kBucketNames[3] = {"(0,10]", "(10,40]", "(40,inf)"};

int scale_bucket(int pixel_count) {
  if (pixel_count <= 10) return 0;
  if (pixel_count <= 40) return 1;
  return 2;
}

BinaryMask binarize(const std::vector<double>& values, int h, int w, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw std::invalid_argument("binarize: threshold must be in (0,1)");
  }
  if (static_cast<int64_t>(values.size()) != static_cast<int64_t>(h) * w) {
    throw std::invalid_argument("binarize: size mismatch");
  }
  BinaryMask m = BinaryMask::zeros(h, w);
  for (size_t i = 0; i < values.size(); ++i) m.v[i] = values[i] >= threshold ? 1 : 0;
  return m;
}

BinaryMask binarize(const Tensor& pred, double threshold) {
  if (pred.shape().size() != 2) throw std::invalid_argument("binarize: pred must be HxW");
  return binarize(pred.data(), pred.shape()[0], pred.shape()[1], threshold);
}

ComponentLabeling connected_components(const BinaryMask& mask, bool eight_connected) {
  const int h = mask.h, w = mask.w;
  const size_t n = mask.v.size();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  // neighbors already visited in raster order
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      int i = r * w + c;
      if (c > 0 && mask.at(r, c - 1)) unite(i, i - 1);
      if (r > 0) {
        if (mask.at(r - 1, c)) unite(i, i - w);
        if (eight_connected) {
          if (c > 0 && mask.at(r - 1, c - 1)) unite(i, i - w - 1);
          if (c + 1 < w && mask.at(r - 1, c + 1)) unite(i, i - w + 1);
        }
      }
    }
  }

  ComponentLabeling out;
  out.h = h;
  out.w = w;
  out.labels.assign(n, 0);
  std::vector<int> root_label(n, 0);
  int next = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      int i = r * w + c;
      int root = find(i);
      if (root_label[root] == 0) {
        root_label[root] = ++next;
        out.components.push_back({next, 0, 0.0, 0.0});
      }
      int label = root_label[root];
      out.labels[i] = label;
      auto& comp = out.components[label - 1];
      comp.pixel_count += 1;
      comp.row += r;
      comp.col += c;
    }
  }
  for (auto& comp : out.components) {
    comp.row /= comp.pixel_count;
    comp.col /= comp.pixel_count;
  }
  return out;
}

double pixel_iou(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts) {
  check_matched_lists(preds, gts);
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    for (size_t j = 0; j < preds[i].v.size(); ++j) {
      uint8_t p = preds[i].v[j], g = gts[i].v[j];
      inter += p & g;
      uni += p | g;
    }
  }
  return uni == 0 ? (inter == 0 ? 1.0 : 0.0) : static_cast<double>(inter) / uni;
}

double pixel_iou_per_image_mean(const std::vector<BinaryMask>& preds,
                                const std::vector<BinaryMask>& gts) {
  check_matched_lists(preds, gts);
  if (preds.empty()) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    int64_t inter = 0, uni = 0;
    for (size_t j = 0; j < preds[i].v.size(); ++j) {
      inter += preds[i].v[j] & gts[i].v[j];
      uni += preds[i].v[j] | gts[i].v[j];
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  }
  return total / static_cast<double>(preds.size());
}

DetectionResult prob_detection(const std::vector<BinaryMask>& preds,
                               const std::vector<BinaryMask>& gts,
                               const MatchOptions& opts) {
  check_matched_lists(preds, gts);
  DetectionResult res;
  for (size_t i = 0; i < preds.size(); ++i) {
    ImageMatch m = match_image(preds[i], gts[i], opts);
    res.n_all += static_cast<int64_t>(m.gt_cc.components.size());
    for (bool ok : m.gt_matched) res.n_matched += ok ? 1 : 0;
    for (bool ok : m.pred_matched) res.n_false_components += ok ? 0 : 1;
  }
  if (res.n_all == 0) {
    throw std::runtime_error("prob_detection: no ground-truth targets in the set");
  }
  res.n_missed = res.n_all - res.n_matched;
  res.pd = static_cast<double>(res.n_matched) / static_cast<double>(res.n_all);
  return res;
}

double false_alarm_rate(const std::vector<BinaryMask>& preds,
                        const std::vector<BinaryMask>& gts, const MatchOptions& opts) {
  check_matched_lists(preds, gts);
  int64_t fp = 0, all = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    all += static_cast<int64_t>(preds[i].v.size());
    if (opts.exclude_matched_fa) {
      ImageMatch m = match_image(preds[i], gts[i], opts);
      fp += false_pixels(preds[i], gts[i], opts, &m);
    } else {
      fp += false_pixels(preds[i], gts[i], opts, nullptr);
    }
  }
  return all == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(all);
}

EvalReport bucketed_eval(const std::vector<BinaryMask>& preds,
                         const std::vector<BinaryMask>& gts, const MatchOptions& opts,
                         double threshold) {
  check_matched_lists(preds, gts);
  EvalReport rep;
  rep.threshold = threshold;
  rep.match = opts;
  rep.buckets.resize(3);
  for (int b = 0; b < 3; ++b) rep.buckets[b].range = kBucketNames[b];

  struct BucketAccum {
    int64_t inter = 0, uni = 0, fp = 0, all = 0;
  };
  BucketAccum bucket_px[3];
  int64_t inter = 0, uni = 0;

  for (size_t i = 0; i < preds.size(); ++i) {
    ImageMatch m = match_image(preds[i], gts[i], opts);
    rep.n_all += static_cast<int64_t>(m.gt_cc.components.size());
    for (bool ok : m.gt_matched) rep.n_matched += ok ? 1 : 0;
    for (bool ok : m.pred_matched) rep.n_false_components += ok ? 0 : 1;

    int64_t img_inter = 0, img_uni = 0;
    for (size_t j = 0; j < preds[i].v.size(); ++j) {
      img_inter += preds[i].v[j] & gts[i].v[j];
      img_uni += preds[i].v[j] | gts[i].v[j];
    }
    inter += img_inter;
    uni += img_uni;
    int64_t img_fp = false_pixels(preds[i], gts[i], opts,
                                  opts.exclude_matched_fa ? &m : nullptr);
    rep.p_false += img_fp;
    rep.p_all += static_cast<int64_t>(preds[i].v.size());

    bool image_has_bucket[3] = {false, false, false};
    for (size_t gi = 0; gi < m.gt_cc.components.size(); ++gi) {
      int b = scale_bucket(m.gt_cc.components[gi].pixel_count);
      image_has_bucket[b] = true;
      rep.buckets[b].n_targets += 1;
      rep.buckets[b].n_matched += m.gt_matched[gi] ? 1 : 0;
    }
    // pixel metrics restricted to images containing the bucket
    for (int b = 0; b < 3; ++b) {
      if (!image_has_bucket[b]) continue;
      bucket_px[b].inter += img_inter;
      bucket_px[b].uni += img_uni;
      bucket_px[b].fp += img_fp;
      bucket_px[b].all += static_cast<int64_t>(preds[i].v.size());
    }
  }

  rep.iou = uni == 0 ? (inter == 0 ? 1.0 : 0.0) : static_cast<double>(inter) / uni;
  rep.iou_per_image_mean = pixel_iou_per_image_mean(preds, gts);
  rep.n_missed = rep.n_all - rep.n_matched;
  if (rep.n_all > 0) rep.pd = static_cast<double>(rep.n_matched) / rep.n_all;
  rep.fa = rep.p_all == 0 ? 0.0 : static_cast<double>(rep.p_false) / rep.p_all;

  for (int b = 0; b < 3; ++b) {
    auto& bk = rep.buckets[b];
    if (bk.n_targets == 0) continue;  // marked absent, not zero
    bk.present = true;
    bk.pd = static_cast<double>(bk.n_matched) / bk.n_targets;
    bk.iou = bucket_px[b].uni == 0
                 ? 1.0
                 : static_cast<double>(bucket_px[b].inter) / bucket_px[b].uni;
    bk.fa = bucket_px[b].all == 0
                ? 0.0
                : static_cast<double>(bucket_px[b].fp) / bucket_px[b].all;
  }
  return rep;
}

std::string eval_report_to_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["iou"] = rep.iou;
  j["iou_per_image_mean"] = rep.iou_per_image_mean;
  if (rep.pd) {
    j["pd"] = *rep.pd;
  } else {
    j["pd"] = nullptr;
  }
  j["fa"] = rep.fa;
  j["p_false"] = rep.p_false;
  j["p_all"] = rep.p_all;
  j["n_all"] = rep.n_all;
  j["n_matched"] = rep.n_matched;
  j["n_missed"] = rep.n_missed;
  j["n_false_components"] = rep.n_false_components;
  j["threshold"] = rep.threshold;
  j["match_rule"] = {{"match_dist", rep.match.match_dist},
                     {"connectivity", rep.match.eight_connected ? 8 : 4},
                     {"exclude_matched_fa", rep.match.exclude_matched_fa}};
  j["buckets"] = nlohmann::ordered_json::array();
  for (const auto& b : rep.buckets) {
    nlohmann::ordered_json jb;
    jb["range"] = b.range;
    jb["present"] = b.present;
    if (b.present) {
      jb["iou"] = b.iou;
      jb["pd"] = b.pd;
      jb["fa"] = b.fa;
      jb["n_targets"] = b.n_targets;
      jb["n_matched"] = b.n_matched;
    }
    j["buckets"].push_back(jb);
  }
  return j.dump(2);
}

std::string eval_report_buckets_csv(const EvalReport& rep) {
  std::string out = "bucket,present,iou,pd,fa,n_targets,n_matched\n";
  for (const auto& b : rep.buckets) {
    out += b.range + "," + (b.present ? "1" : "0") + ",";
    if (b.present) {
      out += std::to_string(b.iou) + "," + std::to_string(b.pd) + "," +
             std::to_string(b.fa) + "," + std::to_string(b.n_targets) + "," +
             std::to_string(b.n_matched);
    } else {
      out += ",,,,";
    }
    out += "\n";
  }
  return out;
}

}  // namespace irstd
