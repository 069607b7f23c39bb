#include "irstd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "irstd/rng.hpp"

namespace irstd {

namespace {

using nlohmann::ordered_json;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

UNetConfig model_config(const TrainConfig& cfg, int h, int w, uint64_t seed) {
  UNetConfig mc;
  mc.height = h;
  mc.width = w;
  mc.base_channels = cfg.base_channels;
  mc.channel_multipliers = cfg.channel_multipliers;
  mc.seed = seed;
  mc.use_instance_norm = cfg.use_instance_norm;
  return mc;
}

Tensor image_tensor(const LoadedSample& s) {
  return Tensor::from_data({1, 1, s.h, s.w}, s.image);
}

ordered_json config_to_json(const TrainConfig& c) {
  return ordered_json{{"lr", c.lr},
                      {"eps", c.eps},
                      {"accumulator_init", c.accumulator_init},
                      {"batch_size", c.batch_size},
                      {"epochs", c.epochs},
                      {"loss", loss_kind_name(c.loss)},
                      {"location_variant", location_kind_name(c.location_variant)},
                      {"var_mode", c.var_mode == VarMode::kPopulation ? "population" : "sample"},
                      {"supervised_scales", c.supervised_scales},
                      {"warmup_epochs", c.warmup_epochs},
                      {"base_channels", c.base_channels},
                      {"channel_multipliers", c.channel_multipliers},
                      {"use_instance_norm", c.use_instance_norm},
                      {"dataset_dir", c.dataset_dir},
                      {"eval_threshold", c.eval_threshold},
                      {"seeds", c.seeds}};
}

}  // namespace

LossKind parse_loss_kind(const std::string& s) {
  if (s == "iou") return LossKind::kIoU;
  if (s == "dice") return LossKind::kDice;
  if (s == "sls") return LossKind::kSls;
  throw std::invalid_argument("unknown loss kind: " + s);
}

LocationKind parse_location_kind(const std::string& s) {
  if (s == "polar") return LocationKind::kPolar;
  if (s == "l1") return LocationKind::kL1;
  if (s == "l2") return LocationKind::kL2;
  throw std::invalid_argument("unknown location variant: " + s);
}

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::kIoU: return "iou";
    case LossKind::kDice: return "dice";
    case LossKind::kSls: return "sls";
  }
  return "?";
}

const char* location_kind_name(LocationKind k) {
  switch (k) {
    case LocationKind::kPolar: return "polar";
    case LocationKind::kL1: return "l1";
    case LocationKind::kL2: return "l2";
  }
  return "?";
}

void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "lr") cfg.lr = std::stod(value);
  else if (key == "eps") cfg.eps = std::stod(value);
  else if (key == "accumulator_init") cfg.accumulator_init = std::stod(value);
  else if (key == "batch_size") cfg.batch_size = std::stoi(value);
  else if (key == "epochs") cfg.epochs = std::stoi(value);
  else if (key == "loss") cfg.loss = parse_loss_kind(value);
  else if (key == "location_variant" || key == "location")
    cfg.location_variant = parse_location_kind(value);
  else if (key == "var_mode") {
    if (value == "population") cfg.var_mode = VarMode::kPopulation;
    else if (value == "sample") cfg.var_mode = VarMode::kSample;
    else throw std::invalid_argument("var_mode must be population or sample");
  } else if (key == "supervised_scales") cfg.supervised_scales = std::stoi(value);
  else if (key == "warmup_epochs") cfg.warmup_epochs = std::stoi(value);
  else if (key == "base_channels") cfg.base_channels = std::stoi(value);
  else if (key == "channel_multipliers") {
    auto parts = split_csv(value);
    if (parts.size() != 4) throw std::invalid_argument("channel_multipliers needs 4 values");
    for (int i = 0; i < 4; ++i) cfg.channel_multipliers[i] = std::stoi(parts[i]);
  } else if (key == "use_instance_norm") cfg.use_instance_norm = value == "true" || value == "1";
  else if (key == "dataset_dir") cfg.dataset_dir = value;
  else if (key == "eval_threshold") cfg.eval_threshold = std::stod(value);
  else if (key == "seeds") {
    cfg.seeds.clear();
    for (const auto& p : split_csv(value)) cfg.seeds.push_back(std::stoull(p));
    if (cfg.seeds.empty()) throw std::invalid_argument("seeds list is empty");
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

std::vector<std::string> load_config_file(const std::filesystem::path& path, TrainConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path.string());
  std::vector<std::string> keys;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = true;
      for (char c : line) blank = blank && std::isspace(static_cast<unsigned char>(c));
      if (blank) continue;
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected key = value");
    }
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    apply_config_value(cfg, key, value);
    keys.push_back(key);
  }
  return keys;
}

AdaGradState make_adagrad(const ModelParams& params, double lr, double eps,
                          double accumulator_init) {
  AdaGradState state;
  state.lr = lr;
  state.eps = eps;
  state.accum.reserve(params.params.size());
  for (const auto& [name, t] : params.params) {
    state.accum.emplace_back(t.size(), accumulator_init);
  }
  return state;
}

void adagrad_step(ModelParams& params, AdaGradState& state) {
  if (state.accum.size() != params.params.size()) {
    throw std::invalid_argument("adagrad_step: state/parameter mismatch");
  }
  for (size_t k = 0; k < params.params.size(); ++k) {
    auto& [name, t] = params.params[k];
    auto& g = t.grad();
    auto& acc = state.accum[k];
    auto& data = t.data();
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw std::runtime_error("adagrad_step: non-finite gradient in " + name);
      }
      if (g[i] == 0.0) continue;  // avoids 0/0 when eps and accumulator are 0
      acc[i] += g[i] * g[i];
      data[i] -= state.lr * g[i] / (std::sqrt(acc[i]) + state.eps);
    }
  }
}

RunRecord train(const TrainConfig& cfg, uint64_t seed,
                const std::filesystem::path& out_dir, const std::string& name_in) {
  auto t_start = std::chrono::steady_clock::now();
  std::string name = name_in.empty() ? "run_seed" + std::to_string(seed) : name_in;

  auto train_set = load_split(cfg.dataset_dir, "train");
  auto test_set = load_split(cfg.dataset_dir, "test");
  if (train_set.empty()) throw std::runtime_error("train: empty train split in " + cfg.dataset_dir);
  const int h = train_set[0].h, w = train_set[0].w;
  for (const auto& s : train_set) {
    if (s.h != h || s.w != w) throw std::runtime_error("train: mixed image sizes");
  }

  ModelParams params = build(model_config(cfg, h, w, seed));
  AdaGradState opt = make_adagrad(params, cfg.lr, cfg.eps, cfg.accumulator_init);

  RunRecord record;
  record.config = cfg;
  record.seed = seed;

  const size_t n = train_set.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // per-epoch permutation from a counter-derived seed
    Rng shuffle_rng = Rng::derive(seed, 1000 + static_cast<uint64_t>(epoch));
    for (size_t i = n; i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }

    LossKind epoch_loss_kind =
        (cfg.loss == LossKind::kSls && epoch < cfg.warmup_epochs) ? LossKind::kIoU : cfg.loss;
    SlsOptions opts{cfg.location_variant, cfg.var_mode};

    EpochStats stats;
    size_t images_seen = 0;
    try {
      for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
        size_t stop = std::min(n, start + static_cast<size_t>(cfg.batch_size));
        params.zero_grad();
        Tensor batch_loss;
        for (size_t bi = start; bi < stop; ++bi) {
          const auto& s = train_set[order[bi]];
          auto out = forward(params, image_tensor(s));
          Tensor loss = multiscale_loss(out.scale_preds, out.fused, s.mask,
                                        cfg.supervised_scales, epoch_loss_kind, opts);
          auto bd = multiscale_breakdown(out.scale_preds, out.fused, s.mask,
                                         cfg.supervised_scales, epoch_loss_kind, opts);
          if (stats.scale_terms.empty()) {
            stats.scale_terms.assign(bd.scale_terms.size(), 0.0);
            stats.location_terms.assign(bd.location_terms.size(), 0.0);
          }
          for (size_t k = 0; k < bd.scale_terms.size(); ++k) {
            stats.scale_terms[k] += bd.scale_terms[k];
            stats.location_terms[k] += bd.location_terms[k];
          }
          stats.loss += bd.total;
          ++images_seen;
          batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
        }
        batch_loss = div(batch_loss, Tensor::scalar(static_cast<double>(stop - start)));
        backward(batch_loss);
        adagrad_step(params, opt);
      }
    } catch (const std::runtime_error&) {
      // numeric failure (NaN/Inf): keep partial history and stop
      record.diverged = true;
      break;
    }

    stats.loss /= static_cast<double>(images_seen);
    for (auto& v : stats.scale_terms) v /= static_cast<double>(images_seen);
    for (auto& v : stats.location_terms) v /= static_cast<double>(images_seen);
    record.epochs.push_back(std::move(stats));
  }

  std::filesystem::create_directories(out_dir);
  std::filesystem::path ckpt = out_dir / (name + ".ckpt");
  save_checkpoint(params, ckpt);
  record.checkpoint_path = name + ".ckpt";
  if (!test_set.empty()) {
    record.eval = evaluate(params, test_set, cfg.eval_threshold);
  }
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  save_run_record(record, out_dir / (name + ".json"));
  return record;
}

std::string run_record_to_json(const RunRecord& r) {
  ordered_json j;
  j["version"] = 1;
  j["config"] = config_to_json(r.config);
  j["seed"] = r.seed;
  j["diverged"] = r.diverged;
  j["epochs"] = ordered_json::array();
  for (const auto& e : r.epochs) {
    j["epochs"].push_back({{"loss", e.loss},
                           {"scale_terms", e.scale_terms},
                           {"location_terms", e.location_terms}});
  }
  j["eval"] = ordered_json::parse(eval_report_to_json(r.eval));
  j["checkpoint"] = r.checkpoint_path;
  return j.dump(2);
}

void save_run_record(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write run record: " + path.string());
  f << run_record_to_json(record) << "\n";
}

EvalReport evaluate_with(
    const std::function<std::vector<double>(const LoadedSample&)>& predictor,
    const std::vector<LoadedSample>& samples, double threshold, const MatchOptions& match) {
  std::vector<BinaryMask> preds, gts;
  preds.reserve(samples.size());
  gts.reserve(samples.size());
  for (const auto& s : samples) {
    preds.push_back(binarize(predictor(s), s.h, s.w, threshold));
    gts.push_back(s.mask);
  }
  return bucketed_eval(preds, gts, match, threshold);
}

EvalReport evaluate(const ModelParams& params, const std::vector<LoadedSample>& samples,
                    double threshold, const MatchOptions& match) {
  for (const auto& s : samples) {
    if (s.h != params.config.height || s.w != params.config.width) {
      throw ConfigMismatchError("evaluate: dataset size does not match checkpoint config");
    }
  }
  return evaluate_with(
      [&params](const LoadedSample& s) {
        return forward(params, image_tensor(s)).fused.data();
      },
      samples, threshold, match);
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& dataset_dir, double threshold,
                               const MatchOptions& match) {
  ModelParams params = load_checkpoint(checkpoint);
  return evaluate(params, load_split(dataset_dir, "test"), threshold, match);
}

AblationTable ablate(const TrainConfig& base, const std::string& axis,
                     const std::vector<std::string>& values,
                     const std::filesystem::path& out_dir, int n_threads) {
  if (values.size() < 2) throw std::invalid_argument("ablate: need at least 2 configurations");
  AblationTable table;
  table.axis = axis;
  table.cells.resize(values.size());

  struct Job {
    size_t cell;
    uint64_t seed;
    TrainConfig cfg;
    std::string name;
  };
  if (axis != "loss" && axis != "location" && axis != "scales") {
    throw std::invalid_argument("ablate: unknown axis " + axis);
  }
  std::vector<Job> jobs;
  for (size_t ci = 0; ci < values.size(); ++ci) {
    table.cells[ci].value = values[ci];
    TrainConfig cfg = base;
    try {
      if (axis == "loss") {
        cfg.loss = parse_loss_kind(values[ci]);
      } else if (axis == "location") {
        cfg.loss = LossKind::kSls;
        cfg.location_variant = parse_location_kind(values[ci]);
      } else {  // scales
        cfg.loss = LossKind::kSls;
        size_t pos = 0;
        int scales = std::stoi(values[ci], &pos);
        if (pos != values[ci].size() || scales < 0 || scales > 4) {
          throw std::invalid_argument("supervised scale count out of range");
        }
        cfg.supervised_scales = scales;
      }
    } catch (const std::exception& e) {
      table.cells[ci].failed = true;
      table.cells[ci].error = std::string("bad value '") + values[ci] + "': " + e.what();
      continue;
    }
    for (uint64_t seed : base.seeds) {
      jobs.push_back({ci, seed, cfg,
                      axis + "_" + values[ci] + "_seed" + std::to_string(seed)});
    }
  }

  std::vector<RunRecord> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = train(jobs[i].cfg, jobs[i].seed, out_dir, jobs[i].name);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  size_t workers = n_threads > 0 ? static_cast<size_t>(n_threads)
                                 : std::min<size_t>(hw, jobs.size());
  std::vector<std::thread> pool;
  for (size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (size_t i = 0; i < jobs.size(); ++i) {
    auto& cell = table.cells[jobs[i].cell];
    if (!errors[i].empty()) {
      cell.failed = true;
      cell.error = errors[i];
      continue;
    }
    const auto& r = results[i];
    cell.record_paths.push_back((out_dir / (jobs[i].name + ".json")).string());
    cell.ious.push_back(r.eval.iou);
    cell.pds.push_back(r.eval.pd.value_or(0.0));
    cell.fas.push_back(r.eval.fa);
  }
  for (auto& cell : table.cells) {
    if (cell.failed || cell.ious.empty()) continue;
    auto spread = [](const std::vector<double>& v, double& lo, double& med, double& hi) {
      lo = *std::min_element(v.begin(), v.end());
      hi = *std::max_element(v.begin(), v.end());
      med = median(v);
    };
    spread(cell.ious, cell.iou_min, cell.iou_median, cell.iou_max);
    spread(cell.pds, cell.pd_min, cell.pd_median, cell.pd_max);
    spread(cell.fas, cell.fa_min, cell.fa_median, cell.fa_max);
  }
  return table;
}

std::string ablation_csv(const AblationTable& table) {
  std::ostringstream out;
  out << "axis,value,status,iou_min,iou_median,iou_max,pd_min,pd_median,pd_max,"
         "fa_min,fa_median,fa_max\n";
  for (const auto& c : table.cells) {
    out << table.axis << "," << c.value << "," << (c.failed ? "failed" : "ok");
    if (c.failed) {
      out << ",,,,,,,,,";
    } else {
      out << "," << c.iou_min << "," << c.iou_median << "," << c.iou_max << ","
          << c.pd_min << "," << c.pd_median << "," << c.pd_max << "," << c.fa_min
          << "," << c.fa_median << "," << c.fa_max;
    }
    out << "\n";
  }
  return out.str();
}

std::string ablation_json(const AblationTable& table) {
  ordered_json j;
  j["version"] = 1;
  j["axis"] = table.axis;
  j["cells"] = ordered_json::array();
  for (const auto& c : table.cells) {
    ordered_json jc;
    jc["value"] = c.value;
    jc["failed"] = c.failed;
    if (c.failed) {
      jc["error"] = c.error;
    } else {
      jc["records"] = c.record_paths;
      jc["iou"] = {{"min", c.iou_min}, {"median", c.iou_median}, {"max", c.iou_max}, {"per_seed", c.ious}};
      jc["pd"] = {{"min", c.pd_min}, {"median", c.pd_median}, {"max", c.pd_max}, {"per_seed", c.pds}};
      jc["fa"] = {{"min", c.fa_min}, {"median", c.fa_median}, {"max", c.fa_max}, {"per_seed", c.fas}};
    }
    j["cells"].push_back(jc);
  }
  return j.dump(2);
}

void emit_loss_curve(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write loss curve: " + path.string());
  size_t terms = record.epochs.empty() ? 0 : record.epochs[0].scale_terms.size();
  f << "# epoch loss";
  for (size_t k = 0; k < terms; ++k) f << " scale_term_" << k + 1;
  for (size_t k = 0; k < terms; ++k) f << " location_term_" << k + 1;
  f << "\n";
  for (size_t e = 0; e < record.epochs.size(); ++e) {
    const auto& st = record.epochs[e];
    f << e << " " << st.loss;
    for (double v : st.scale_terms) f << " " << v;
    for (double v : st.location_terms) f << " " << v;
    f << "\n";
  }
}

void emit_weight_grid(const std::filesystem::path& path, int image_side, int max_pixels) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write weight grid: " + path.string());
  double area = static_cast<double>(image_side) * image_side;
  f << "# pred_pixels gt_pixels w\n";
  for (int a = 1; a <= max_pixels; ++a) {
    for (int b = 1; b <= max_pixels; ++b) {
      f << a << " " << b << " " << scale_weight(a / area, b / area) << "\n";
    }
  }
}

void emit_location_grid(const std::filesystem::path& path, int image_side, int max_offset,
                        int step) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write location grid: " + path.string());
  Centroid gt{image_side / 2.0, image_side / 2.0};
  f << "# dx dy location_loss\n";
  for (int dy = -max_offset; dy <= max_offset; dy += step) {
    for (int dx = -max_offset; dx <= max_offset; dx += step) {
      Centroid pred{gt.x + dx, gt.y + dy};
      if (pred.x < 1.0 || pred.y < 1.0) continue;
      f << dx << " " << dy << " " << location_penalty(pred, gt) << "\n";
    }
  }
}

namespace {

Tensor random_pred(int h, int w, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(h) * w);
  for (auto& x : v) x = rng.uniform(0.02, 0.98);
  return Tensor::from_data({h, w}, std::move(v));
}

BinaryMask random_gt(int h, int w, Rng& rng, double density = 0.2) {
  BinaryMask m = BinaryMask::zeros(h, w);
  for (auto& x : m.v) x = rng.uniform() < density ? 1 : 0;
  // keep at least one foreground pixel
  m.v[rng.next_u64() % m.v.size()] = 1;
  return m;
}

}  // namespace

std::vector<GradCheckResult> run_grad_suite(int trials, uint64_t seed, double step) {
  std::vector<GradCheckResult> results;
  Rng rng(seed);

  auto family = [&](const std::string& name, auto make_fn) {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      worst = std::max(worst, make_fn(t));
    }
    results.push_back({name, worst});
  };

  auto mask_loss_family = [&](const std::string& name, auto loss_fn) {
    family(name, [&](int) {
      BinaryMask gt = random_gt(8, 8, rng);
      Tensor x = random_pred(8, 8, rng);
      return grad_check([&](const Tensor& p) { return loss_fn(p, gt); }, x, step);
    });
  };

  mask_loss_family("soft_iou_loss",
                   [](const Tensor& p, const BinaryMask& g) { return soft_iou_loss(p, g); });
  mask_loss_family("dice_loss",
                   [](const Tensor& p, const BinaryMask& g) { return dice_loss(p, g); });
  mask_loss_family("scale_sensitive_loss", [](const Tensor& p, const BinaryMask& g) {
    return scale_sensitive_loss(p, g);
  });
  mask_loss_family("location_polar", [](const Tensor& p, const BinaryMask& g) {
    return location_sensitive_loss(p, g, LocationKind::kPolar);
  });
  mask_loss_family("location_l1", [](const Tensor& p, const BinaryMask& g) {
    return location_sensitive_loss(p, g, LocationKind::kL1);
  });
  mask_loss_family("location_l2", [](const Tensor& p, const BinaryMask& g) {
    return location_sensitive_loss(p, g, LocationKind::kL2);
  });
  mask_loss_family("sls_loss", [](const Tensor& p, const BinaryMask& g) {
    return sls_loss(p, g).total;
  });

  // composite multi-scale objective: probe each of the five predictions in turn
  family("multiscale_sls", [&](int t) {
    const int h = 16, w = 16;
    BinaryMask gt = random_gt(h, w, rng, 0.1);
    std::vector<Tensor> preds;
    for (int i = 0; i < 4; ++i) {
      int f = 1 << (3 - i);
      preds.push_back(random_pred(h / f, w / f, rng));
    }
    Tensor fused = random_pred(h, w, rng);
    int probe = t % 5;
    Tensor x = probe < 4 ? preds[probe] : fused;
    auto fn = [&](const Tensor& p) {
      std::vector<Tensor> ps = preds;
      Tensor fu = fused;
      if (probe < 4) ps[probe] = p; else fu = p;
      return multiscale_loss(ps, fu, gt, 4, LossKind::kSls);
    };
    return grad_check(fn, x, step);
  });

  // end-to-end detector loss w.r.t. network parameters (sampled coordinates)
  {
    UNetConfig mc;
    mc.height = 16;
    mc.width = 16;
    mc.base_channels = 2;
    mc.seed = seed;
    ModelParams params = build(mc);
    family("detector_end_to_end", [&](int t) {
      BinaryMask gt = random_gt(16, 16, rng, 0.05);
      std::vector<double> img(16 * 16);
      for (auto& v : img) v = rng.uniform();
      Tensor image = Tensor::from_data({1, 1, 16, 16}, std::move(img));
      size_t k = static_cast<size_t>(t) % params.params.size();
      auto fn = [&](const Tensor& x) {
        ModelParams p2 = params;
        p2.params[k].second = x;
        auto out = forward(p2, image);
        return multiscale_loss(out.scale_preds, out.fused, gt, 4, LossKind::kSls);
      };
      return grad_check(fn, params.params[k].second, step, 4, &rng);
    });
  }

  return results;
}

}  // namespace irstd
