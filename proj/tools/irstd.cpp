#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "irstd/harness.hpp"
#include "irstd/synth.hpp"

namespace fs = std::filesystem;
using namespace irstd;

namespace {

struct CommonTrainArgs {
  std::string config_file;
  std::string dataset;
  std::string out = "runs";
  std::string loss;
  std::string location;
  int epochs = -1;
  int batch_size = -1;
  double lr = -1.0;
  int scales = -1;
  int base_channels = -1;
  int warmup = -1;
  double threshold = -1.0;
};

void add_train_options(CLI::App* cmd, CommonTrainArgs& a) {
  cmd->add_option("--config", a.config_file, "key = value config file");
  cmd->add_option("--dataset", a.dataset, "dataset directory (manifest.json)");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--loss", a.loss, "iou | dice | sls");
  cmd->add_option("--location", a.location, "polar | l1 | l2");
  cmd->add_option("--epochs", a.epochs, "training epochs");
  cmd->add_option("--batch-size", a.batch_size, "batch size");
  cmd->add_option("--lr", a.lr, "learning rate");
  cmd->add_option("--scales", a.scales, "supervised per-scale heads (0..4)");
  cmd->add_option("--base-channels", a.base_channels, "U-Net base channel count");
  cmd->add_option("--warmup", a.warmup, "IoU-only warm-up epochs");
  cmd->add_option("--threshold", a.threshold, "evaluation binarization threshold");
}

TrainConfig resolve_config(const CommonTrainArgs& a) {
  TrainConfig cfg;
  if (!a.config_file.empty()) load_config_file(a.config_file, cfg);
  if (!a.dataset.empty()) cfg.dataset_dir = a.dataset;
  if (!a.loss.empty()) cfg.loss = parse_loss_kind(a.loss);
  if (!a.location.empty()) cfg.location_variant = parse_location_kind(a.location);
  if (a.epochs >= 0) cfg.epochs = a.epochs;
  if (a.batch_size > 0) cfg.batch_size = a.batch_size;
  if (a.lr > 0) cfg.lr = a.lr;
  if (a.scales >= 0) cfg.supervised_scales = a.scales;
  if (a.base_channels > 0) cfg.base_channels = a.base_channels;
  if (a.warmup >= 0) cfg.warmup_epochs = a.warmup;
  if (a.threshold > 0) cfg.eval_threshold = a.threshold;
  if (cfg.dataset_dir.empty()) {
    throw CLI::ValidationError("--dataset (or dataset_dir in the config file) is required");
  }
  if (!fs::exists(fs::path(cfg.dataset_dir) / "manifest.json")) {
    throw std::runtime_error("dataset not found: " + cfg.dataset_dir);
  }
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Infrared small target detection lab: scale/location-sensitive "
               "losses, a multi-scale-head U-Net, metrics and ablations"};
  app.require_subcommand(1);

  // --- gen-data ---
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset or ingest PGM pairs");
  std::string gen_out = "data";
  int n_train = 200, n_test = 50;
  uint64_t gen_seed = 0;
  SceneConfig scene;
  std::vector<double> mix;
  std::string ingest_images, ingest_masks;
  gen->add_option("--out", gen_out, "output dataset directory");
  gen->add_option("--n-train", n_train, "training samples");
  gen->add_option("--n-test", n_test, "test samples");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--height", scene.height, "image height");
  gen->add_option("--width", scene.width, "image width");
  gen->add_option("--min-targets", scene.min_targets, "min targets per image");
  gen->add_option("--max-targets", scene.max_targets, "max targets per image");
  gen->add_option("--noise-std", scene.noise_std, "background noise stddev");
  gen->add_option("--mix", mix, "bucket mix, three fractions")->expected(3);
  gen->add_option("--ingest-images", ingest_images, "ingest: image directory (PGM)");
  gen->add_option("--ingest-masks", ingest_masks, "ingest: mask directory (PGM)");

  // --- train ---
  auto* tr = app.add_subcommand("train", "train a detector and persist the run record");
  CommonTrainArgs train_args;
  uint64_t train_seed = 1;
  std::string run_name;
  add_train_options(tr, train_args);
  tr->add_option("--seed", train_seed, "run seed");
  tr->add_option("--name", run_name, "run file basename");

  // --- eval ---
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
  std::string ev_ckpt, ev_dataset, ev_out;
  double ev_threshold = 0.5;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--dataset", ev_dataset, "dataset directory")->required();
  ev->add_option("--threshold", ev_threshold, "binarization threshold");
  ev->add_option("--out", ev_out, "write the report JSON here (default stdout)");

  // --- ablate ---
  auto* ab = app.add_subcommand("ablate", "run a configuration matrix and tabulate it");
  CommonTrainArgs ab_args;
  std::string axis = "loss";
  std::string values_csv;
  std::string seeds_csv;
  int threads = 0;
  add_train_options(ab, ab_args);
  ab->add_option("--axis", axis, "loss | location | scales")->required();
  ab->add_option("--values", values_csv, "comma-separated values for the axis")->required();
  ab->add_option("--seeds", seeds_csv, "comma-separated seeds (overrides config)");
  ab->add_option("--threads", threads, "parallel runs (0 = auto)");

  // --- grad-check ---
  auto* gc = app.add_subcommand("grad-check", "verify loss gradients against finite differences");
  int trials = 50;
  uint64_t gc_seed = 7;
  double gc_step = 1e-5;
  double gc_tol = 1e-4;
  gc->add_option("--trials", trials, "random instances per loss family");
  gc->add_option("--seed", gc_seed, "rng seed");
  gc->add_option("--step", gc_step, "finite-difference step");
  gc->add_option("--tol", gc_tol, "max relative error accepted");

  // --- report ---
  auto* rp = app.add_subcommand("report", "emit plot-data files from run records");
  std::vector<std::string> report_runs;
  std::string report_out = "report";
  rp->add_option("--run", report_runs, "run record JSON files (loss curves)");
  rp->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors exit 2; --help exits 0
  }

  if (gen->parsed()) {
    if (!ingest_images.empty() || !ingest_masks.empty()) {
      if (ingest_images.empty() || ingest_masks.empty()) {
        std::cerr << "error: both --ingest-images and --ingest-masks are required\n";
        return 1;
      }
      auto manifest = ingest_external(ingest_images, ingest_masks, gen_out);
      std::cout << "ingested " << manifest.entries.size() << " pairs, skipped "
                << manifest.skipped << "\n";
      return 0;
    }
    scene.seed = gen_seed;
    if (!mix.empty()) scene.scale_mix = {mix[0], mix[1], mix[2]};
    auto manifest = generate_dataset(scene, n_train, n_test, gen_out);
    std::cout << "wrote " << manifest.entries.size() << " samples to " << gen_out
              << " (config hash " << manifest.config_hash << ")\n";
    return 0;
  }

  if (tr->parsed()) {
    TrainConfig cfg = resolve_config(train_args);
    RunRecord rec = train(cfg, train_seed, train_args.out, run_name);
    std::cout << "run record: "
              << (fs::path(train_args.out) /
                  ((run_name.empty() ? "run_seed" + std::to_string(train_seed) : run_name) + ".json"))
                     .string()
              << "\n";
    if (rec.diverged) {
      std::cout << "training diverged after " << rec.epochs.size() << " epochs\n";
      return 1;
    }
    if (!rec.epochs.empty()) {
      std::cout << "train loss: " << rec.epochs.front().loss << " -> "
                << rec.epochs.back().loss << "\n";
    }
    std::cout << "test IoU " << rec.eval.iou << "  Pd "
              << (rec.eval.pd ? std::to_string(*rec.eval.pd) : std::string("n/a")) << "  Fa "
              << rec.eval.fa << "  (" << rec.wall_seconds << "s)\n";
    return 0;
  }

  if (ev->parsed()) {
    EvalReport rep = evaluate_checkpoint(ev_ckpt, ev_dataset, ev_threshold);
    std::string json = eval_report_to_json(rep);
    if (ev_out.empty()) {
      std::cout << json << "\n";
    } else {
      std::ofstream f(ev_out, std::ios::trunc);
      if (!f) throw std::runtime_error("cannot write " + ev_out);
      f << json << "\n";
      std::cout << "report: " << ev_out << "\n";
    }
    return 0;
  }

  if (ab->parsed()) {
    TrainConfig cfg = resolve_config(ab_args);
    if (!seeds_csv.empty()) apply_config_value(cfg, "seeds", seeds_csv);
    std::vector<std::string> values;
    {
      std::string cur;
      for (char c : values_csv + ",") {
        if (c == ',') {
          if (!cur.empty()) values.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
    }
    AblationTable table = ablate(cfg, axis, values, ab_args.out, threads);
    fs::create_directories(ab_args.out);
    std::ofstream(fs::path(ab_args.out) / ("ablation_" + axis + ".csv"), std::ios::trunc)
        << ablation_csv(table);
    std::ofstream(fs::path(ab_args.out) / ("ablation_" + axis + ".json"), std::ios::trunc)
        << ablation_json(table) << "\n";
    std::cout << ablation_csv(table);
    for (const auto& c : table.cells) {
      if (c.failed) return 1;
    }
    return 0;
  }

  if (gc->parsed()) {
    auto t0 = std::chrono::steady_clock::now();
    auto results = run_grad_suite(trials, gc_seed, gc_step);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = true;
    double worst = 0.0;
    for (const auto& r : results) {
      std::cout << r.name << ": max rel. error " << r.max_err << "\n";
      worst = std::max(worst, r.max_err);
      ok = ok && r.max_err < gc_tol;
    }
    std::cout << "overall max rel. error " << worst << " over " << trials
              << " trials per family (" << secs << "s)\n";
    return ok ? 0 : 1;
  }

  if (rp->parsed()) {
    fs::create_directories(report_out);
    emit_weight_grid(fs::path(report_out) / "weight_grid.txt");
    emit_location_grid(fs::path(report_out) / "location_grid.txt");
    int idx = 0;
    for (const auto& run_path : report_runs) {
      std::ifstream f(run_path);
      if (!f) throw std::runtime_error("cannot open run record " + run_path);
      auto j = nlohmann::ordered_json::parse(f);
      RunRecord rec;
      for (const auto& je : j.at("epochs")) {
        EpochStats st;
        st.loss = je.at("loss").get<double>();
        st.scale_terms = je.at("scale_terms").get<std::vector<double>>();
        st.location_terms = je.at("location_terms").get<std::vector<double>>();
        rec.epochs.push_back(std::move(st));
      }
      std::string name = fs::path(run_path).stem().string();
      emit_loss_curve(rec, fs::path(report_out) / ("loss_curve_" + name + ".txt"));
      ++idx;
    }
    std::cout << "report files in " << report_out << " (" << idx << " loss curves)\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
