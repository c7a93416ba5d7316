// Command-line front end: synthetic data generation, boundary label
// extraction, training, inference, evaluation, gradient checking, and the
// four-variant ablation study. Exit codes: 0 success, 1 usage/config error,
// 2 data error, 3 contract violation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bfan/data.hpp"
#include "bfan/gradcheck_suite.hpp"
#include "bfan/metrics.hpp"
#include "bfan/trainer.hpp"

namespace fs = std::filesystem;

namespace {

bfan::RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw bfan::IoError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bfan::parse_config(text);
}

std::vector<fs::path> list_pnm_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw bfan::IoError("cli: '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::set<int> parse_subset(const std::string& csv) {
  std::set<int> subset;
  std::string tok;
  std::istringstream is(csv);
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    try {
      subset.insert(std::stoi(tok));
    } catch (const std::exception&) {
      throw bfan::ConfigError("infer: bad stage subset token '" + tok + "'");
    }
  }
  return subset;
}

int cmd_gen_data(int n, int size, std::uint64_t seed, const std::string& out) {
  const auto samples = bfan::gen_synthetic(n, size, seed);
  bfan::write_dataset(out, samples);
  std::printf("wrote %d samples to %s\n", n, out.c_str());
  return 0;
}

int cmd_gen_boundary(const std::string& masks_dir, const std::string& out) {
  fs::create_directories(out);
  const auto files = list_pnm_files(masks_dir, ".pgm");
  if (files.empty()) throw bfan::IoError("gen-boundary: no .pgm masks in '" + masks_dir + "'");
  for (const auto& f : files) {
    const bfan::GrayImage mask = bfan::pnm::gray_to_mask(bfan::pnm::load_gray(f));
    const bfan::GrayImage boundary = bfan::canny_boundary(mask);
    if (bfan::count_positive(boundary) * 4 >
        static_cast<long long>(mask.height) * mask.width)
      throw bfan::ContractViolation("gen-boundary: boundary for '" + f.filename().string() +
                                    "' covers more than 25% of pixels");
    bfan::pnm::save_gray(fs::path(out) / f.filename(), bfan::pnm::mask_to_gray(boundary));
  }
  std::printf("wrote %zu boundary labels to %s\n", files.size(), out.c_str());
  return 0;
}

int cmd_train(const std::string& config, const std::string& manifest, int epochs,
              const std::string& out, bool verbose) {
  bfan::RunConfig cfg = config.empty() ? bfan::RunConfig{} : load_config_file(config);
  const auto entries = bfan::read_manifest(manifest);
  if (entries.empty()) throw bfan::ConfigError("train: manifest '" + manifest + "' is empty");
  std::vector<bfan::SaliencySample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) samples.push_back(bfan::load_sample(e));
  const auto result = bfan::train(samples, cfg, epochs, out, verbose);
  std::printf("trained %d epochs (%lld steps), checkpoint at %s\n", result.epochs_run,
              result.steps, result.checkpoint_path.string().c_str());
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& images_dir,
              const std::string& out, bool dump_boundary, const std::string& config,
              const std::string& subset_csv) {
  const bfan::LoadedModel model = bfan::load_checkpoint(checkpoint);
  if (!config.empty()) {
    const bfan::RunConfig requested = load_config_file(config);
    if (bfan::config_hash(requested) != bfan::config_hash(model.cfg))
      throw bfan::ContractViolation(
          "infer: requested config does not match the checkpoint (hash " +
          std::to_string(bfan::config_hash(requested)) + " vs " +
          std::to_string(bfan::config_hash(model.cfg)) + ")");
  }
  std::set<int> subset;
  if (!subset_csv.empty()) subset = parse_subset(subset_csv);

  fs::create_directories(out);
  const auto files = list_pnm_files(images_dir, ".ppm");
  if (files.empty()) throw bfan::IoError("infer: no .ppm images in '" + images_dir + "'");
  for (const auto& f : files) {
    const bfan::RgbImage img = bfan::pnm::load_rgb(f);
    const auto res = bfan::infer_one(*model.net, img, dump_boundary,
                                     subset.empty() ? nullptr : &subset);
    const std::string stem = f.stem().string();
    bfan::pnm::save_gray(fs::path(out) / (stem + ".pgm"), res.saliency);
    for (size_t t = 0; t < res.boundaries.size(); ++t)
      bfan::pnm::save_gray(fs::path(out) / (stem + "_b" + std::to_string(t + 1) + ".pgm"),
                           res.boundaries[t]);
  }
  std::printf("wrote %zu saliency maps to %s\n", files.size(), out.c_str());
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out) {
  const auto preds = list_pnm_files(pred_dir, ".pgm");
  if (preds.empty()) throw bfan::IoError("eval: no .pgm predictions in '" + pred_dir + "'");
  std::vector<std::string> ids;
  std::vector<bfan::SaliencyMap> sal;
  std::vector<bfan::GrayImage> gts;
  for (const auto& p : preds) {
    const fs::path gt_path = fs::path(gt_dir) / p.filename();
    if (!fs::exists(gt_path))
      throw bfan::IoError("eval: missing ground truth '" + gt_path.string() + "'");
    ids.push_back(p.stem().string());
    sal.push_back(bfan::SaliencyMap::from_gray(bfan::pnm::load_gray(p)));
    gts.push_back(bfan::pnm::gray_to_mask(bfan::pnm::load_gray(gt_path)));
  }
  const bfan::EvalReport rep = bfan::evaluate_set(ids, sal, gts);
  fs::create_directories(out);
  bfan::write_report_csv(fs::path(out) / "report.csv", rep);
  bfan::write_pr_csv(fs::path(out) / "pr_curve.csv", rep.curve);
  std::printf("images %zu  F-beta %.4f  MAE %.4f  max-F %.4f\n", rep.per_image.size(),
              rep.mean_fbeta, rep.mean_mae, rep.max_f);
  return 0;
}

int cmd_gradcheck(const std::string& op) {
  const auto outcomes = bfan::run_gradcheck_suite(op);
  bool all_pass = true;
  for (const auto& o : outcomes) {
    std::printf("%-18s %s  max rel err %.3e  checked %d  skipped %d\n", o.name.c_str(),
                o.result.pass ? "PASS" : "FAIL", o.result.max_rel_error, o.result.checked,
                o.result.skipped);
    all_pass = all_pass && o.result.pass;
  }
  return all_pass ? 0 : 3;
}

struct AblationScore {
  double fbeta = 0.0;
  double mae = 0.0;
};

int cmd_ablate(const std::string& config, const std::string& manifest,
               const std::string& test_manifest, int epochs, int seeds, const std::string& out) {
  bfan::RunConfig base_cfg = config.empty() ? bfan::RunConfig{} : load_config_file(config);
  const auto train_entries = bfan::read_manifest(manifest);
  if (train_entries.empty()) throw bfan::ConfigError("ablate: manifest '" + manifest + "' is empty");
  const auto test_entries =
      bfan::read_manifest(test_manifest.empty() ? manifest : test_manifest);

  std::vector<bfan::SaliencySample> train_samples, test_samples;
  for (const auto& e : train_entries) train_samples.push_back(bfan::load_sample(e));
  for (const auto& e : test_entries) test_samples.push_back(bfan::load_sample(e));

  const std::vector<std::pair<bfan::Ablation, std::string>> variants = {
      {bfan::Ablation::Baseline, "Baseline"},
      {bfan::Ablation::BoundaryMinus, "Boundary-"},
      {bfan::Ablation::BoundaryPlus, "Boundary+"},
      {bfan::Ablation::AffmPlus, "AFFM+"},
  };

  fs::create_directories(out);
  std::map<std::string, AblationScore> scores;
  for (int s = 0; s < seeds; ++s) {
    for (const auto& [ablation, name] : variants) {
      bfan::RunConfig cfg = base_cfg;
      cfg.ablation = ablation;
      cfg.rng_seed = base_cfg.rng_seed + static_cast<std::uint64_t>(s);
      const fs::path run_dir =
          fs::path(out) / (name + "_seed" + std::to_string(cfg.rng_seed));
      bfan::train(train_samples, cfg, epochs, run_dir);
      const bfan::LoadedModel model = bfan::load_checkpoint(run_dir / "checkpoint.bfan");

      std::vector<std::string> ids;
      std::vector<bfan::SaliencyMap> sal;
      std::vector<bfan::GrayImage> gts;
      for (const auto& sample : test_samples) {
        const auto res = bfan::infer_one(*model.net, sample.image);
        ids.push_back(sample.id);
        sal.push_back(bfan::SaliencyMap::from_gray(res.saliency));
        bfan::GrayImage gt = (sample.mask.height == cfg.input_h && sample.mask.width == cfg.input_w)
                                 ? sample.mask
                                 : bfan::resize_nearest(sample.mask, cfg.input_h, cfg.input_w);
        gts.push_back(std::move(gt));
      }
      const bfan::EvalReport rep = bfan::evaluate_set(ids, sal, gts);
      scores[name].fbeta += rep.mean_fbeta / seeds;
      scores[name].mae += rep.mean_mae / seeds;
      std::printf("%s seed %llu: F-beta %.4f MAE %.4f\n", name.c_str(),
                  static_cast<unsigned long long>(cfg.rng_seed), rep.mean_fbeta, rep.mean_mae);
    }
  }

  std::ofstream csv(fs::path(out) / "ablation.csv");
  if (!csv) throw bfan::IoError("ablate: cannot create output CSV");
  csv << "variant,fbeta,mae\n";
  for (const auto& [ablation, name] : variants)
    csv << name << "," << bfan::fmt_metric(scores[name].fbeta) << ","
        << bfan::fmt_metric(scores[name].mae) << "\n";
  std::printf("wrote %s\n", (fs::path(out) / "ablation.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary-guided feature aggregation network for salient object detection"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset with masks/boundaries");
  int gen_n = 200, gen_size = 64;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "data";
  gen->add_option("--n", gen_n, "Number of samples")->capture_default_str();
  gen->add_option("--size", gen_size, "Square image size (multiple of 32)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

  // gen-boundary
  auto* genb = app.add_subcommand("gen-boundary", "Derive Canny boundary labels from binary masks");
  std::string genb_masks, genb_out = "boundaries";
  genb->add_option("--masks-dir", genb_masks, "Directory of P5 mask files")->required();
  genb->add_option("--out", genb_out, "Output directory")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model from a dataset manifest");
  std::string tr_config, tr_manifest, tr_out = "run";
  int tr_epochs = 50;
  bool tr_verbose = false;
  tr->add_option("--config", tr_config, "Config file (key=value); defaults when omitted");
  tr->add_option("--manifest", tr_manifest, "Dataset manifest")->required();
  tr->add_option("--epochs", tr_epochs, "Epochs to train")->capture_default_str();
  tr->add_option("--out", tr_out, "Output directory for checkpoint and loss log")
      ->capture_default_str();
  tr->add_flag("--verbose", tr_verbose, "Print per-epoch loss to stderr");

  // infer
  auto* in = app.add_subcommand("infer", "Run inference over a directory of P6 images");
  std::string in_ckpt, in_images, in_out = "preds", in_config, in_subset;
  bool in_dumpb = false;
  in->add_option("--checkpoint", in_ckpt, "Checkpoint file")->required();
  in->add_option("--images", in_images, "Directory of .ppm images")->required();
  in->add_option("--out", in_out, "Output directory for saliency graymaps")->capture_default_str();
  in->add_flag("--dump-boundary", in_dumpb, "Also write per-scale boundary predictions");
  in->add_option("--config", in_config, "Config to validate against the checkpoint hash");
  in->add_option("--subset", in_subset, "Evaluate a stage subset, e.g. 4,5");

  // eval
  auto* ev = app.add_subcommand("eval", "Score predictions against ground-truth masks");
  std::string ev_pred, ev_gt, ev_out = "eval";
  ev->add_option("--pred-dir", ev_pred, "Directory of predicted .pgm maps")->required();
  ev->add_option("--gt-dir", ev_gt, "Directory of ground-truth .pgm masks")->required();
  ev->add_option("--out", ev_out, "Output directory for report and PR CSVs")
      ->capture_default_str();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  std::string gc_op;
  gc->add_option("--op", gc_op, "Run a single named check");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and score the four ablation variants");
  std::string ab_config, ab_manifest, ab_test, ab_out = "ablation";
  int ab_epochs = 50, ab_seeds = 1;
  ab->add_option("--config", ab_config, "Config file; ablation field is overridden per variant");
  ab->add_option("--manifest", ab_manifest, "Training manifest")->required();
  ab->add_option("--test-manifest", ab_test, "Held-out manifest (defaults to --manifest)");
  ab->add_option("--epochs", ab_epochs, "Epochs per variant")->capture_default_str();
  ab->add_option("--seeds", ab_seeds, "Seeds to average over")->capture_default_str();
  ab->add_option("--out", ab_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(gen_n, gen_size, gen_seed, gen_out);
    if (genb->parsed()) return cmd_gen_boundary(genb_masks, genb_out);
    if (tr->parsed()) return cmd_train(tr_config, tr_manifest, tr_epochs, tr_out, tr_verbose);
    if (in->parsed()) return cmd_infer(in_ckpt, in_images, in_out, in_dumpb, in_config, in_subset);
    if (ev->parsed()) return cmd_eval(ev_pred, ev_gt, ev_out);
    if (gc->parsed()) return cmd_gradcheck(gc_op);
    if (ab->parsed())
      return cmd_ablate(ab_config, ab_manifest, ab_test, ab_epochs, ab_seeds, ab_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const bfan::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const bfan::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bfan::ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
