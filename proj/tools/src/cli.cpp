#include "pixfuse/cli.hpp"

#include <CLI11.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "pixfuse/checkpoint.hpp"
#include "pixfuse/config.hpp"
#include "pixfuse/determinism.hpp"
#include "pixfuse/errors.hpp"
#include "pixfuse/metrics.hpp"
#include "pixfuse/pseudolabel.hpp"
#include "pixfuse/scenedata.hpp"
#include "pixfuse/training.hpp"

namespace pixfuse::cli {
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out;
  std::string data;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "Run config (.json or .toml)")->check(CLI::ExistingFile);
  c.seed_opt = cmd->add_option("--seed", c.seed, "Base seed for every random stream");
  c.workers_opt = cmd->add_option("--workers", c.workers, "Intra-op threads (0 = library default)");
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig::desk() : load_config(c.config);
  if (c.seed_opt && c.seed_opt->count() > 0) {
    cfg.seed = c.seed;
    cfg.pseudolabel.cluster.seed = c.seed;
  }
  if (c.workers_opt && c.workers_opt->count() > 0) cfg.workers = c.workers;
  if (deterministic_mode_requested()) cfg.deterministic = true;
  return cfg;
}

void start(const RunConfig& cfg) {
  cfg.validate();
  configure_runtime(cfg.deterministic, cfg.workers);
}

std::vector<Scene> scenes_for(const Common& c, const RunConfig& cfg, std::uint64_t stream, int count) {
  if (!c.data.empty()) return load_scene_collection(c.data);
  if (!cfg.data.path.empty()) return load_scene_collection(cfg.data.path);
  return generate_synthetic(derive_seed(cfg.seed, stream), count, cfg.data.tile_size, cfg.data.cloud_fraction);
}

ClassScheme scheme_of(const RunConfig& cfg) { return ClassScheme::by_name(cfg.data.class_scheme); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw PipelineError("cannot write " + path.string());
  out << text << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"pixfuse: self-supervised SAR-optical fusion and land-cover mapping"};
  app.require_subcommand(1);

  // synth
  Common synth_c;
  int synth_n = 16;
  int synth_size = 64;
  double synth_clouds = 0.0;
  auto* synth = app.add_subcommand("synth", "Generate synthetic co-registered SAR/optical scenes");
  add_common(synth, synth_c, false);
  synth->add_option("--n", synth_n, "Number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "Tile edge in pixels (multiple of 8)");
  synth->add_option("--cloud-fraction", synth_clouds, "Probability that a scene carries a cloud")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--out", synth_c.out, "Output directory")->required();

  // pretrain
  Common pre_c;
  std::string pre_fusion, pre_modality;
  int pre_epochs = 0, pre_batch = 0;
  double pre_width = 0.0;
  auto* pre = app.add_subcommand("pretrain", "Self-supervised contrastive pretraining");
  add_common(pre, pre_c);
  pre->add_option("--data", pre_c.data, "Scene collection directory (default: synthetic scenes)");
  auto* pre_fusion_opt = pre->add_option("--fusion", pre_fusion, "pixef, pixif, pixlf or mcl");
  auto* pre_mod_opt = pre->add_option("--modality", pre_modality, "s1s2, s1 or s2 (single sensors need pixef)");
  auto* pre_epochs_opt = pre->add_option("--epochs", pre_epochs, "Pretraining epochs");
  auto* pre_batch_opt = pre->add_option("--batch-size", pre_batch, "Scenes per batch");
  auto* pre_width_opt = pre->add_option("--width-mult", pre_width, "Network width multiplier");
  pre->add_option("--out", pre_c.out, "Run directory")->required();

  // pseudolabel
  Common pl_c;
  auto* pl = app.add_subcommand("pseudolabel", "Spectral-index pseudo labels for every scene");
  add_common(pl, pl_c);
  pl->add_option("--data", pl_c.data, "Scene collection directory (default: synthetic scenes)");
  pl->add_option("--out", pl_c.out, "Output directory, one subdirectory per scene")->required();

  // probe
  Common pr_c;
  std::string pr_ckpt;
  int pr_labels = 0, pr_held = 0;
  auto* pr = app.add_subcommand("probe", "Linear probe on frozen features");
  add_common(pr, pr_c);
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--data", pr_c.data, "Labelled scene collection (default: synthetic scenes)");
  auto* pr_labels_opt = pr->add_option("--labels", pr_labels, "Labelled scenes used for training the probe");
  auto* pr_held_opt = pr->add_option("--held-out", pr_held, "Scenes the metrics are reported on");
  pr->add_option("--out", pr_c.out, "Output directory (default: next to the checkpoint)");

  // selftrain
  Common st_c;
  std::string st_ckpt;
  auto* st = app.add_subcommand("selftrain", "Two-step self-training from pseudo labels");
  add_common(st, st_c);
  st->add_option("--checkpoint", st_ckpt, "Pretrained checkpoint directory")->required()->check(CLI::ExistingDirectory);
  st->add_option("--data", st_c.data, "Scene collection directory (default: synthetic scenes)");
  st->add_option("--out", st_c.out, "Output directory")->required();

  // eval
  std::string ev_pred, ev_data, ev_out, ev_scheme = "six_class";
  auto* ev = app.add_subcommand("eval", "Score predicted label maps against ground truth");
  ev->add_option("--pred", ev_pred, "Directory of <scene id>.bin uint8 label maps")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data", ev_data, "Scene collection with ground truth")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--scheme", ev_scheme, "Class scheme (six_class or dfc2020)");
  ev->add_option("--out", ev_out, "Report JSON path");

  // export-map
  std::string ex_scene, ex_labels, ex_out, ex_scheme = "six_class";
  auto* ex = app.add_subcommand("export-map", "Render a label map as a palette PPM with a legend");
  ex->add_option("--scene", ex_scene, "Scene directory (for the tile size)")->required()->check(CLI::ExistingDirectory);
  ex->add_option("--labels", ex_labels, "uint8 label map (.bin)")->required()->check(CLI::ExistingFile);
  ex->add_option("--scheme", ex_scheme, "Class scheme (six_class or dfc2020)");
  ex->add_option("--out", ex_out, "Output .ppm path")->required();

  // gradcheck
  std::string gc_fusion = "pixif";
  std::uint64_t gc_seed = 0;
  double gc_eps = 1e-6, gc_tol = 1e-4;
  int gc_samples = 200;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the composite loss gradients");
  gc->add_option("--fusion", gc_fusion, "pixef, pixif, pixlf or mcl");
  gc->add_option("--seed", gc_seed, "Seed");
  gc->add_option("--eps", gc_eps, "Central-difference step");
  gc->add_option("--samples", gc_samples, "Sampled parameter scalars");
  gc->add_option("--tol", gc_tol, "Pass threshold on the max relative error");

  std::vector<const char*> argv{"pixfuse"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) {
      const auto scenes = generate_synthetic(synth_c.seed, synth_n, synth_size, synth_clouds);
      fs::create_directories(synth_c.out);
      save_scene_collection(scenes, synth_c.out);
      std::cerr << "[synth] wrote " << scenes.size() << " scenes to " << synth_c.out << "\n";
      return kExitOk;
    }

    if (*pre) {
      auto cfg = resolve_config(pre_c);
      if (pre_fusion_opt->count()) cfg.network.fusion_mode = parse_fusion_mode(pre_fusion);
      if (pre_mod_opt->count()) cfg.network.modality = parse_modality(pre_modality);
      if (pre_epochs_opt->count()) cfg.train.pretrain.epochs = pre_epochs;
      if (pre_batch_opt->count()) cfg.train.pretrain.batch_size = pre_batch;
      if (pre_width_opt->count()) cfg.network.width_mult = pre_width;
      start(cfg);
      const auto scenes = scenes_for(pre_c, cfg, 10, cfg.data.synthetic_count);
      fs::create_directories(pre_c.out);
      write_text(fs::path(pre_c.out) / "config.json", config_to_json(cfg));
      PretrainOptions options;
      options.out_dir = pre_c.out;
      pretrain(scenes, cfg, options);
      return kExitOk;
    }

    if (*pl) {
      auto cfg = resolve_config(pl_c);
      start(cfg);
      const auto scenes = scenes_for(pl_c, cfg, 10, cfg.data.synthetic_count);
      int64_t agree = 0, labelled = 0;
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        auto pcfg = cfg.pseudolabel;
        pcfg.cluster.seed = derive_seed(cfg.seed, 1000 + i);
        auto full = pseudo_label_scene(scenes[i], pcfg);
        std::mt19937_64 rng(derive_seed(cfg.seed, 2000 + i));
        auto sparse = sparsify(full, pcfg.cap, rng);
        const auto dir = fs::path(pl_c.out) / scenes[i].id;
        fs::create_directories(dir);
        save_pseudo_labels(sparse, dir);
        if (scenes[i].gt) {
          auto mask = full.labels != kUnlabeled;
          labelled += mask.sum().item<int64_t>();
          agree += (mask & (full.labels == *scenes[i].gt)).sum().item<int64_t>();
        }
      }
      if (labelled > 0) {
        std::cerr << "[pseudolabel] precision against ground truth: " << static_cast<double>(agree) / labelled
                  << " over " << labelled << " pixels\n";
      }
      return kExitOk;
    }

    if (*pr) {
      auto cfg = resolve_config(pr_c);
      if (pr_labels_opt->count()) cfg.eval.probe_scenes = pr_labels;
      if (pr_held_opt->count()) cfg.eval.held_out_scenes = pr_held;
      start(cfg);
      auto ckpt = load_checkpoint(pr_ckpt);
      const int needed = cfg.eval.probe_scenes + cfg.eval.held_out_scenes;
      auto scenes = scenes_for(pr_c, cfg, 20, needed);
      if (static_cast<int>(scenes.size()) < needed) {
        throw ConfigError("probe needs " + std::to_string(needed) + " scenes, data has " +
                          std::to_string(scenes.size()));
      }
      std::span<const Scene> all(scenes);
      const auto train = all.subspan(0, cfg.eval.probe_scenes);
      const auto held = all.subspan(cfg.eval.probe_scenes, cfg.eval.held_out_scenes);
      const auto scheme = scheme_of(cfg);
      auto result = linear_probe(ckpt.net, ckpt.norm, train, held, cfg.train.linear, scheme, cfg.seed);
      const fs::path out = pr_c.out.empty() ? fs::path(pr_ckpt).parent_path() / "probe" : fs::path(pr_c.out);
      fs::create_directories(out);
      const auto csv = out / "metrics.csv";
      fs::remove(csv);
      for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        const bool last = e + 1 == result.epoch_loss.size();
        append_metrics_row(csv, static_cast<int>(e + 1), Phase::kLinear, result.epoch_loss[e],
                           last ? std::optional(result.held_out_report.aa) : std::nullopt,
                           last ? std::optional(result.held_out_report.miou) : std::nullopt);
      }
      write_report_json(out / "report.json", result.held_out_report, scheme);
      std::cerr << "[probe] held-out AA " << result.held_out_report.aa << " mIoU " << result.held_out_report.miou
                << "\n";
      return kExitOk;
    }

    if (*st) {
      auto cfg = resolve_config(st_c);
      start(cfg);
      auto ckpt = load_checkpoint(st_ckpt);
      auto scenes = scenes_for(st_c, cfg, 30, cfg.data.synthetic_count);
      const auto scheme = scheme_of(cfg);
      auto result = selftrain(ckpt.net, ckpt.norm, scenes, cfg, scheme);
      const fs::path out(st_c.out);
      fs::create_directories(out / "pred");
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        write_raw(out / "pred" / (scenes[i].id + ".bin"), result.step2_labels[i]);
      }
      save_checkpoint(out / "ckpt", result.net, ckpt.norm, cfg.seed, ckpt.epoch);
      const auto csv = out / "metrics.csv";
      fs::remove(csv);
      if (result.step1_report && result.step2_report) {
        append_metrics_row(csv, cfg.train.selftrain1.epochs, Phase::kSelfTrain1, result.step1_loss.back(),
                           result.step1_report->aa, result.step1_report->miou);
        append_metrics_row(csv, cfg.train.selftrain2.epochs, Phase::kSelfTrain2, result.step2_loss.back(),
                           result.step2_report->aa, result.step2_report->miou);
        write_report_json(out / "report.json", *result.step2_report, scheme);
        std::cerr << "[selftrain] step 1 mIoU " << result.step1_report->miou << ", step 2 mIoU "
                  << result.step2_report->miou << "\n";
      }
      return kExitOk;
    }

    if (*ev) {
      const auto scheme = ClassScheme::by_name(ev_scheme);
      const auto scenes = load_scene_collection(ev_data);
      std::vector<torch::Tensor> pred, gt;
      for (const auto& s : scenes) {
        if (!s.gt) throw ConfigError("scene " + s.id + " has no ground truth");
        pred.push_back(read_raw(fs::path(ev_pred) / (s.id + ".bin"), torch::kUInt8, {s.height(), s.width()}));
        gt.push_back(*s.gt);
      }
      const auto report = evaluate(pred, gt, scheme);
      if (!ev_out.empty()) write_report_json(ev_out, report, scheme);
      std::cout << "AA " << report.aa << " mIoU " << report.miou << "\n";
      return kExitOk;
    }

    if (*ex) {
      const auto scheme = ClassScheme::by_name(ex_scheme);
      const auto scene = load_scene(ex_scene);
      auto labels = read_raw(ex_labels, torch::kUInt8, {scene.height(), scene.width()});
      write_label_ppm(ex_out, labels, scheme);
      auto legend = fs::path(ex_out);
      legend.replace_extension(".legend.txt");
      write_legend(legend, scheme);
      return kExitOk;
    }

    if (*gc) {
      configure_runtime(true, 1);
      const auto report = grad_check_composite(parse_fusion_mode(gc_fusion), gc_seed, gc_eps, gc_samples, gc_tol);
      std::cout << "max relative error " << report.max_rel_error << " over " << report.samples << " parameters: "
                << (report.passed ? "pass" : "FAIL") << "\n";
      return report.passed ? kExitOk : kExitFailure;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace pixfuse::cli
