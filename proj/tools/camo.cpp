// camo: desk-scale adversarial-camouflage pipeline driver.
//
// Verbs: synth, tile, stats, train-detector, train-patch,
// train-patch-detector, apply, eval, sweep, report. Every command writes a
// manifest.json into its output directory that is sufficient to replay the
// run; seeds are explicit flags, never wall-clock derived.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "camo/config_file.hpp"
#include "camo/dataset.hpp"
#include "camo/detector.hpp"
#include "camo/evaluator.hpp"
#include "camo/manifest.hpp"
#include "camo/patch_trainer.hpp"
#include "camo/report.hpp"
#include "camo/version.hpp"
#include "camo/weights_io.hpp"

namespace fs = std::filesystem;

namespace {

// Relative data paths fall back to $CAMO_DATA_ROOT when they do not resolve
// from the working directory.
std::string resolve_data(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* root = std::getenv("CAMO_DATA_ROOT")) {
    const fs::path joined = fs::path(root) / path;
    if (fs::exists(joined)) return joined.string();
  }
  return path;
}

void require_exists(const std::string& path, const std::string& what) {
  if (!fs::exists(path))
    throw camo::IoError(what + " not found: '" + path + "'");
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

camo::ClassMap classes_for(int num_classes) {
  camo::ClassMap m;
  if (num_classes == 4) return m;
  m.names.clear();
  for (int i = 0; i < num_classes; ++i)
    m.names.push_back("class" + std::to_string(i));
  return m;
}

std::vector<double> parse_loss_column(const std::string&);  // fwd unused

void write_patch_loss_csv(const std::string& path,
                          const camo::PatchTrainResult& result) {
  std::ofstream os(path);
  if (!os) throw camo::IoError("cannot open '" + path + "'");
  os << "epoch,adv_loss,total_loss\n";
  os.precision(10);
  for (std::size_t i = 0; i < result.epoch_adv_loss.size(); ++i)
    os << i << ',' << result.epoch_adv_loss[i] << ','
       << result.epoch_total_loss[i] << '\n';
}

void check_sweep_invariant(const camo::SweepReport& report) {
  for (const auto& r : report.rows)
    if (r.detection_score != std::max(r.mf1_camo, r.f1_patch))
      throw camo::UsageError("sweep invariant violated for '" + r.name +
                             "': detection_score is not the rowwise max");
}

// Loads <name>.png (+ optional sidecar <name>.cfg) pairs from a directory.
std::vector<camo::SweepItem> load_patch_library(const std::string& dir) {
  std::vector<camo::SweepItem> items;
  std::vector<fs::path> pngs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") pngs.push_back(e.path());
  std::sort(pngs.begin(), pngs.end());
  for (const auto& png : pngs) {
    camo::SweepItem item;
    item.patch.pixels = camo::read_png(png.string());
    item.patch.provenance = png.stem().string();
    item.name = png.stem().string();
    const fs::path cfg = fs::path(png).replace_extension(".cfg");
    if (fs::exists(cfg)) {
      auto exp = camo::load_patch_experiment(cfg.string());
      item.size_fraction = exp.config.size_fraction;
      item.alpha = exp.config.alpha;
      item.noise_amp = exp.config.noise_amp;
    }
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale adversarial camouflage toolkit"};
  app.set_version_flag("--version", camo::kVersion);
  app.require_subcommand(1);

  try {
    // ----------------------------------------------------------------- synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    int synth_n = 100;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    camo::SynthConfig synth_cfg;
    synth->add_option("--n", synth_n, "number of images");
    synth->add_option("--seed", synth_seed, "rng seed")->required();
    synth->add_option("--out", synth_out, "output dataset dir")->required();
    synth->add_option("--size", synth_cfg.image_size, "image side, px");
    synth->add_option("--min-objects", synth_cfg.min_objects, "");
    synth->add_option("--max-objects", synth_cfg.max_objects, "");
    synth->add_option("--clutter", synth_cfg.clutter_items, "");

    // ------------------------------------------------------------------ tile
    auto* tilec = app.add_subcommand("tile", "tile a dataset into windows");
    std::string tile_in, tile_out;
    int tile_window = 416, tile_overlap = 0;
    tilec->add_option("--data", tile_in, "input dataset dir")->required();
    tilec->add_option("--out", tile_out, "output dataset dir")->required();
    tilec->add_option("--window", tile_window, "window side, px");
    tilec->add_option("--overlap", tile_overlap, "overlap, px");

    // ----------------------------------------------------------------- stats
    auto* statsc = app.add_subcommand("stats", "dataset statistics");
    std::string stats_data, stats_out;
    statsc->add_option("--data", stats_data, "dataset dir")->required();
    statsc->add_option("--out", stats_out, "output dir for stats.csv");

    // -------------------------------------------------------- train-detector
    auto* traind = app.add_subcommand("train-detector", "train the detector");
    std::string traind_data, traind_out;
    camo::TrainHyper traind_hyper;
    camo::DetectorConfig traind_cfg;
    traind->add_option("--data", traind_data, "training dataset dir")->required();
    traind->add_option("--out", traind_out, "output dir")->required();
    traind->add_option("--seed", traind_hyper.seed, "rng seed")->required();
    traind->add_option("--epochs", traind_hyper.epochs, "");
    traind->add_option("--lr", traind_hyper.lr, "");
    traind->add_option("--momentum", traind_hyper.momentum, "");
    traind->add_option("--batch", traind_hyper.batch_size, "");
    traind->add_option("--input-size", traind_cfg.input_size, "");
    traind->add_option("--grid", traind_cfg.grid_size, "");
    traind->add_option("--classes", traind_cfg.num_classes, "");

    // ----------------------------------------------------------- train-patch
    auto* trainp = app.add_subcommand("train-patch", "train an adversarial patch");
    std::string trainp_weights, trainp_data, trainp_config, trainp_out;
    bool trainp_smoke = false;
    std::uint64_t trainp_seed = 0;
    bool trainp_seed_set = false;
    int trainp_epochs = 0;
    trainp->add_option("--weights", trainp_weights, "frozen detector weights");
    trainp->add_option("--data", trainp_data, "dataset dir");
    trainp->add_option("--config", trainp_config, "experiment config file")
        ->required();
    trainp->add_option("--out", trainp_out, "output dir")->required();
    trainp->add_flag("--smoke", trainp_smoke,
                     "reduced-budget replay (lifts the 40-epoch floor)");
    trainp->add_option("--epochs", trainp_epochs, "override config epochs");
    trainp
        ->add_option_function<std::uint64_t>(
            "--seed",
            [&](std::uint64_t v) {
              trainp_seed = v;
              trainp_seed_set = true;
            },
            "override config seed")
        ->expected(1);

    // -------------------------------------------------- train-patch-detector
    auto* trainpd =
        app.add_subcommand("train-patch-detector", "train the patch detector");
    std::string trainpd_data, trainpd_patches, trainpd_out, trainpd_decoys;
    std::string trainpd_mode = "single";
    double trainpd_alpha = 1.0, trainpd_size = 0.25, trainpd_noise = 0.1;
    double trainpd_noobj = 12.0;
    camo::TrainHyper trainpd_hyper;
    trainpd->add_option("--data", trainpd_data, "clean dataset dir")->required();
    trainpd->add_option("--patch-dir", trainpd_patches, "patch library dir")
        ->required();
    trainpd->add_option("--out", trainpd_out, "output dir")->required();
    trainpd->add_option("--seed", trainpd_hyper.seed, "rng seed")->required();
    trainpd->add_option("--label-mode", trainpd_mode, "single | per-patch");
    trainpd->add_option("--alpha", trainpd_alpha, "overlay alpha");
    trainpd->add_option("--patch-size", trainpd_size, "overlay size fraction");
    trainpd->add_option("--noise", trainpd_noise, "overlay noise amplitude");
    trainpd->add_option("--decoy-dir", trainpd_decoys,
                        "PNG dir of decoy textures overlaid on half the "
                        "imagery as unlabeled hard negatives");
    trainpd->add_option("--noobj-weight", trainpd_noobj,
                        "negative-objectness weight");
    trainpd->add_option("--epochs", trainpd_hyper.epochs, "");
    trainpd->add_option("--lr", trainpd_hyper.lr, "");
    trainpd->add_option("--batch", trainpd_hyper.batch_size, "");

    // ----------------------------------------------------------------- apply
    auto* applyc = app.add_subcommand("apply", "apply a patch to a dataset");
    std::string apply_data, apply_patch, apply_out;
    camo::ApplyConfig apply_cfg;
    applyc->add_option("--data", apply_data, "dataset dir")->required();
    applyc->add_option("--patch", apply_patch, "patch PNG")->required();
    applyc->add_option("--out", apply_out, "output dir")->required();
    applyc->add_option("--seed", apply_cfg.seed, "rng seed")->required();
    applyc->add_option("--alpha", apply_cfg.alpha, "");
    applyc->add_option("--size", apply_cfg.size_fraction, "");
    applyc->add_option("--noise", apply_cfg.noise_amp, "");

    // ------------------------------------------------------------------ eval
    auto* evalc = app.add_subcommand("eval", "evaluate a detector");
    std::string eval_weights, eval_data, eval_out;
    camo::EvalConfig eval_cfg;
    evalc->add_option("--weights", eval_weights, "weights file")->required();
    evalc->add_option("--data", eval_data, "dataset dir")->required();
    evalc->add_option("--out", eval_out, "output dir")->required();
    evalc->add_option("--seed", eval_cfg.seed, "bootstrap seed")->required();
    evalc->add_option("--conf", eval_cfg.conf_thresh, "");
    evalc->add_option("--nms", eval_cfg.nms_iou, "");
    evalc->add_option("--iou", eval_cfg.iou_thresh, "");
    evalc->add_option("--boot", eval_cfg.n_boot, "");

    // ----------------------------------------------------------------- sweep
    auto* sweepc = app.add_subcommand("sweep", "score a patch library");
    std::string sweep_weights, sweep_pd, sweep_patches, sweep_data, sweep_out;
    camo::EvalConfig sweep_cfg;
    sweep_cfg.n_boot = 0;
    sweepc->add_option("--weights", sweep_weights, "vehicle detector weights")
        ->required();
    sweepc->add_option("--patch-detector", sweep_pd, "patch detector weights")
        ->required();
    sweepc->add_option("--patch-dir", sweep_patches, "patch library dir")
        ->required();
    sweepc->add_option("--data", sweep_data, "test dataset dir")->required();
    sweepc->add_option("--out", sweep_out, "output dir")->required();
    sweepc->add_option("--seed", sweep_cfg.seed, "jitter seed")->required();
    sweepc->add_option("--conf", sweep_cfg.conf_thresh, "");

    // ---------------------------------------------------------------- report
    auto* reportc = app.add_subcommand("report", "render sweep CSV to SVG");
    std::string report_sweep, report_out;
    reportc->add_option("--sweep", report_sweep, "sweep CSV")->required();
    reportc->add_option("--out", report_out, "output dir")->required();

    CLI11_PARSE(app, argc, argv);
    Stopwatch watch;

    if (*synth) {
      fs::create_directories(synth_out);
      std::vector<camo::LabeledImage> data;
      for (int i = 0; i < synth_n; ++i)
        data.push_back(camo::synth_scene(camo::seed_combine(synth_seed, i),
                                         synth_cfg));
      camo::save_dataset(synth_out, data);
      camo::RunManifest m;
      m.command = "synth";
      m.config = {{"n", std::to_string(synth_n)},
                  {"size", std::to_string(synth_cfg.image_size)},
                  {"min_objects", std::to_string(synth_cfg.min_objects)},
                  {"max_objects", std::to_string(synth_cfg.max_objects)},
                  {"clutter", std::to_string(synth_cfg.clutter_items)}};
      m.seed = synth_seed;
      m.outputs = {"images/", "labels/"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(synth_out, m);
      std::cout << "synth: wrote " << synth_n << " images to " << synth_out
                << "\n";
    } else if (*tilec) {
      const std::string in = resolve_data(tile_in);
      require_exists(in, "dataset");
      auto data = camo::load_dataset(in);
      std::vector<camo::LabeledImage> tiles;
      for (const auto& li : data) {
        auto t = camo::tile(li, tile_window, tile_overlap);
        tiles.insert(tiles.end(), t.begin(), t.end());
      }
      fs::create_directories(tile_out);
      camo::save_dataset(tile_out, tiles);
      camo::RunManifest m;
      m.command = "tile";
      m.config = {{"window", std::to_string(tile_window)},
                  {"overlap", std::to_string(tile_overlap)}};
      m.inputs = {in};
      m.outputs = {"images/", "labels/"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(tile_out, m);
      std::cout << "tile: " << data.size() << " images -> " << tiles.size()
                << " tiles\n";
    } else if (*statsc) {
      const std::string in = resolve_data(stats_data);
      require_exists(in, "dataset");
      auto data = camo::load_dataset(in);
      camo::ClassMap classes;
      auto s = camo::stats(data, classes);
      std::cout << "images " << s.images << "\nlabels " << s.labels << "\n";
      for (const auto& [name, count] : s.class_counts)
        std::cout << name << " " << count << "\n";
      std::cout << "labels_per_image_median " << s.labels_per_image_median
                << "\nlabels_per_image_max " << s.labels_per_image_max
                << "\nextent_median_px " << s.extent_median_px
                << "\nextent_std_px " << s.extent_std_px << "\n";
      if (!s.medians_defined) std::cout << "medians undefined (no labels)\n";
      if (!stats_out.empty()) {
        fs::create_directories(stats_out);
        std::ofstream os(fs::path(stats_out) / "stats.csv");
        os << "metric,value\nimages," << s.images << "\nlabels," << s.labels
           << "\n";
        for (const auto& [name, count] : s.class_counts)
          os << "count_" << name << ',' << count << '\n';
        os << "labels_per_image_median," << s.labels_per_image_median
           << "\nlabels_per_image_max," << s.labels_per_image_max
           << "\nextent_median_px," << s.extent_median_px
           << "\nextent_std_px," << s.extent_std_px << '\n';
        camo::RunManifest m;
        m.command = "stats";
        m.inputs = {in};
        m.outputs = {"stats.csv"};
        m.wall_seconds = watch.seconds();
        camo::write_manifest(stats_out, m);
      }
    } else if (*traind) {
      const std::string in = resolve_data(traind_data);
      require_exists(in, "dataset");
      auto data = camo::load_dataset(in);
      auto result = camo::train_detector(data, traind_cfg, traind_hyper);
      fs::create_directories(traind_out);
      camo::save_weights((fs::path(traind_out) / "weights.camw").string(),
                         result.weights);
      camo::write_loss_csv((fs::path(traind_out) / "loss.csv").string(),
                           result.epoch_loss);
      camo::RunManifest m;
      m.command = "train-detector";
      m.config = {{"epochs", std::to_string(traind_hyper.epochs)},
                  {"lr", std::to_string(traind_hyper.lr)},
                  {"momentum", std::to_string(traind_hyper.momentum)},
                  {"batch", std::to_string(traind_hyper.batch_size)},
                  {"input_size", std::to_string(traind_cfg.input_size)},
                  {"grid", std::to_string(traind_cfg.grid_size)},
                  {"classes", std::to_string(traind_cfg.num_classes)}};
      m.seed = traind_hyper.seed;
      m.inputs = {in};
      m.outputs = {"weights.camw", "loss.csv"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(traind_out, m);
      std::cout << "train-detector: final epoch loss "
                << result.epoch_loss.back() << "\n";
    } else if (*trainp) {
      require_exists(trainp_config, "config");
      auto exp = camo::load_patch_experiment(trainp_config);
      if (trainp_seed_set) exp.config.seed = trainp_seed;
      if (trainp_epochs > 0) exp.config.epochs = trainp_epochs;
      const std::string wpath =
          resolve_data(!trainp_weights.empty() ? trainp_weights
                                               : exp.weights_path);
      const std::string dpath = resolve_data(
          !trainp_data.empty() ? trainp_data : exp.dataset_path);
      require_exists(wpath, "weights");
      require_exists(dpath, "dataset");
      auto weights = camo::load_weights(wpath);
      auto data = camo::load_dataset(dpath);
      auto result = camo::train_patch(weights, data, exp.config, trainp_smoke);
      for (const auto& w : result.warnings)
        std::cerr << "warning: " << w << "\n";
      fs::create_directories(trainp_out);
      const std::string stem = exp.config.name;
      camo::write_png((fs::path(trainp_out) / (stem + ".png")).string(),
                      result.patch.pixels);
      camo::PatchExperiment out_exp = exp;
      camo::save_patch_experiment(
          (fs::path(trainp_out) / (stem + ".cfg")).string(), out_exp);
      write_patch_loss_csv((fs::path(trainp_out) / (stem + "_loss.csv")).string(),
                           result);
      camo::RunManifest m;
      m.command = "train-patch";
      m.config = {{"config", trainp_config},
                  {"name", exp.config.name},
                  {"loss", camo::to_string(exp.config.loss_kind)},
                  {"size", std::to_string(exp.config.size_fraction)},
                  {"alpha", std::to_string(exp.config.alpha)},
                  {"epochs", std::to_string(exp.config.epochs)},
                  {"smoke", trainp_smoke ? "true" : "false"}};
      m.seed = exp.config.seed;
      m.inputs = {wpath, dpath, trainp_config};
      m.outputs = {stem + ".png", stem + ".cfg", stem + "_loss.csv"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(trainp_out, m);
      if (!result.epoch_adv_loss.empty())
        std::cout << "train-patch: best epoch " << result.best_epoch
                  << " adv loss " << result.epoch_adv_loss[result.best_epoch]
                  << "\n";
      else
        std::cout << "train-patch: no training performed\n";
    } else if (*trainpd) {
      const std::string in = resolve_data(trainpd_data);
      require_exists(in, "dataset");
      const std::string pdir = resolve_data(trainpd_patches);
      require_exists(pdir, "patch dir");
      auto data = camo::load_dataset(in);
      auto library = load_patch_library(pdir);
      if (library.empty())
        throw camo::UsageError("train-patch-detector: no patches in '" + pdir +
                               "'");
      std::vector<camo::Patch> patches;
      for (auto& item : library) patches.push_back(item.patch);

      camo::ApplyConfig overlay;
      overlay.alpha = trainpd_alpha;
      overlay.size_fraction = trainpd_size;
      overlay.noise_amp = trainpd_noise;
      overlay.seed = trainpd_hyper.seed;
      const auto mode = trainpd_mode == "per-patch"
                            ? camo::PatchLabelMode::PerPatchClass
                            : camo::PatchLabelMode::SingleClass;

      std::vector<camo::LabeledImage> overlaid;
      if (trainpd_decoys.empty()) {
        overlaid = camo::overlay_patch_dataset(data, patches, overlay, mode);
      } else {
        // half the imagery carries library patches, the other half carries
        // unlabeled decoy squares so the detector must learn the texture
        auto decoy_lib = load_patch_library(resolve_data(trainpd_decoys));
        if (decoy_lib.empty())
          throw camo::UsageError("train-patch-detector: no decoys in '" +
                                 trainpd_decoys + "'");
        std::vector<camo::Patch> decoys;
        for (auto& d : decoy_lib) decoys.push_back(d.patch);
        const std::size_t half = data.size() / 2;
        std::vector<camo::LabeledImage> first(data.begin(), data.begin() + half);
        std::vector<camo::LabeledImage> second(data.begin() + half, data.end());
        overlaid = camo::overlay_patch_dataset(first, patches, overlay, mode);
        const double ratios[3] = {0.8, 1.12, 1.4};
        const std::size_t chunk = (second.size() + 2) / 3;
        for (int k = 0; k < 3 && k * chunk < second.size(); ++k) {
          std::vector<camo::LabeledImage> part(
              second.begin() + k * chunk,
              second.begin() + std::min(second.size(), (k + 1) * chunk));
          camo::ApplyConfig dover = overlay;
          dover.seed = camo::seed_combine(trainpd_hyper.seed, 1515 + k);
          dover.size_fraction = std::min(1.0, trainpd_size * ratios[k]);
          auto ds = camo::overlay_patch_dataset(part, decoys, dover, mode);
          for (auto& li : ds) li.boxes.clear();
          overlaid.insert(overlaid.end(), ds.begin(), ds.end());
        }
      }

      camo::DetectorConfig cfg;
      cfg.input_size = data.front().image.dim(1);
      cfg.grid_size = cfg.input_size / 8;
      cfg.num_classes = mode == camo::PatchLabelMode::SingleClass
                            ? 1
                            : static_cast<int>(patches.size());
      cfg.noobj_weight = static_cast<float>(trainpd_noobj);
      auto result = camo::train_detector(overlaid, cfg, trainpd_hyper);
      fs::create_directories(trainpd_out);
      camo::save_weights((fs::path(trainpd_out) / "weights.camw").string(),
                         result.weights);
      camo::write_loss_csv((fs::path(trainpd_out) / "loss.csv").string(),
                           result.epoch_loss);
      camo::RunManifest m;
      m.command = "train-patch-detector";
      m.config = {{"label_mode", trainpd_mode},
                  {"alpha", std::to_string(trainpd_alpha)},
                  {"patch_size", std::to_string(trainpd_size)},
                  {"noise", std::to_string(trainpd_noise)},
                  {"epochs", std::to_string(trainpd_hyper.epochs)},
                  {"classes", std::to_string(cfg.num_classes)}};
      m.seed = trainpd_hyper.seed;
      m.inputs = {in, pdir};
      m.outputs = {"weights.camw", "loss.csv"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(trainpd_out, m);
      std::cout << "train-patch-detector: " << cfg.num_classes
                << "-class weights written\n";
    } else if (*applyc) {
      const std::string in = resolve_data(apply_data);
      require_exists(in, "dataset");
      require_exists(apply_patch, "patch");
      auto data = camo::load_dataset(in);
      camo::Patch patch;
      patch.pixels = camo::read_png(apply_patch);
      patch.provenance = fs::path(apply_patch).stem().string();
      std::set<int> all;
      for (int k = 0; k < 16; ++k) all.insert(k);
      fs::create_directories(fs::path(apply_out) / "jitter");
      std::vector<camo::LabeledImage> out;
      camo::ApplyConfig per = apply_cfg;
      for (std::size_t i = 0; i < data.size(); ++i) {
        per.seed = camo::seed_combine(apply_cfg.seed, i);
        auto applied = camo::apply_patches(data[i].image, data[i].boxes, patch,
                                           per, all);
        for (const auto& w : applied.warnings)
          std::cerr << "warning: " << data[i].source_id << ": " << w << "\n";
        camo::LabeledImage li;
        li.image = applied.image;
        li.boxes = data[i].boxes;
        li.source_id = data[i].source_id;
        out.push_back(std::move(li));
        std::ofstream jlog(fs::path(apply_out) / "jitter" /
                           (data[i].source_id + ".txt"));
        for (const auto& pl : applied.placements)
          jlog << camo::placement_line(pl) << '\n';
      }
      camo::save_dataset(apply_out, out);
      camo::RunManifest m;
      m.command = "apply";
      m.config = {{"alpha", std::to_string(apply_cfg.alpha)},
                  {"size", std::to_string(apply_cfg.size_fraction)},
                  {"noise", std::to_string(apply_cfg.noise_amp)},
                  {"patch", apply_patch}};
      m.seed = apply_cfg.seed;
      m.inputs = {in, apply_patch};
      m.outputs = {"images/", "labels/", "jitter/"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(apply_out, m);
      std::cout << "apply: patched " << out.size() << " images\n";
    } else if (*evalc) {
      const std::string wpath = resolve_data(eval_weights);
      const std::string dpath = resolve_data(eval_data);
      require_exists(wpath, "weights");
      require_exists(dpath, "dataset");
      auto weights = camo::load_weights(wpath);
      auto data = camo::load_dataset(dpath);
      auto classes = classes_for(weights.config.num_classes);
      auto report = camo::evaluate_detector(weights, data, classes, eval_cfg);
      fs::create_directories(eval_out);
      camo::write_eval_csv((fs::path(eval_out) / "eval.csv").string(), report);
      camo::RunManifest m;
      m.command = "eval";
      m.config = {{"conf", std::to_string(eval_cfg.conf_thresh)},
                  {"nms", std::to_string(eval_cfg.nms_iou)},
                  {"iou", std::to_string(eval_cfg.iou_thresh)},
                  {"boot", std::to_string(eval_cfg.n_boot)}};
      m.seed = eval_cfg.seed;
      m.inputs = {wpath, dpath};
      m.outputs = {"eval.csv"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(eval_out, m);
      for (const auto& s : report.per_class)
        std::cout << s.name << " F1 " << s.f1 << " +/- " << s.sigma << "\n";
      std::cout << "mF1 " << report.mf1 << " +/- " << report.mf1_sigma << "\n";
    } else if (*sweepc) {
      const std::string wpath = resolve_data(sweep_weights);
      const std::string pdpath = resolve_data(sweep_pd);
      const std::string ppath = resolve_data(sweep_patches);
      const std::string dpath = resolve_data(sweep_data);
      for (const auto& [p, what] :
           std::vector<std::pair<std::string, std::string>>{
               {wpath, "weights"},
               {pdpath, "patch-detector weights"},
               {ppath, "patch dir"},
               {dpath, "dataset"}})
        require_exists(p, what);
      auto weights = camo::load_weights(wpath);
      auto patch_weights = camo::load_weights(pdpath);
      auto library = load_patch_library(ppath);
      auto data = camo::load_dataset(dpath);
      auto classes = classes_for(weights.config.num_classes);
      auto report =
          camo::run_sweep(weights, patch_weights, library, data, classes,
                          sweep_cfg);
      check_sweep_invariant(report);
      fs::create_directories(sweep_out);
      camo::write_sweep_csv((fs::path(sweep_out) / "sweep.csv").string(),
                            report);
      camo::RunManifest m;
      m.command = "sweep";
      m.config = {{"conf", std::to_string(sweep_cfg.conf_thresh)},
                  {"patches", std::to_string(library.size())}};
      m.seed = sweep_cfg.seed;
      m.inputs = {wpath, pdpath, ppath, dpath};
      m.outputs = {"sweep.csv"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(sweep_out, m);
      std::cout << "baseline mF1 " << report.baseline_mf1 << "\n";
      std::cout << "pearson reduction~size " << report.pearson_reduction_size
                << " reduction~alpha " << report.pearson_reduction_alpha
                << "\n";
      std::cout << "pearson score~size " << report.pearson_score_size
                << " score~alpha " << report.pearson_score_alpha << "\n";
    } else if (*reportc) {
      require_exists(report_sweep, "sweep CSV");
      auto sweep = camo::read_sweep_csv(report_sweep);
      check_sweep_invariant(sweep);
      fs::create_directories(report_out);
      camo::write_text_file((fs::path(report_out) / "bars.svg").string(),
                            camo::sweep_bar_chart_svg(sweep));
      camo::write_text_file(
          (fs::path(report_out) / "scatter_score_size.svg").string(),
          camo::sweep_scatter_svg(sweep, true, true));
      camo::write_text_file(
          (fs::path(report_out) / "scatter_score_alpha.svg").string(),
          camo::sweep_scatter_svg(sweep, false, true));
      camo::write_text_file(
          (fs::path(report_out) / "scatter_reduction_size.svg").string(),
          camo::sweep_scatter_svg(sweep, true, false));
      camo::write_text_file(
          (fs::path(report_out) / "scatter_reduction_alpha.svg").string(),
          camo::sweep_scatter_svg(sweep, false, false));
      camo::RunManifest m;
      m.command = "report";
      m.inputs = {report_sweep};
      m.outputs = {"bars.svg", "scatter_score_size.svg",
                   "scatter_score_alpha.svg", "scatter_reduction_size.svg",
                   "scatter_reduction_alpha.svg"};
      m.wall_seconds = watch.seconds();
      camo::write_manifest(report_out, m);
      std::cout << "report: " << sweep.rows.size() << " rows rendered\n";
    }
  } catch (const camo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
