#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "camo/image_io.hpp"
#include "camo/labeled_image.hpp"
#include "camo/patcher.hpp"

namespace camo {

// ---------------------------------------------------------------------------
// synthetic overhead scenes
// ---------------------------------------------------------------------------

// Desk-scale stand-in for drone imagery: textured background, a road band,
// muted clutter blobs and saturated axis-aligned "vehicles" with per-class
// color and aspect priors.
struct SynthConfig {
  int image_size = 104;
  int min_objects = 2;
  int max_objects = 5;
  ClassMap classes;                 // priors keyed by name; unknown names get
                                    // a generic prior
  std::vector<double> class_probs;  // empty = uniform
  double size_scale = 1.0;
  int clutter_items = 8;

  void validate() const {
    classes.validate();
    if (image_size < 16) throw ParamError("synth: image_size too small");
    if (min_objects < 0 || max_objects < min_objects)
      throw ParamError("synth: bad n_objects range");
    if (!class_probs.empty() &&
        class_probs.size() != classes.names.size())
      throw ParamError("synth: class_probs length mismatch");
  }
};

namespace detail {

struct VehiclePrior {
  float r, g, b;
  double min_extent, max_extent;  // shorter side, px at image_size 104
  double min_aspect, max_aspect;
};

inline VehiclePrior vehicle_prior(const std::string& name) {
  if (name == "bus") return {0.82f, 0.72f, 0.16f, 14.0, 20.0, 2.0, 2.6};
  if (name == "car") return {0.18f, 0.33f, 0.80f, 10.0, 15.0, 1.0, 1.4};
  if (name == "truck") return {0.78f, 0.22f, 0.16f, 12.0, 17.0, 1.7, 2.3};
  if (name == "van") return {0.22f, 0.72f, 0.32f, 11.0, 16.0, 1.3, 1.6};
  // generic prior with a name-derived hue
  const std::uint64_t h = mix64(std::hash<std::string>{}(name));
  return {0.3f + 0.5f * ((h >> 8) & 0xFF) / 255.0f,
          0.3f + 0.5f * ((h >> 16) & 0xFF) / 255.0f,
          0.3f + 0.5f * ((h >> 24) & 0xFF) / 255.0f,
          11.0, 17.0, 1.0, 2.0};
}

inline void fill_rect(std::vector<float>& img, int size, int x0, int y0, int x1,
                      int y1, float r, float g, float b) {
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(size, x1);
  y1 = std::min(size, y1);
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      img[i] = r;
      img[plane + i] = g;
      img[2 * plane + i] = b;
    }
}

}  // namespace detail

inline LabeledImage synth_scene(std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(seed_combine(seed, 0x5CE4E));
  const int N = cfg.image_size;
  const std::size_t plane = static_cast<std::size_t>(N) * N;
  std::vector<float> img(3 * plane);

  // background: muted base + low-frequency waves + speckle
  const double base[3] = {0.38, 0.40, 0.36};
  double freq[3], phase[3], amp[3];
  for (int k = 0; k < 3; ++k) {
    freq[k] = rng.uniform(0.02, 0.09);
    phase[k] = rng.uniform(0.0, 6.28318);
    amp[k] = rng.uniform(0.02, 0.05);
  }
  for (int y = 0; y < N; ++y)
    for (int x = 0; x < N; ++x) {
      const double wave = amp[0] * std::cos(freq[0] * (x + 2 * y) + phase[0]) +
                          amp[1] * std::cos(freq[1] * (2 * x - y) + phase[1]) +
                          amp[2] * std::cos(freq[2] * (x - y) + phase[2]);
      for (int c = 0; c < 3; ++c)
        img[c * plane + y * static_cast<std::size_t>(N) + x] =
            static_cast<float>(base[c] + wave);
    }

  // one road band
  {
    const bool horizontal = rng.uniform() < 0.5;
    const int width = rng.uniform_int(N / 10, N / 6);
    const int at = rng.uniform_int(0, N - width);
    const float shade = static_cast<float>(rng.uniform(0.26, 0.33));
    if (horizontal)
      detail::fill_rect(img, N, 0, at, N, at + width, shade, shade, shade);
    else
      detail::fill_rect(img, N, at, 0, at + width, N, shade, shade, shade);
  }

  // muted clutter blobs
  for (int k = 0; k < cfg.clutter_items; ++k) {
    const int s = rng.uniform_int(2, std::max(3, N / 18));
    const int x0 = rng.uniform_int(0, N - s);
    const int y0 = rng.uniform_int(0, N - s);
    const float g = static_cast<float>(rng.uniform(0.2, 0.55));
    const float tint = static_cast<float>(rng.uniform(-0.06, 0.06));
    detail::fill_rect(img, N, x0, y0, x0 + s, y0 + s, g + tint, g,
                      g - tint);
  }

  // vehicles
  LabeledImage out;
  const int n_objects = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  const int K = cfg.classes.size();
  for (int i = 0; i < n_objects; ++i) {
    int cls = 0;
    if (cfg.class_probs.empty()) {
      cls = rng.uniform_int(0, K - 1);
    } else {
      double u = rng.uniform(), acc = 0.0;
      for (int k = 0; k < K; ++k) {
        acc += cfg.class_probs[k];
        if (u < acc) {
          cls = k;
          break;
        }
        cls = k;
      }
    }
    const auto prior = detail::vehicle_prior(cfg.classes.names[cls]);
    const double scale = cfg.size_scale * N / 104.0;
    const double short_side =
        rng.uniform(prior.min_extent, prior.max_extent) * scale;
    const double aspect = rng.uniform(prior.min_aspect, prior.max_aspect);
    double w_px = short_side * aspect, h_px = short_side;
    if (rng.uniform() < 0.5) std::swap(w_px, h_px);

    // rejection sampling against existing boxes
    BoundingBox box;
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      const double cx = rng.uniform(w_px / 2 + 1, N - w_px / 2 - 1);
      const double cy = rng.uniform(h_px / 2 + 1, N - h_px / 2 - 1);
      box.class_id = cls;
      box.cx = static_cast<float>(cx / N);
      box.cy = static_cast<float>(cy / N);
      box.w = static_cast<float>(w_px / N);
      box.h = static_cast<float>(h_px / N);
      placed = true;
      for (const auto& other : out.boxes)
        if (iou(box, other) > 0.05) {
          placed = false;
          break;
        }
    }
    if (!placed) continue;

    const float jr = static_cast<float>(rng.uniform(-0.06, 0.06));
    const float jg = static_cast<float>(rng.uniform(-0.06, 0.06));
    const float jb = static_cast<float>(rng.uniform(-0.06, 0.06));
    const int x0 = static_cast<int>(std::lround(box.cx * N - w_px / 2));
    const int y0 = static_cast<int>(std::lround(box.cy * N - h_px / 2));
    const int x1 = x0 + static_cast<int>(std::lround(w_px));
    const int y1 = y0 + static_cast<int>(std::lround(h_px));
    // darker outline, saturated body, light cab stripe
    detail::fill_rect(img, N, x0, y0, x1, y1, (prior.r + jr) * 0.55f,
                      (prior.g + jg) * 0.55f, (prior.b + jb) * 0.55f);
    detail::fill_rect(img, N, x0 + 1, y0 + 1, x1 - 1, y1 - 1, prior.r + jr,
                      prior.g + jg, prior.b + jb);
    if (x1 - x0 >= y1 - y0) {
      const int cab = std::max(1, (x1 - x0) / 5);
      detail::fill_rect(img, N, x1 - 1 - cab, y0 + 1, x1 - 1, y1 - 1,
                        std::min(1.0f, prior.r + jr + 0.25f),
                        std::min(1.0f, prior.g + jg + 0.25f),
                        std::min(1.0f, prior.b + jb + 0.25f));
    } else {
      const int cab = std::max(1, (y1 - y0) / 5);
      detail::fill_rect(img, N, x0 + 1, y1 - 1 - cab, x1 - 1, y1 - 1,
                        std::min(1.0f, prior.r + jr + 0.25f),
                        std::min(1.0f, prior.g + jg + 0.25f),
                        std::min(1.0f, prior.b + jb + 0.25f));
    }
    out.boxes.push_back(box);
  }

  // speckle + clamp
  for (auto& v : img) {
    v += static_cast<float>(rng.uniform(-0.02, 0.02));
    v = std::min(1.0f, std::max(0.0f, v));
  }

  out.image = Tensor<float>(Shape{3, N, N}, std::move(img));
  out.source_id = "synth" + std::to_string(seed);
  return out;
}

// ---------------------------------------------------------------------------
// tiling
// ---------------------------------------------------------------------------

// Sliding-window crops with label clipping. Boxes survive a tile when at
// least 40% of their area does; edge windows are shifted inward so every
// tile is full-size. Undersized inputs produce one zero-padded tile with
// the padded flag set.
inline std::vector<LabeledImage> tile(const LabeledImage& src, int window = 416,
                                      int overlap = 0) {
  if (window <= 0) throw ParamError("tile: window must be positive");
  if (overlap < 0 || overlap >= window)
    throw ParamError("tile: overlap must be in [0, window)");
  const int H = src.image.dim(1), W = src.image.dim(2);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const auto& sv = src.image.values();

  if (H < window || W < window) {
    std::vector<float> out(static_cast<std::size_t>(3) * window * window, 0.0f);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          out[(static_cast<std::size_t>(c) * window + y) * window + x] =
              sv[c * plane + static_cast<std::size_t>(y) * W + x];
    LabeledImage t;
    t.image = Tensor<float>(Shape{3, window, window}, std::move(out));
    t.padded = true;
    t.source_id = src.source_id + "_tile0";
    for (const auto& b : src.boxes) {
      BoundingBox nb = b;
      nb.cx = static_cast<float>(b.cx * W / static_cast<double>(window));
      nb.cy = static_cast<float>(b.cy * H / static_cast<double>(window));
      nb.w = static_cast<float>(b.w * W / static_cast<double>(window));
      nb.h = static_cast<float>(b.h * H / static_cast<double>(window));
      t.boxes.push_back(nb);
    }
    return {std::move(t)};
  }

  const int stride = window - overlap;
  auto positions = [&](int extent) {
    std::vector<int> pos;
    for (int p = 0;; p += stride) {
      if (p + window >= extent) {
        pos.push_back(extent - window);  // final window shifted inward
        break;
      }
      pos.push_back(p);
    }
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    return pos;
  };

  std::vector<LabeledImage> tiles;
  int index = 0;
  for (int ty : positions(H)) {
    for (int tx : positions(W)) {
      LabeledImage t;
      std::vector<float> out(static_cast<std::size_t>(3) * window * window);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < window; ++y)
          for (int x = 0; x < window; ++x)
            out[(static_cast<std::size_t>(c) * window + y) * window + x] =
                sv[c * plane + static_cast<std::size_t>(ty + y) * W + tx + x];
      t.image = Tensor<float>(Shape{3, window, window}, std::move(out));
      t.source_id = src.source_id + "_tile" + std::to_string(index++);

      for (const auto& b : src.boxes) {
        // global pixel rect
        const double gx0 = (static_cast<double>(b.cx) - b.w / 2.0) * W;
        const double gx1 = (static_cast<double>(b.cx) + b.w / 2.0) * W;
        const double gy0 = (static_cast<double>(b.cy) - b.h / 2.0) * H;
        const double gy1 = (static_cast<double>(b.cy) + b.h / 2.0) * H;
        const double cx0 = std::max(gx0, static_cast<double>(tx));
        const double cx1 = std::min(gx1, static_cast<double>(tx + window));
        const double cy0 = std::max(gy0, static_cast<double>(ty));
        const double cy1 = std::min(gy1, static_cast<double>(ty + window));
        if (cx1 <= cx0 || cy1 <= cy0) continue;
        const double clipped = (cx1 - cx0) * (cy1 - cy0);
        const double full = (gx1 - gx0) * (gy1 - gy0);
        if (clipped < 0.4 * full) continue;
        BoundingBox nb = b;
        nb.cx = static_cast<float>(((cx0 + cx1) / 2 - tx) / window);
        nb.cy = static_cast<float>(((cy0 + cy1) / 2 - ty) / window);
        nb.w = static_cast<float>((cx1 - cx0) / window);
        nb.h = static_cast<float>((cy1 - cy0) / window);
        t.boxes.push_back(nb);
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

// ---------------------------------------------------------------------------
// class filtering
// ---------------------------------------------------------------------------

// Drops boxes whose class name is not in keep and remaps ids to keep's
// ordering. Images are always retained.
inline std::vector<LabeledImage> filter_classes(
    const std::vector<LabeledImage>& data, const ClassMap& original,
    const ClassMap& keep) {
  original.validate();
  keep.validate();
  std::vector<LabeledImage> out;
  out.reserve(data.size());
  for (const auto& li : data) {
    LabeledImage f;
    f.image = li.image;
    f.source_id = li.source_id;
    f.padded = li.padded;
    for (const auto& b : li.boxes) {
      if (b.class_id < 0 || b.class_id >= original.size())
        throw UsageError("filter_classes: class id " +
                         std::to_string(b.class_id) +
                         " outside the source class map");
      const int idx = keep.index_of(original.names[b.class_id]);
      if (idx < 0) continue;
      BoundingBox nb = b;
      nb.class_id = idx;
      f.boxes.push_back(nb);
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// patch-overlay dataset (patch-detector training data)
// ---------------------------------------------------------------------------

enum class PatchLabelMode { SingleClass, PerPatchClass };

// Overlays one randomly chosen patch per vehicle and emits the placement
// rectangles as the labels. Geometry is shared with apply_patches, so the
// patch detector trains on exactly what the camouflager renders.
inline std::vector<LabeledImage> overlay_patch_dataset(
    const std::vector<LabeledImage>& data, const std::vector<Patch>& patches,
    const ApplyConfig& cfg, PatchLabelMode label_mode) {
  if (patches.empty())
    throw UsageError("overlay_patch_dataset: patch list must not be empty");
  cfg.validate();
  std::vector<LabeledImage> out;
  out.reserve(data.size());
  for (std::size_t idx = 0; idx < data.size(); ++idx) {
    const auto& li = data[idx];
    const int size = li.image.dim(1);
    Rng chooser(seed_combine(cfg.seed, 0xC005E + idx));
    ApplyConfig icfg = cfg;
    icfg.seed = seed_combine(cfg.seed, idx);

    LabeledImage o;
    o.source_id = li.source_id + "_patched";
    Tensor<float> img = li.image;
    for (std::size_t bi = 0; bi < li.boxes.size(); ++bi) {
      const auto& box = li.boxes[bi];
      if (!(box.w > 0.0f && box.h > 0.0f)) continue;
      const int pidx = chooser.uniform_int(0, static_cast<int>(patches.size()) - 1);
      Placement pl = draw_placement(box, static_cast<int>(bi), icfg, size);
      img = composite_placement(img, patches[pidx].pixels, pl, icfg.alpha,
                                icfg.noise_amp);
      BoundingBox label;
      label.class_id =
          label_mode == PatchLabelMode::SingleClass ? 0 : pidx;
      label.cx = static_cast<float>((pl.x0 + pl.side * 0.5) / size);
      label.cy = static_cast<float>((pl.y0 + pl.side * 0.5) / size);
      label.w = static_cast<float>(static_cast<double>(pl.side) / size);
      label.h = label.w;
      o.boxes.push_back(label);
    }
    o.image = std::move(img);
    out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// statistics
// ---------------------------------------------------------------------------

struct DatasetStats {
  int images = 0;
  int labels = 0;
  std::vector<std::pair<std::string, int>> class_counts;
  double labels_per_image_median = 0.0;
  int labels_per_image_max = 0;
  double extent_median_px = 0.0;  // extent = sqrt(w_px * h_px)
  double extent_std_px = 0.0;
  bool medians_defined = false;
};

inline DatasetStats stats(const std::vector<LabeledImage>& data,
                          const ClassMap& classes) {
  DatasetStats s;
  s.images = static_cast<int>(data.size());
  for (const auto& name : classes.names) s.class_counts.emplace_back(name, 0);

  std::vector<int> per_image;
  std::vector<double> extents;
  for (const auto& li : data) {
    per_image.push_back(static_cast<int>(li.boxes.size()));
    const int W = li.image.defined() ? li.image.dim(2) : 0;
    const int H = li.image.defined() ? li.image.dim(1) : 0;
    for (const auto& b : li.boxes) {
      ++s.labels;
      if (b.class_id >= 0 && b.class_id < static_cast<int>(s.class_counts.size()))
        ++s.class_counts[b.class_id].second;
      extents.push_back(std::sqrt(static_cast<double>(b.w) * W *
                                  static_cast<double>(b.h) * H));
    }
  }
  auto median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  if (!per_image.empty()) {
    std::vector<double> pi(per_image.begin(), per_image.end());
    s.labels_per_image_median = median(pi);
    s.labels_per_image_max =
        *std::max_element(per_image.begin(), per_image.end());
  }
  if (!extents.empty()) {
    s.medians_defined = true;
    std::vector<double> ex = extents;
    s.extent_median_px = median(ex);
    double mean = 0.0;
    for (double e : extents) mean += e;
    mean /= extents.size();
    double var = 0.0;
    for (double e : extents) var += (e - mean) * (e - mean);
    s.extent_std_px = std::sqrt(var / extents.size());
  }
  return s;
}

// ---------------------------------------------------------------------------
// disk layout: images/<stem>.png + labels/<stem>.txt
// ---------------------------------------------------------------------------

inline void write_labels(const std::string& path,
                         const std::vector<BoundingBox>& boxes) {
  std::ofstream os(path);
  if (!os) throw IoError("write_labels: cannot open '" + path + "'");
  os.precision(9);
  for (const auto& b : boxes)
    os << b.class_id << ' ' << b.cx << ' ' << b.cy << ' ' << b.w << ' ' << b.h
       << '\n';
}

inline std::vector<BoundingBox> read_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("read_labels: cannot open '" + path + "'");
  std::vector<BoundingBox> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    BoundingBox b;
    if (!(ls >> b.class_id >> b.cx >> b.cy >> b.w >> b.h))
      throw ParseError("labels " + path + " line " + std::to_string(lineno) +
                       ": expected 'class_id cx cy w h'");
    boxes.push_back(b);
  }
  return boxes;
}

inline void save_dataset(const std::string& dir,
                         const std::vector<LabeledImage>& data) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "labels");
  for (std::size_t i = 0; i < data.size(); ++i) {
    char stem[16];
    std::snprintf(stem, sizeof stem, "%06zu", i);
    write_png((fs::path(dir) / "images" / (std::string(stem) + ".png")).string(),
              data[i].image);
    write_labels(
        (fs::path(dir) / "labels" / (std::string(stem) + ".txt")).string(),
        data[i].boxes);
  }
}

inline std::vector<LabeledImage> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path images = fs::path(dir) / "images";
  const fs::path labels = fs::path(dir) / "labels";
  if (!fs::is_directory(images) || !fs::is_directory(labels))
    throw IoError("load_dataset: '" + dir + "' needs images/ and labels/");
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(images))
    if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());
  std::vector<LabeledImage> out;
  for (const auto& stem : stems) {
    LabeledImage li;
    li.image = read_png((images / (stem + ".png")).string());
    li.boxes = read_labels((labels / (stem + ".txt")).string());
    li.source_id = stem;
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace camo
