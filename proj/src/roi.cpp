#include "pfoa/roi.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "pfoa/csv.hpp"
#include "pfoa/error.hpp"
#include "pfoa/nn/train.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::roi {

std::optional<RoiDetection> select_roi(std::span<const RoiDetection> detections, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("ROI threshold must lie in (0, 1]");
  std::optional<RoiDetection> best;
  for (const auto& d : detections) {
    if (d.confidence >= threshold && (!best || d.confidence > best->confidence)) best = d;
  }
  return best;
}

std::vector<RoiDetection> non_max_suppression(std::vector<RoiDetection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const RoiDetection& a, const RoiDetection& b) { return a.confidence > b.confidence; });
  std::vector<RoiDetection> kept;
  for (const auto& d : detections) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                        [&](const RoiDetection& k) { return iou(k.box, d.box) >= iou_threshold; });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

nn::Architecture default_scorer_architecture() {
  nn::Architecture a;
  a.input_h = 32;
  a.input_w = 16;
  a.widths = {4, 8};
  a.fc_hidden = 16;
  a.dropout = 0.0;
  return a;
}

std::vector<int> window_origins(int extent, int window, int stride) {
  std::vector<int> out;
  for (int o = 0; o + window <= extent; o += stride) out.push_back(o);
  if (!out.empty() && out.back() + window < extent) out.push_back(extent - window);
  return out;
}

namespace {

std::vector<double> window_pixels(const imaging::Image& img, const RoiBox& window, const nn::Architecture& arch) {
  imaging::Raster region{window.w, window.h, std::vector<double>(static_cast<std::size_t>(window.w) * window.h)};
  for (int y = 0; y < window.h; ++y) {
    for (int x = 0; x < window.w; ++x) {
      region.values[static_cast<std::size_t>(y) * window.w + x] = img.at(window.x + x, window.y + y);
    }
  }
  auto resized = imaging::resize_bicubic(region, arch.input_w, arch.input_h);
  for (auto& v : resized.values) v = std::clamp(v, 0.0, 255.0) / 255.0;
  return std::move(resized.values);
}

void check_detector_input(const imaging::Image& img, const DetectorConfig& cfg) {
  if (img.depth != imaging::BitDepth::U8) throw ValidationError("detector expects a preprocessed 8-bit image");
  if (img.width < cfg.window_w || img.height < cfg.window_h) {
    throw ValidationError("image is smaller than the detector window");
  }
}

}  // namespace

double score_window(const PatchScorer& scorer, const imaging::Image& img, const RoiBox& window) {
  return nn::predict_proba(scorer.model, window_pixels(img, window, scorer.model.arch));
}

std::vector<RoiDetection> detect_standin(const imaging::Image& img, const PatchScorer& scorer) {
  const auto& cfg = scorer.config;
  check_detector_input(img, cfg);
  const auto xs = window_origins(img.width, cfg.window_w, cfg.stride_x);
  const auto ys = window_origins(img.height, cfg.window_h, cfg.stride_y);
  const auto& arch = scorer.model.arch;
  nn::Tensor batch(static_cast<int>(xs.size() * ys.size()), 1, arch.input_h, arch.input_w);
  std::vector<RoiBox> windows;
  windows.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) {
      const RoiBox w{x, y, cfg.window_w, cfg.window_h};
      const auto px = window_pixels(img, w, arch);
      std::copy(px.begin(), px.end(), batch.data.begin() + static_cast<std::ptrdiff_t>(windows.size() * px.size()));
      windows.push_back(w);
    }
  }
  const auto probs = nn::predict_proba(scorer.model, batch);
  std::vector<RoiDetection> scored;
  scored.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) scored.push_back({windows[i], probs[i]});
  auto kept = non_max_suppression(std::move(scored), cfg.nms_iou);
  if (cfg.refine_step_x < 1 || cfg.refine_step_y < 1) return kept;

  const int max_x = img.width - cfg.window_w;
  const int max_y = img.height - cfg.window_h;
  const auto top = std::min(kept.size(), static_cast<std::size_t>(std::max(0, cfg.refine_top)));
  for (std::size_t k = 0; k < top; ++k) {
    auto& d = kept[k];
    std::vector<RoiBox> local;
    for (int dy = -cfg.stride_y / 2; dy <= cfg.stride_y / 2; dy += cfg.refine_step_y) {
      for (int dx = -cfg.stride_x / 2; dx <= cfg.stride_x / 2; dx += cfg.refine_step_x) {
        const RoiBox w{std::clamp(d.box.x + dx, 0, max_x), std::clamp(d.box.y + dy, 0, max_y), cfg.window_w,
                       cfg.window_h};
        if (w != d.box) local.push_back(w);
      }
    }
    nn::Tensor lb(static_cast<int>(local.size()), 1, arch.input_h, arch.input_w);
    for (std::size_t i = 0; i < local.size(); ++i) {
      const auto px = window_pixels(img, local[i], arch);
      std::copy(px.begin(), px.end(), lb.data.begin() + static_cast<std::ptrdiff_t>(i * px.size()));
    }
    const auto lp = local.empty() ? std::vector<double>{} : nn::predict_proba(scorer.model, lb);
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (lp[i] > d.confidence) d = {local[i], lp[i]};
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const RoiDetection& a, const RoiDetection& b) { return a.confidence > b.confidence; });
  return kept;
}

PatchScorer train_scorer(std::span<const imaging::Image> images, std::span<const RoiBox> boxes,
                         const DetectorConfig& config, const ScorerTrainingOptions& options) {
  if (images.size() != boxes.size()) throw ValidationError("train_scorer: one box per image required");
  if (images.empty()) throw ValidationError("train_scorer: no annotated images");
  const auto arch = default_scorer_architecture();
  std::vector<nn::Sample> samples;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    check_detector_input(img, config);
    auto rng = make_stream(options.seed, 0x31, i);
    const auto& box = boxes[i];
    const int cx = box.x + box.w / 2 - config.window_w / 2;
    const int cy = box.y + box.h / 2 - config.window_h / 2;
    const int max_x = img.width - config.window_w;
    const int max_y = img.height - config.window_h;
    const bool refine = config.refine_step_x >= 1 && config.refine_step_y >= 1;
    const int span_x = refine ? config.refine_step_x : config.stride_x;
    const int span_y = refine ? config.refine_step_y : config.stride_y;
    for (int p = 0; p < options.positives_per_image; ++p) {
      const int jx = static_cast<int>(uniform_index(rng, span_x + 1)) - span_x / 2;
      const int jy = static_cast<int>(uniform_index(rng, span_y + 1)) - span_y / 2;
      const RoiBox w{std::clamp(cx + jx, 0, max_x), std::clamp(cy + jy, 0, max_y), config.window_w, config.window_h};
      samples.push_back({window_pixels(img, w, arch), 1});
    }
    int negatives = 0;
    for (int attempt = 0; negatives < options.negatives_per_image && attempt < 50 * options.negatives_per_image;
         ++attempt) {
      const RoiBox w{static_cast<int>(uniform_index(rng, max_x + 1)), static_cast<int>(uniform_index(rng, max_y + 1)),
                     config.window_w, config.window_h};
      if (iou(w, box) >= 0.3) continue;
      samples.push_back({window_pixels(img, w, arch), 0});
      ++negatives;
    }
  }
  nn::TrainConfig cfg;
  cfg.epochs = options.epochs;
  cfg.lr0 = options.lr0;
  cfg.lr_step = std::max(1, options.epochs);
  cfg.seed = options.seed;
  return PatchScorer{nn::train(samples, arch, cfg).model, config};
}

// ---------------------------------------------------------------------------
// Annotation and detection files

namespace {

constexpr std::string_view kAnnotationHeader = "subject_id,side,visit,x,y,w,h";
constexpr std::string_view kDetectionHeader = "subject_id,side,visit,x,y,w,h,confidence,best_confidence";

int parse_int_cell(std::string_view s, std::size_t line, std::string_view column) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("row " + std::to_string(line) + ", column " + std::string(column) + ": not an integer");
  }
  return v;
}

data::RecordKey parse_key(const std::vector<std::string_view>& cells, std::size_t line) {
  try {
    if (cells[0].empty()) throw ParseError("empty subject_id");
    return {std::string(cells[0]), data::parse_side(cells[1]), data::parse_visit(cells[2])};
  } catch (const Error& e) {
    throw ParseError("row " + std::to_string(line) + ": " + e.what());
  }
}

RoiBox parse_box(const std::vector<std::string_view>& cells, std::size_t line) {
  return {parse_int_cell(cells[3], line, "x"), parse_int_cell(cells[4], line, "y"), parse_int_cell(cells[5], line, "w"),
          parse_int_cell(cells[6], line, "h")};
}

std::string key_prefix(const data::RecordKey& k) {
  std::string s = k.subject_id;
  s += ',';
  s += data::to_string(k.side);
  s += ',';
  s += data::to_string(k.visit);
  return s;
}

}  // namespace

AnnotationMap parse_annotations(std::string_view text) {
  AnnotationMap out;
  const auto rows = csv::lines(text);
  if (rows.empty()) return out;
  if (rows.front().second != kAnnotationHeader) throw ParseError("annotation header does not match schema");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto [line, content] = rows[i];
    const auto cells = csv::split(content);
    if (cells.size() != 7) throw ParseError("row " + std::to_string(line) + ": expected 7 columns");
    const auto key = parse_key(cells, line);
    const RoiBox box = parse_box(cells, line);
    if (box.w < 1 || box.h < 1) throw ParseError("row " + std::to_string(line) + ": box size must be >= 1");
    if (!out.emplace(key, RoiDetection{box, 1.0}).second) {
      throw ValidationError("row " + std::to_string(line) + ": duplicate annotation for " + key.str());
    }
  }
  return out;
}

AnnotationMap load_annotations(const std::filesystem::path& path) { return parse_annotations(csv::read_file(path)); }

std::string format_annotations(const AnnotationMap& annotations) {
  std::ostringstream os;
  os << kAnnotationHeader << '\n';
  for (const auto& [key, det] : annotations) {
    os << key_prefix(key) << ',' << det.box.x << ',' << det.box.y << ',' << det.box.w << ',' << det.box.h << '\n';
  }
  return os.str();
}

void save_annotations(const AnnotationMap& annotations, const std::filesystem::path& path) {
  csv::write_file(path, format_annotations(annotations));
}

void save_detections(std::span<const DetectionRow> rows, const std::filesystem::path& path) {
  std::ostringstream os;
  os << kDetectionHeader << '\n';
  for (const auto& r : rows) {
    os << key_prefix(r.key) << ',';
    if (r.selected) {
      const auto& b = r.selected->box;
      os << b.x << ',' << b.y << ',' << b.w << ',' << b.h << ',' << data::format_double(r.selected->confidence);
    } else {
      os << ",,,,";
    }
    os << ',' << data::format_double(r.best_confidence) << '\n';
  }
  csv::write_file(path, os.str());
}

std::vector<DetectionRow> load_detections(const std::filesystem::path& path) {
  const auto text = csv::read_file(path);
  const auto rows = csv::lines(text);
  if (rows.empty() || rows.front().second != kDetectionHeader) {
    throw ParseError(path.string() + ": detection header does not match schema");
  }
  std::vector<DetectionRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto [line, content] = rows[i];
    const auto cells = csv::split(content);
    if (cells.size() != 9) throw ParseError("row " + std::to_string(line) + ": expected 9 columns");
    DetectionRow r;
    r.key = parse_key(cells, line);
    if (!cells[3].empty()) r.selected = RoiDetection{parse_box(cells, line), data::parse_double(cells[7])};
    r.best_confidence = data::parse_double(cells[8]);
    out.push_back(std::move(r));
  }
  return out;
}

std::map<data::RecordKey, std::optional<RoiDetection>> to_roi_results(std::span<const DetectionRow> rows) {
  std::map<data::RecordKey, std::optional<RoiDetection>> out;
  for (const auto& r : rows) out[r.key] = r.selected;
  return out;
}

}  // namespace pfoa::roi
