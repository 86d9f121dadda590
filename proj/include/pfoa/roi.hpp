#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pfoa/box.hpp"
#include "pfoa/datamodel.hpp"
#include "pfoa/imaging.hpp"
#include "pfoa/nn/cnn.hpp"

namespace pfoa::roi {

inline constexpr double kDefaultGateThreshold = 0.90;

// Highest-confidence detection at or above threshold; the first one wins a
// tie. threshold must lie in (0, 1].
std::optional<RoiDetection> select_roi(std::span<const RoiDetection> detections,
                                       double threshold = kDefaultGateThreshold);

// Greedy non-maximum suppression: visit by descending confidence (stable),
// drop any box whose IoU with an already kept box reaches iou_threshold.
std::vector<RoiDetection> non_max_suppression(std::vector<RoiDetection> detections, double iou_threshold);

struct DetectorConfig {
  int window_h = 64;  // pixels at 0.2 mm
  int window_w = 32;
  int stride_y = 16;  // a quarter of the window
  int stride_x = 8;
  double nms_iou = 0.3;
  // Local refinement of the strongest NMS survivors: a grid with these steps
  // covering half a stride either side. Step 0 disables it.
  int refine_step_y = 4;
  int refine_step_x = 2;
  int refine_top = 3;
};

// Patch classifier: windows are resized to the model input and scored with
// its class-1 ("patella") probability.
struct PatchScorer {
  nn::CnnModel model;
  DetectorConfig config;
};

nn::Architecture default_scorer_architecture();

// Window origins along one axis: 0, stride, 2*stride, ... plus a final
// window flush with the far edge when the grid does not reach it.
std::vector<int> window_origins(int extent, int window, int stride);

// Scores one window of an 8-bit image.
double score_window(const PatchScorer& scorer, const imaging::Image& img, const RoiBox& window);

// Slides the window over the grid, scores each position and applies NMS,
// then moves each of the refine_top best survivors to the highest-scoring
// position of its local refinement grid (never lowering its confidence).
// Throws ValidationError if the image is smaller than the window or not
// 8-bit.
std::vector<RoiDetection> detect_standin(const imaging::Image& img, const PatchScorer& scorer);

struct ScorerTrainingOptions {
  int positives_per_image = 6;
  int negatives_per_image = 12;
  int epochs = 12;
  double lr0 = 0.01;
  std::uint64_t seed = 0;
};

// Trains the patch classifier from images with known patella boxes.
// Positives are jittered by up to half a refinement step around the box (half
// a stride when refinement is off); negatives have IoU < 0.3 with it.
PatchScorer train_scorer(std::span<const imaging::Image> images, std::span<const RoiBox> boxes,
                         const DetectorConfig& config, const ScorerTrainingOptions& options);

// Manual annotations: CSV "subject_id,side,visit,x,y,w,h". Each box is
// loaded with confidence 1.0 so it always passes the gate. Box/image bounds
// are not checked here; crop_resize rejects boxes outside the image.
using AnnotationMap = std::map<data::RecordKey, RoiDetection>;
AnnotationMap load_annotations(const std::filesystem::path& path);
AnnotationMap parse_annotations(std::string_view text);
void save_annotations(const AnnotationMap& annotations, const std::filesystem::path& path);
std::string format_annotations(const AnnotationMap& annotations);

// Per-record detector output: the gated detection (if any) plus the best raw
// confidence seen, for gate-miss reporting.
struct DetectionRow {
  data::RecordKey key;
  std::optional<RoiDetection> selected;
  double best_confidence = 0.0;
};

// CSV "subject_id,side,visit,x,y,w,h,confidence,best_confidence"; x..confidence
// are empty when the gate rejected every detection.
void save_detections(std::span<const DetectionRow> rows, const std::filesystem::path& path);
std::vector<DetectionRow> load_detections(const std::filesystem::path& path);

std::map<data::RecordKey, std::optional<RoiDetection>> to_roi_results(std::span<const DetectionRow> rows);

}  // namespace pfoa::roi
