#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace portmon::detection {

struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x_min + x_max); }
  double cy() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

struct Detection {
  BBox bbox;
  double score = 0.0;
  std::string label = "Ship";
};

struct BerthingGate {
  BBox roi;
  double area_min_frac = 0.05;
  double area_max_frac = 0.9;

  void validate() const;  // throws std::invalid_argument
};

struct AnnotationScene {
  std::string scene_id;
  double width = 1024.0;
  double height = 1024.0;
  std::vector<BBox> boxes;
  std::vector<std::string> labels;
};

// Synthetic stand-in for a trained ship detector: perturbs ground truth,
// drops boxes, adds clutter. Deterministic for a fixed (seed, scene_id).
struct DetectorNoiseConfig {
  std::uint64_t seed = 1;
  double miss_rate = 0.0;          // chance a GT box produces no detection
  double jitter_px = 0.0;          // corner jitter stddev, pixels
  double score_lo = 1.0;           // true-detection score range
  double score_hi = 1.0;
  double fp_rate = 0.0;            // mean false positives per scene
  double fp_score_lo = 0.0;        // clutter score range
  double fp_score_hi = 0.0;
  double latency_s = 0.2;          // simulated per-image inference time
};

// Gate defaults: centroid within the central 80% of the width and the lower
// 70% of the height; area between 5% and 90% of the frame.
BerthingGate default_gate(double frame_w, double frame_h);

// Reads a noise config from a JSON object; unknown keys are rejected.
DetectorNoiseConfig parse_noise_config(const std::string& json_text);
DetectorNoiseConfig load_noise_config(const std::string& path);

// A dataset directory holds index.json ({"scenes": ["a.json", ...]}) whose
// entries are annotation-scene files relative to the directory.
std::vector<AnnotationScene> load_dataset(const std::string& dir);

std::string scene_to_json(const AnnotationScene& scene);
AnnotationScene parse_scene(const std::string& json_text);  // throws std::invalid_argument

double iou(const BBox& a, const BBox& b);  // throws on invalid boxes

std::vector<Detection> detect(const AnnotationScene& scene, const DetectorNoiseConfig& noise);

struct BerthingVerdict {
  bool berthing = false;
  std::optional<Detection> chosen;
};

BerthingVerdict classify_berthing(const std::vector<Detection>& detections,
                                  const BerthingGate& gate, double frame_w, double frame_h);

// One scene's worth of input for the PR-curve evaluation.
struct SceneResult {
  std::string scene_id;
  std::vector<Detection> detections;
  std::vector<BBox> ground_truth;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ApResult {
  double ap = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t ground_truth_count = 0;
  std::vector<PrPoint> curve;  // one point per detection, descending score
};

// Throws std::invalid_argument when the scene set has no ground truth.
ApResult average_precision(const std::vector<SceneResult>& scenes, double iou_threshold = 0.5);

enum class StepKind { Continue, Checkpoint, Stop };

struct StepResult {
  StepKind kind = StepKind::Continue;
  int epoch = 0;  // checkpointed epoch, or best epoch on stop
};

class EarlyStopState {
 public:
  EarlyStopState(int patience = 50, int max_epochs = 500);

  // Epochs must arrive in order starting at 1; out-of-order throws.
  StepResult step(int epoch, double val_ap);

  double best_ap() const { return best_ap_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_since_best() const { return epochs_since_best_; }
  bool stopped() const { return stopped_; }

 private:
  int patience_;
  int max_epochs_;
  double best_ap_;
  int best_epoch_ = 0;
  int epochs_since_best_ = 0;
  int last_epoch_ = 0;
  bool stopped_ = false;
};

}  // namespace portmon::detection
