#include "portmon/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "portmon/util.hpp"

namespace portmon::detection {

BerthingGate default_gate(double frame_w, double frame_h) {
  BerthingGate g;
  g.roi = BBox{0.1 * frame_w, 0.3 * frame_h, 0.9 * frame_w, frame_h};
  g.area_min_frac = 0.05;
  g.area_max_frac = 0.9;
  return g;
}

std::string scene_to_json(const AnnotationScene& scene) {
  std::string s = "{\"scene_id\":\"";
  s += util::json_escape(scene.scene_id);
  s += "\",\"width\":";
  s += util::fmt_fixed(scene.width, 3);
  s += ",\"height\":";
  s += util::fmt_fixed(scene.height, 3);
  s += ",\"boxes\":[";
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const BBox& b = scene.boxes[i];
    if (i) s += ',';
    s += "{\"label\":\"";
    s += util::json_escape(i < scene.labels.size() ? scene.labels[i] : "Ship");
    s += "\",\"x_min\":";
    s += util::fmt_fixed(b.x_min, 3);
    s += ",\"y_min\":";
    s += util::fmt_fixed(b.y_min, 3);
    s += ",\"x_max\":";
    s += util::fmt_fixed(b.x_max, 3);
    s += ",\"y_max\":";
    s += util::fmt_fixed(b.y_max, 3);
    s += '}';
  }
  s += "]}";
  return s;
}

AnnotationScene parse_scene(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("scene is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("scene_id") || !doc.contains("width") ||
      !doc.contains("height") || !doc.contains("boxes")) {
    throw std::invalid_argument("scene is missing required fields");
  }
  AnnotationScene scene;
  scene.scene_id = doc.at("scene_id").get<std::string>();
  scene.width = doc.at("width").get<double>();
  scene.height = doc.at("height").get<double>();
  if (scene.width <= 0.0 || scene.height <= 0.0) {
    throw std::invalid_argument("scene frame must be positive");
  }
  for (const nlohmann::json& b : doc.at("boxes")) {
    BBox box;
    box.x_min = b.at("x_min").get<double>();
    box.y_min = b.at("y_min").get<double>();
    box.x_max = b.at("x_max").get<double>();
    box.y_max = b.at("y_max").get<double>();
    if (!box.valid()) throw std::invalid_argument("scene box is not a valid box");
    scene.boxes.push_back(box);
    scene.labels.push_back(b.contains("label") ? b.at("label").get<std::string>() : "Ship");
  }
  return scene;
}

DetectorNoiseConfig parse_noise_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("noise config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("noise config must be an object");
  DetectorNoiseConfig cfg;
  for (const auto& item : doc.items()) {
    const std::string& k = item.key();
    if (k == "seed") cfg.seed = item.value().get<std::uint64_t>();
    else if (k == "miss_rate") cfg.miss_rate = item.value().get<double>();
    else if (k == "jitter_px") cfg.jitter_px = item.value().get<double>();
    else if (k == "score_lo") cfg.score_lo = item.value().get<double>();
    else if (k == "score_hi") cfg.score_hi = item.value().get<double>();
    else if (k == "fp_rate") cfg.fp_rate = item.value().get<double>();
    else if (k == "fp_score_lo") cfg.fp_score_lo = item.value().get<double>();
    else if (k == "fp_score_hi") cfg.fp_score_hi = item.value().get<double>();
    else if (k == "latency_s") cfg.latency_s = item.value().get<double>();
    else throw std::invalid_argument("noise config: unknown key '" + k + "'");
  }
  if (cfg.miss_rate < 0.0 || cfg.miss_rate >= 1.0 || cfg.jitter_px < 0.0 || cfg.fp_rate < 0.0 ||
      cfg.score_lo > cfg.score_hi || cfg.fp_score_lo > cfg.fp_score_hi || cfg.latency_s < 0.0) {
    throw std::invalid_argument("noise config: value out of range");
  }
  return cfg;
}

DetectorNoiseConfig load_noise_config(const std::string& path) {
  return parse_noise_config(util::read_text_file(path));
}

std::vector<AnnotationScene> load_dataset(const std::string& dir) {
  const std::string index_text = util::read_text_file(dir + "/index.json");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(index_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("dataset index is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("scenes")) {
    throw std::invalid_argument("dataset index must contain a 'scenes' list");
  }
  std::vector<AnnotationScene> scenes;
  for (const nlohmann::json& name : doc.at("scenes")) {
    scenes.push_back(parse_scene(util::read_text_file(dir + "/" + name.get<std::string>())));
  }
  if (scenes.empty()) throw std::invalid_argument("dataset has no scenes");
  return scenes;
}

void BerthingGate::validate() const {
  if (!roi.valid()) throw std::invalid_argument("gate roi is not a valid box");
  if (!(area_min_frac >= 0.0 && area_min_frac < area_max_frac && area_max_frac <= 1.0)) {
    throw std::invalid_argument("gate area fractions must satisfy 0 <= min < max <= 1");
  }
}

double iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("iou requires valid boxes");
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter <= 0.0 ? 0.0 : inter / uni;
}

namespace {

double clamp(double v, double lo, double hi) { return std::max(lo, std::min(hi, v)); }

BBox jitter_box(const BBox& gt, double stddev, double w, double h, util::SeqRng& rng) {
  // Jitter each corner independently, then repair any collapse so the
  // result is always a valid in-frame box.
  BBox out;
  out.x_min = clamp(gt.x_min + rng.gauss(0.0, stddev), 0.0, w);
  out.y_min = clamp(gt.y_min + rng.gauss(0.0, stddev), 0.0, h);
  out.x_max = clamp(gt.x_max + rng.gauss(0.0, stddev), 0.0, w);
  out.y_max = clamp(gt.y_max + rng.gauss(0.0, stddev), 0.0, h);
  if (out.x_max - out.x_min < 1.0) {
    const double cx = 0.5 * (out.x_min + out.x_max);
    out.x_min = clamp(cx - 0.5, 0.0, w - 1.0);
    out.x_max = out.x_min + 1.0;
  }
  if (out.y_max - out.y_min < 1.0) {
    const double cy = 0.5 * (out.y_min + out.y_max);
    out.y_min = clamp(cy - 0.5, 0.0, h - 1.0);
    out.y_max = out.y_min + 1.0;
  }
  return out;
}

}  // namespace

std::vector<Detection> detect(const AnnotationScene& scene, const DetectorNoiseConfig& noise) {
  // Key the stream off (seed, scene_id) so results do not depend on the
  // order scenes are evaluated in.
  util::SeqRng rng(util::mix_key(noise.seed, util::fnv1a(scene.scene_id)));
  std::vector<Detection> out;

  for (const BBox& gt : scene.boxes) {
    const bool missed = rng.uniform() < noise.miss_rate;
    if (missed) continue;
    Detection d;
    d.bbox = noise.jitter_px > 0.0 ? jitter_box(gt, noise.jitter_px, scene.width, scene.height, rng)
                                   : gt;
    d.score = noise.score_lo + (noise.score_hi - noise.score_lo) * rng.uniform();
    out.push_back(d);
  }

  const int n_fp = rng.poisson(noise.fp_rate);
  for (int i = 0; i < n_fp; ++i) {
    // Clutter: small boxes anywhere in frame, scored from the low range.
    const double bw = 8.0 + rng.uniform() * 0.08 * scene.width;
    const double bh = 8.0 + rng.uniform() * 0.08 * scene.height;
    const double x0 = rng.uniform() * (scene.width - bw);
    const double y0 = rng.uniform() * (scene.height - bh);
    Detection d;
    d.bbox = BBox{x0, y0, x0 + bw, y0 + bh};
    d.score = noise.fp_score_lo + (noise.fp_score_hi - noise.fp_score_lo) * rng.uniform();
    out.push_back(d);
  }
  return out;
}

BerthingVerdict classify_berthing(const std::vector<Detection>& detections,
                                  const BerthingGate& gate, double frame_w, double frame_h) {
  gate.validate();
  if (frame_w <= 0.0 || frame_h <= 0.0) throw std::invalid_argument("frame must be positive");
  const double frame_area = frame_w * frame_h;

  BerthingVerdict verdict;
  for (const Detection& d : detections) {
    if (!d.bbox.valid()) continue;
    if (!gate.roi.contains(d.bbox.cx(), d.bbox.cy())) continue;
    const double frac = d.bbox.area() / frame_area;
    if (frac < gate.area_min_frac || frac > gate.area_max_frac) continue;
    if (!verdict.berthing) {
      verdict.berthing = true;
      verdict.chosen = d;
      continue;
    }
    const Detection& cur = *verdict.chosen;
    if (d.score > cur.score ||
        (d.score == cur.score && d.bbox.area() > cur.bbox.area()) ||
        (d.score == cur.score && d.bbox.area() == cur.bbox.area() &&
         d.bbox.x_min < cur.bbox.x_min)) {
      verdict.chosen = d;
    }
  }
  return verdict;
}

ApResult average_precision(const std::vector<SceneResult>& scenes, double iou_threshold) {
  ApResult result;
  for (const SceneResult& s : scenes) result.ground_truth_count += s.ground_truth.size();
  if (result.ground_truth_count == 0) {
    throw std::invalid_argument("average precision is undefined without ground truth");
  }

  struct Entry {
    double score;
    std::size_t scene_idx;
    std::size_t det_idx;
  };
  std::vector<Entry> entries;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    for (std::size_t di = 0; di < scenes[si].detections.size(); ++di) {
      entries.push_back({scenes[si].detections[di].score, si, di});
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (scenes[a.scene_idx].scene_id != scenes[b.scene_idx].scene_id) {
      return scenes[a.scene_idx].scene_id < scenes[b.scene_idx].scene_id;
    }
    return a.det_idx < b.det_idx;
  });

  std::vector<std::vector<bool>> gt_used(scenes.size());
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    gt_used[si].assign(scenes[si].ground_truth.size(), false);
  }

  const std::size_t total_gt = result.ground_truth_count;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::vector<double> precisions;
  std::vector<double> recalls;
  for (const Entry& e : entries) {
    const SceneResult& scene = scenes[e.scene_idx];
    const Detection& det = scene.detections[e.det_idx];
    double best_iou = 0.0;
    std::size_t best_gt = scene.ground_truth.size();
    for (std::size_t gi = 0; gi < scene.ground_truth.size(); ++gi) {
      if (gt_used[e.scene_idx][gi]) continue;
      const double v = iou(det.bbox, scene.ground_truth[gi]);
      if (v > best_iou) {
        best_iou = v;
        best_gt = gi;
      }
    }
    if (best_gt < scene.ground_truth.size() && best_iou >= iou_threshold) {
      gt_used[e.scene_idx][best_gt] = true;
      ++tp;
    } else {
      ++fp;
    }
    const double precision = double(tp) / double(tp + fp);
    const double recall = double(tp) / double(total_gt);
    precisions.push_back(precision);
    recalls.push_back(recall);
    result.curve.push_back({det.score, precision, recall});
  }
  result.true_positives = tp;
  result.false_positives = fp;

  // Area under the monotone precision envelope, swept over all PR points.
  for (std::size_t i = precisions.size(); i-- > 1;) {
    precisions[i - 1] = std::max(precisions[i - 1], precisions[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precisions.size(); ++i) {
    ap += (recalls[i] - prev_recall) * precisions[i];
    prev_recall = recalls[i];
  }
  result.ap = ap;
  return result;
}

EarlyStopState::EarlyStopState(int patience, int max_epochs)
    : patience_(patience), max_epochs_(max_epochs),
      best_ap_(-std::numeric_limits<double>::infinity()) {
  if (patience <= 0 || max_epochs <= 0) {
    throw std::invalid_argument("patience and max_epochs must be positive");
  }
}

StepResult EarlyStopState::step(int epoch, double val_ap) {
  if (stopped_) throw std::logic_error("step after stop");
  if (epoch != last_epoch_ + 1) throw std::invalid_argument("epochs must arrive in order from 1");
  last_epoch_ = epoch;

  StepResult r;
  if (val_ap > best_ap_) {
    best_ap_ = val_ap;
    best_epoch_ = epoch;
    epochs_since_best_ = 0;
    r.kind = StepKind::Checkpoint;
    r.epoch = epoch;
  } else {
    ++epochs_since_best_;
    r.kind = StepKind::Continue;
    r.epoch = epoch;
  }
  if (epochs_since_best_ >= patience_ || epoch >= max_epochs_) {
    stopped_ = true;
    r.kind = StepKind::Stop;
    r.epoch = best_epoch_;
  }
  return r;
}

}  // namespace portmon::detection
