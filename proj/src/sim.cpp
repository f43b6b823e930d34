#include "portmon/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace portmon::sim {

namespace {

using nlohmann::json;

constexpr double kDegToRad = util::kPi / 180.0;
constexpr double kImpactOnsetSin = 0.0;  // impact sinusoid starts at zero crossing
constexpr double kImpactWindowDecays = 10.0;
constexpr double kBerthCentroidYFrac = 0.65;
constexpr double kPassCentroidYFrac = 0.15;

void require_known_keys(const json& obj, std::initializer_list<const char*> allowed,
                        const std::string& context) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw std::invalid_argument("unknown key '" + item.key() + "' in " + context);
  }
}

dsp::FirDecimator make_chain() {
  return dsp::FirDecimator(dsp::design_kaiser_fir(128, 110.0, 1000.0), 10);
}

// Post-chain RMSE of unit-variance input noise; scales sigma to the target.
double unit_noise_rmse_through_chain() {
  dsp::FirDecimator chain = make_chain();
  util::RandomStream cal(util::splitmix64(0x6e6f6973652d6361ULL));
  std::vector<double> out;
  for (std::int64_t i = 0; i < 10000; ++i) {
    dsp::AccelFrame f{double(i) * 1e-3, cal.gauss(std::uint64_t(i)), 0.0, 0.0};
    if (auto o = chain.push(f)) out.push_back(o->ax);
  }
  out.erase(out.begin(), out.begin() + kWarmupRows);
  return dsp::noise_rmse(out).rmse;
}

double unit_impact_value(double dt, double freq_hz, double decay_s) {
  return std::exp(-dt / decay_s) * std::sin(2.0 * util::kPi * freq_hz * dt + kImpactOnsetSin);
}

// Post-chain peak of a unit-amplitude impact; scales amplitudes to targets.
double unit_impact_peak_through_chain(double freq_hz, double decay_s) {
  dsp::FirDecimator chain = make_chain();
  const double t_off = 0.2;
  const double horizon = t_off + kImpactWindowDecays * decay_s;
  const std::int64_t n = std::int64_t(horizon * 1000.0);
  double peak = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double t = double(i) * 1e-3;
    const double v = t >= t_off ? unit_impact_value(t - t_off, freq_hz, decay_s) : 0.0;
    if (auto o = chain.push({t, v, 0.0, 0.0})) peak = std::max(peak, std::abs(o->ax));
  }
  if (peak <= 0.0) throw std::logic_error("impact calibration produced no signal");
  return peak;
}

double get_num(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
  return obj.at(key).get<double>();
}

double clampd(double v, double lo, double hi) { return std::max(lo, std::min(hi, v)); }

}  // namespace

void ShipEvent::validate() const {
  if (speed_mps <= 0.0) throw std::invalid_argument("ship speed must be positive");
  if (berth_m <= 0.0) throw std::invalid_argument("berth distance must be positive");
  if (start_m <= berth_m) throw std::invalid_argument("start distance must exceed berth distance");
  if (start_m > kMaxRangeM) throw std::invalid_argument("start distance is beyond rangefinder range");
  if (!(appear_t < impact_t && impact_t < departs_t)) {
    throw std::invalid_argument("ship times must satisfy appear < impact < departs");
  }
  if (arrival_t() > departs_t) {
    throw std::invalid_argument("ship must reach its closest distance before departing");
  }
  if (impact_freq_hz <= 0.0 || impact_decay_s <= 0.0) {
    throw std::invalid_argument("impact frequency and decay must be positive");
  }
  for (double a : impact_amp_mg) {
    if (a < 0.0) throw std::invalid_argument("impact amplitude must be non-negative");
  }
}

void Scenario::validate() const {
  if (duration_s <= 0.0) throw std::invalid_argument("duration_s must be positive");
  if (noise_rmse_target_mg <= 0.0) throw std::invalid_argument("noise target must be positive");
  if (temperature.period_s <= 0.0) throw std::invalid_argument("temperature period must be positive");
  if (temperature.amplitude_c < 0.0) throw std::invalid_argument("temperature amplitude must be non-negative");
  if (tilt_drift.pitch_coeff_deg_per_c < 0.0 || tilt_drift.roll_coeff_deg_per_c < 0.0) {
    throw std::invalid_argument("drift coefficients are magnitudes and must be non-negative");
  }
  trigger.validate();
  for (const ShipEvent& s : ships) s.validate();
}

Scenario parse_scenario(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("scenario must be a JSON object");
  require_known_keys(doc, {"name", "duration_s", "noise_rmse_target_mg", "seed", "temperature",
                           "tilt_drift", "ships", "trigger"},
                     "scenario");
  if (!doc.contains("duration_s")) throw std::invalid_argument("scenario requires duration_s");

  Scenario sc;
  if (doc.contains("name")) sc.name = doc.at("name").get<std::string>();
  sc.duration_s = get_num(doc, "duration_s", 0.0);
  sc.noise_rmse_target_mg = get_num(doc, "noise_rmse_target_mg", sc.noise_rmse_target_mg);
  if (doc.contains("seed")) sc.seed = doc.at("seed").get<std::uint64_t>();

  if (doc.contains("temperature")) {
    const json& t = doc.at("temperature");
    require_known_keys(t, {"mean_c", "amplitude_c", "period_s"}, "temperature");
    sc.temperature.mean_c = get_num(t, "mean_c", sc.temperature.mean_c);
    sc.temperature.amplitude_c = get_num(t, "amplitude_c", sc.temperature.amplitude_c);
    sc.temperature.period_s = get_num(t, "period_s", sc.temperature.period_s);
  }
  if (doc.contains("tilt_drift")) {
    const json& t = doc.at("tilt_drift");
    require_known_keys(t, {"pitch_coeff_deg_per_c", "roll_coeff_deg_per_c"}, "tilt_drift");
    sc.tilt_drift.pitch_coeff_deg_per_c = get_num(t, "pitch_coeff_deg_per_c", 0.0);
    sc.tilt_drift.roll_coeff_deg_per_c = get_num(t, "roll_coeff_deg_per_c", 0.0);
  }
  if (doc.contains("ships")) {
    for (const json& s : doc.at("ships")) {
      require_known_keys(s,
                         {"appear_t", "start_m", "speed_mps", "berth_m", "impact_t",
                          "impact_amp_mg", "impact_freq_hz", "impact_decay_s", "departs_t",
                          "passing"},
                         "ship");
      ShipEvent ship;
      ship.appear_t = get_num(s, "appear_t", 0.0);
      ship.start_m = get_num(s, "start_m", ship.start_m);
      ship.speed_mps = get_num(s, "speed_mps", ship.speed_mps);
      ship.berth_m = get_num(s, "berth_m", ship.berth_m);
      ship.departs_t = get_num(s, "departs_t", 0.0);
      ship.impact_t = get_num(s, "impact_t", 0.5 * (ship.appear_t + ship.departs_t));
      if (s.contains("impact_amp_mg")) {
        const json& a = s.at("impact_amp_mg");
        if (!a.is_array() || a.size() != 3) {
          throw std::invalid_argument("impact_amp_mg must be an array of 3 numbers");
        }
        for (int i = 0; i < 3; ++i) ship.impact_amp_mg[std::size_t(i)] = a.at(i).get<double>();
      }
      ship.impact_freq_hz = get_num(s, "impact_freq_hz", ship.impact_freq_hz);
      ship.impact_decay_s = get_num(s, "impact_decay_s", ship.impact_decay_s);
      if (s.contains("passing")) ship.passing = s.at("passing").get<bool>();
      sc.ships.push_back(ship);
    }
  }
  if (doc.contains("trigger")) {
    const json& t = doc.at("trigger");
    require_known_keys(t,
                       {"schedule_period_s", "distance_threshold_m", "rearm_margin_m",
                        "cooldown_s", "sensing_s_noship", "sensing_s_ship"},
                       "trigger");
    sc.trigger.schedule_period_s = get_num(t, "schedule_period_s", sc.trigger.schedule_period_s);
    sc.trigger.distance_threshold_m = get_num(t, "distance_threshold_m", sc.trigger.distance_threshold_m);
    sc.trigger.rearm_margin_m = get_num(t, "rearm_margin_m", sc.trigger.rearm_margin_m);
    sc.trigger.cooldown_s = get_num(t, "cooldown_s", sc.trigger.cooldown_s);
    sc.trigger.sensing_s_noship = get_num(t, "sensing_s_noship", sc.trigger.sensing_s_noship);
    sc.trigger.sensing_s_ship = get_num(t, "sensing_s_ship", sc.trigger.sensing_s_ship);
  }
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::string& path) {
  return parse_scenario(util::read_text_file(path));
}

World::World(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  const double target_g = scenario_.noise_rmse_target_mg * 1e-3;
  noise_sigma_g_ = target_g / unit_noise_rmse_through_chain();
  impact_peak_unit_.reserve(scenario_.ships.size());
  for (const ShipEvent& s : scenario_.ships) {
    const bool silent = s.impact_amp_mg[0] == 0.0 && s.impact_amp_mg[1] == 0.0 &&
                        s.impact_amp_mg[2] == 0.0;
    impact_peak_unit_.push_back(
        silent ? 1.0 : unit_impact_peak_through_chain(s.impact_freq_hz, s.impact_decay_s));
  }
}

double World::temperature_at(double t) const {
  const TemperatureModel& m = scenario_.temperature;
  return m.mean_c + m.amplitude_c * std::sin(2.0 * util::kPi * t / m.period_s);
}

TiltDrift World::drift_at(double t) const {
  const double temp = temperature_at(t);
  TiltDrift d;
  d.pitch_deg = scenario_.tilt_drift.pitch_coeff_deg_per_c * (temp - scenario_.temperature.mean_c);
  d.roll_deg = -scenario_.tilt_drift.roll_coeff_deg_per_c * std::max(0.0, temp - kRollKneeC);
  return d;
}

double World::ship_distance_at(const ShipEvent& ship, double t) const {
  if (t <= ship.arrival_t()) return ship.start_m - ship.speed_mps * (t - ship.appear_t);
  if (t <= ship.departs_t) return ship.berth_m;
  return ship.berth_m + ship.speed_mps * (t - ship.departs_t);
}

double World::distance_at(double t) const {
  double d = kMaxRangeM;
  for (const ShipEvent& ship : scenario_.ships) d = std::min(d, ship_distance_at(ship, t));
  return d;
}

SensorNoise World::sensor_noise(const std::string& sensor_id) const {
  const std::uint64_t base = util::mix_key(scenario_.seed, util::fnv1a(sensor_id));
  return SensorNoise{util::RandomStream(util::mix_key(base, 1)),
                     util::RandomStream(util::mix_key(base, 2)),
                     util::RandomStream(util::mix_key(base, 3))};
}

dsp::AccelFrame World::accel_at(const SensorNoise& noise, std::int64_t sample_index) const {
  const double t = double(sample_index) * 1e-3;
  const TiltDrift d = drift_at(t);
  const double sp = std::sin(d.pitch_deg * kDegToRad);
  const double sr = std::sin(d.roll_deg * kDegToRad);
  const double az2 = 1.0 - sp * sp - sr * sr;

  dsp::AccelFrame f;
  f.t = t;
  f.ax = sp;
  f.ay = sr;
  f.az = az2 > 0.0 ? std::sqrt(az2) : 0.0;

  const auto ctr = std::uint64_t(sample_index);
  f.ax += noise_sigma_g_ * noise.x.gauss(ctr);
  f.ay += noise_sigma_g_ * noise.y.gauss(ctr);
  f.az += noise_sigma_g_ * noise.z.gauss(ctr);

  for (std::size_t i = 0; i < scenario_.ships.size(); ++i) {
    const ShipEvent& ship = scenario_.ships[i];
    const double dt = t - ship.impact_t;
    if (dt < 0.0 || dt > kImpactWindowDecays * ship.impact_decay_s) continue;
    const double u = unit_impact_value(dt, ship.impact_freq_hz, ship.impact_decay_s);
    const double scale = u / impact_peak_unit_[i] * 1e-3;
    f.ax += ship.impact_amp_mg[0] * scale;
    f.ay += ship.impact_amp_mg[1] * scale;
    f.az += ship.impact_amp_mg[2] * scale;
  }
  return f;
}

double box_area_fraction(const ShipEvent& ship, double distance_m) {
  const double k = 0.3 * ship.berth_m * ship.berth_m;
  return clampd(k / (distance_m * distance_m), 0.0, 0.9);
}

detection::AnnotationScene World::scene_at(double t, const std::string& scene_id) const {
  detection::AnnotationScene scene;
  scene.scene_id = scene_id;
  scene.width = kFrameSizePx;
  scene.height = kFrameSizePx;
  for (const ShipEvent& ship : scenario_.ships) {
    const double d = ship_distance_at(ship, t);
    if (d > kMaxRangeM) continue;
    const double frac = box_area_fraction(ship, d);
    const double area_px = frac * kFrameSizePx * kFrameSizePx;
    const double h = std::sqrt(area_px / kBoxAspect);
    const double w = kBoxAspect * h;
    const bool at_berth_track = !ship.passing && t <= ship.departs_t;
    const double cx = 0.5 * kFrameSizePx;
    const double cy = (at_berth_track ? kBerthCentroidYFrac : kPassCentroidYFrac) * kFrameSizePx;

    detection::BBox box;
    box.x_min = clampd(cx - 0.5 * w, 0.0, kFrameSizePx - 1.0);
    box.x_max = clampd(cx + 0.5 * w, box.x_min + 1.0, kFrameSizePx);
    box.y_min = clampd(cy - 0.5 * h, 0.0, kFrameSizePx - 1.0);
    box.y_max = clampd(cy + 0.5 * h, box.y_min + 1.0, kFrameSizePx);
    scene.boxes.push_back(box);
    scene.labels.push_back("Ship");
  }
  return scene;
}

bool World::berthing_truth(double t, const detection::BerthingGate& gate) const {
  const detection::AnnotationScene scene = scene_at(t, "truth");
  std::vector<detection::Detection> dets;
  dets.reserve(scene.boxes.size());
  for (const detection::BBox& b : scene.boxes) dets.push_back({b, 1.0, "Ship"});
  return detection::classify_berthing(dets, gate, scene.width, scene.height).berthing;
}

}  // namespace portmon::sim
