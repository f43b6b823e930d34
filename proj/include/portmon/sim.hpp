#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "portmon/detection.hpp"
#include "portmon/dsp.hpp"
#include "portmon/trigger.hpp"
#include "portmon/util.hpp"

namespace portmon::sim {

inline constexpr double kMaxRangeM = 100.0;   // rangefinder clamp
inline constexpr double kRollKneeC = 25.0;    // roll drift engages above this
inline constexpr double kFrameSizePx = 1024.0;
inline constexpr double kBoxAspect = 2.5;     // ship box width / height
inline constexpr int kWarmupRows = 128;       // output rows dropped before stats

struct TemperatureModel {
  double mean_c = 20.0;
  double amplitude_c = 0.0;
  double period_s = 86400.0;
};

struct TiltDriftModel {
  double pitch_coeff_deg_per_c = 0.0;  // pitch follows temperature
  double roll_coeff_deg_per_c = 0.0;   // roll opposes temperature above the knee
};

struct ShipEvent {
  double appear_t = 0.0;
  double start_m = kMaxRangeM;
  double speed_mps = 1.0;
  double berth_m = 25.0;
  double impact_t = 0.0;
  std::array<double, 3> impact_amp_mg{0.0, 0.0, 0.0};
  double impact_freq_hz = 2.0;
  double impact_decay_s = 5.0;
  double departs_t = 0.0;
  bool passing = false;  // passes the berth without mooring at it

  double arrival_t() const { return appear_t + (start_m - berth_m) / speed_mps; }
  void validate() const;  // throws std::invalid_argument
};

struct Scenario {
  std::string name = "scenario";
  double duration_s = 60.0;
  double noise_rmse_target_mg = 0.003;
  std::uint64_t seed = 1;
  TemperatureModel temperature;
  TiltDriftModel tilt_drift;
  std::vector<ShipEvent> ships;
  trigger::TriggerConfig trigger;  // node trigger parameters for this run

  void validate() const;
};

Scenario parse_scenario(const std::string& json_text);  // throws on schema violation
Scenario load_scenario(const std::string& path);

struct TiltDrift {
  double roll_deg = 0.0;
  double pitch_deg = 0.0;
};

// Per-sensor, per-axis noise streams, random-access by 1000Hz sample index.
struct SensorNoise {
  util::RandomStream x;
  util::RandomStream y;
  util::RandomStream z;
};

// Deterministic world model. All queries are pure functions of time, so any
// consumer may sample any window in any order and see the same values.
class World {
 public:
  explicit World(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }
  double duration_s() const { return scenario_.duration_s; }

  double temperature_at(double t) const;
  TiltDrift drift_at(double t) const;
  double distance_at(double t) const;

  SensorNoise sensor_noise(const std::string& sensor_id) const;
  dsp::AccelFrame accel_at(const SensorNoise& noise, std::int64_t sample_index) const;

  detection::AnnotationScene scene_at(double t, const std::string& scene_id) const;
  bool berthing_truth(double t, const detection::BerthingGate& gate) const;

  double noise_sigma_g() const { return noise_sigma_g_; }
  double impact_peak_unit(std::size_t ship_index) const { return impact_peak_unit_[ship_index]; }

 private:
  double ship_distance_at(const ShipEvent& ship, double t) const;

  Scenario scenario_;
  double noise_sigma_g_ = 0.0;
  std::vector<double> impact_peak_unit_;  // post-chain peak of a unit impact, per ship
};

double box_area_fraction(const ShipEvent& ship, double distance_m);

}  // namespace portmon::sim
