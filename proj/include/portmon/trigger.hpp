#pragma once

#include <cstddef>
#include <optional>
#include <string>

namespace portmon::trigger {

enum class TriggerKind { Schedule, Rangefinder };

const char* kind_name(TriggerKind k);
TriggerKind kind_from_name(const std::string& name);  // throws on unknown

// All fields remotely adjustable through the server config store.
struct TriggerConfig {
  double schedule_period_s = 300.0;
  double distance_threshold_m = 45.0;
  double rearm_margin_m = 5.0;
  double cooldown_s = 600.0;
  double sensing_s_noship = 30.0;
  double sensing_s_ship = 1200.0;

  void validate() const;  // throws std::invalid_argument
};

struct DistanceReading {
  double t = 0.0;
  double meters = 0.0;
};

struct TriggerEvent {
  double t = 0.0;
  TriggerKind kind = TriggerKind::Schedule;
};

double schedule_next(double last_fire_t, double period_s);

enum class Arbitration { Accept, Suppress };

Arbitration arbitrate(const TriggerEvent& event, bool node_busy);

// Edge-triggered threshold detector with re-arm hysteresis. Starts disarmed
// until a reading above the threshold is seen; fires once per approach on
// the above-to-at-or-below transition; re-arms only after the distance
// exceeds threshold + margin and the cooldown has elapsed. Out-of-order
// readings are rejected without touching the state.
class DistanceDetector {
 public:
  std::optional<TriggerEvent> evaluate(const DistanceReading& reading, const TriggerConfig& config);

  bool armed() const { return phase_ == Phase::Armed; }
  std::size_t rejected_count() const { return rejected_; }
  std::size_t fire_count() const { return fires_; }

 private:
  enum class Phase { AwaitArm, Armed, AwaitRearm };

  Phase phase_ = Phase::AwaitArm;
  double last_t_ = -1.0;
  bool any_seen_ = false;
  double last_fire_t_ = 0.0;
  std::size_t rejected_ = 0;
  std::size_t fires_ = 0;
};

}  // namespace portmon::trigger
