#include "portmon/trigger.hpp"

#include <stdexcept>

namespace portmon::trigger {

const char* kind_name(TriggerKind k) {
  switch (k) {
    case TriggerKind::Schedule:
      return "schedule";
    case TriggerKind::Rangefinder:
      return "rangefinder";
  }
  return "unknown";
}

TriggerKind kind_from_name(const std::string& name) {
  if (name == "schedule") return TriggerKind::Schedule;
  if (name == "rangefinder") return TriggerKind::Rangefinder;
  throw std::invalid_argument("unknown trigger kind: " + name);
}

void TriggerConfig::validate() const {
  if (schedule_period_s <= 0.0) throw std::invalid_argument("schedule_period_s must be positive");
  if (distance_threshold_m <= 0.0) throw std::invalid_argument("distance_threshold_m must be positive");
  if (rearm_margin_m < 0.0) throw std::invalid_argument("rearm_margin_m must be non-negative");
  if (cooldown_s < 0.0) throw std::invalid_argument("cooldown_s must be non-negative");
  if (sensing_s_noship <= 0.0) throw std::invalid_argument("sensing_s_noship must be positive");
  if (sensing_s_ship <= 0.0) throw std::invalid_argument("sensing_s_ship must be positive");
}

double schedule_next(double last_fire_t, double period_s) {
  if (period_s <= 0.0) throw std::invalid_argument("period must be positive");
  return last_fire_t + period_s;
}

Arbitration arbitrate(const TriggerEvent& event, bool node_busy) {
  (void)event;
  return node_busy ? Arbitration::Suppress : Arbitration::Accept;
}

std::optional<TriggerEvent> DistanceDetector::evaluate(const DistanceReading& reading,
                                                       const TriggerConfig& config) {
  config.validate();
  if (any_seen_ && reading.t <= last_t_) {
    ++rejected_;
    return std::nullopt;
  }
  any_seen_ = true;
  last_t_ = reading.t;

  switch (phase_) {
    case Phase::AwaitArm:
      if (reading.meters > config.distance_threshold_m) phase_ = Phase::Armed;
      return std::nullopt;
    case Phase::Armed:
      if (reading.meters <= config.distance_threshold_m) {
        phase_ = Phase::AwaitRearm;
        last_fire_t_ = reading.t;
        ++fires_;
        return TriggerEvent{reading.t, TriggerKind::Rangefinder};
      }
      return std::nullopt;
    case Phase::AwaitRearm:
      if (reading.meters > config.distance_threshold_m + config.rearm_margin_m &&
          reading.t - last_fire_t_ >= config.cooldown_s) {
        phase_ = Phase::Armed;
      }
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace portmon::trigger
