#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "portmon/dsp.hpp"
#include "portmon/ingest.hpp"
#include "portmon/sim.hpp"
#include "portmon/telemetry.hpp"
#include "portmon/trigger.hpp"

namespace portmon::node {

enum class State { Rest, Capturing, AwaitingDetection, Sensing, Transmitting };

const char* state_name(State s);

struct SensingSession {
  std::string session_id;
  std::string sensor_id;
  double start_t = 0.0;  // trigger time
  trigger::TriggerKind trigger_kind = trigger::TriggerKind::Schedule;
  bool ship_present = false;  // the server's berthing verdict
  bool detection_timed_out = false;
  double duration_s = 0.0;
  double sense_begin_t = 0.0;
  double temperature_c = 0.0;
  double distance_m = 0.0;
  std::size_t row_count = 0;
};

struct NodeOptions {
  std::string sensor_id;
  trigger::TriggerConfig trigger_config;
  double detection_timeout_s = 10.0;
  bool bulk_enabled = true;
};

using DetectionFn =
    std::function<std::optional<ingest::DetectionResponse>(const ingest::DetectionRequest&)>;
using ConfigFn = std::function<std::optional<ingest::ConfigSnapshot>(const std::string& sensor_id,
                                                                     std::uint64_t since_version)>;
using RowTap = std::function<void(const std::string& session_id, const telemetry::Row& row)>;

// One edge node: trigger events in, full sensing sessions out. A cycle
// captures a scene, asks the server for a verdict, sizes the session from
// the berthing gate result, runs the 1000Hz-to-100Hz chain over generated
// samples, streams packets as rows emerge, then uploads the bulk CSV.
class Node {
 public:
  Node(NodeOptions options, const sim::World& world, telemetry::Transport& transport,
       telemetry::BulkEndpoint* bulk, DetectionFn detect, ConfigFn config);

  SensingSession run_cycle(const trigger::TriggerEvent& event);

  // Applies any server-side parameter set newer than the last applied
  // version. Returns true when an update was applied.
  bool poll_config();

  void retry_pending_bulk();
  void set_row_tap(RowTap tap) { row_tap_ = std::move(tap); }

  const trigger::TriggerConfig& trigger_config() const { return options_.trigger_config; }
  const std::string& sensor_id() const { return options_.sensor_id; }
  std::uint64_t config_version() const { return config_version_; }
  State state() const { return state_; }
  const std::vector<std::pair<double, State>>& transitions() const { return transitions_; }
  const std::vector<SensingSession>& sessions() const { return sessions_; }
  std::size_t publish_failures() const { return publish_failures_; }
  std::size_t pending_bulk_count() const { return pending_bulk_.size(); }
  std::size_t rejected_config_updates() const { return rejected_config_updates_; }

 private:
  void enter(State s, double t);
  void publish_or_count(const std::string& topic, const std::string& payload);
  void apply_config(const ingest::ConfigSnapshot& snap);

  NodeOptions options_;
  const sim::World& world_;
  telemetry::Transport& transport_;
  telemetry::BulkEndpoint* bulk_;
  DetectionFn detect_;
  ConfigFn config_;
  RowTap row_tap_;

  sim::SensorNoise noise_;
  State state_ = State::Rest;
  std::vector<std::pair<double, State>> transitions_;
  std::vector<SensingSession> sessions_;
  std::vector<telemetry::BulkUpload> pending_bulk_;
  std::uint64_t config_version_ = 0;
  std::size_t publish_failures_ = 0;
  std::size_t rejected_config_updates_ = 0;
};

}  // namespace portmon::node
