#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "portmon/ingest.hpp"
#include "portmon/node.hpp"
#include "portmon/sim.hpp"
#include "portmon/telemetry.hpp"

namespace portmon::run {

// A server-side parameter edit injected at a point in simulated time; the
// node picks it up at its next per-cycle poll.
struct ConfigUpdateAt {
  double t = 0.0;
  std::string sensor_id;  // empty applies to every sensor
  std::map<std::string, double> params;
};

struct RunOptions {
  sim::Scenario scenario;
  int n_sensors = 1;
  double loss_rate = 0.0;
  std::string out_dir;
  bool bulk_enabled = true;
  double detection_timeout_s = 10.0;
  detection::DetectorNoiseConfig detector;  // defaults to a perfect detector
  std::vector<ConfigUpdateAt> config_updates;
  telemetry::Transport* external_transport = nullptr;  // pub/sub only
};

struct SensorRunResult {
  std::string sensor_id;
  std::vector<node::SensingSession> sessions;
  std::size_t publish_failures = 0;
  std::size_t pending_bulk = 0;
};

struct RunResult {
  std::vector<SensorRunResult> sensors;
  std::size_t published_messages = 0;
  std::size_t dropped_messages = 0;
  std::size_t malformed_messages = 0;
  std::string summary_path;
};

// Single-process deterministic orchestration: the world, every node, the
// transport, and the ingest service all advance on one simulated clock.
// Nodes are processed sequentially, which fixes the event order and makes
// reruns byte-identical.
class Engine {
 public:
  explicit Engine(RunOptions options);
  ~Engine();

  RunResult execute();

  ingest::IngestService& service() { return *service_; }
  const sim::World& world() const { return *world_; }

  // Canonical row text captured at node emission, per sensor and session.
  const std::map<std::string, std::map<std::string, std::vector<std::string>>>& truth() const {
    return truth_;
  }

 private:
  void run_sensor(const std::string& sensor_id, RunResult& result);
  void write_outputs(RunResult& result);

  RunOptions options_;
  std::unique_ptr<sim::World> world_;
  std::unique_ptr<telemetry::LoopbackTransport> loopback_;
  telemetry::Transport* transport_ = nullptr;
  std::unique_ptr<ingest::IngestService> service_;
  std::map<std::string, std::map<std::string, std::vector<std::string>>> truth_;
};

RunResult execute_run(const RunOptions& options);

}  // namespace portmon::run
