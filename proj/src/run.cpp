#include "portmon/run.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>
#include <thread>

#include "portmon/util.hpp"

namespace portmon::run {

Engine::Engine(RunOptions options) : options_(std::move(options)) {
  if (options_.n_sensors < 1) throw std::invalid_argument("n_sensors must be at least 1");
  if (options_.loss_rate < 0.0 || options_.loss_rate > 1.0) {
    throw std::invalid_argument("loss_rate must be in [0,1]");
  }
  if (options_.out_dir.empty()) throw std::invalid_argument("out_dir must be set");
  world_ = std::make_unique<sim::World>(options_.scenario);

  if (options_.external_transport) {
    transport_ = options_.external_transport;
    if (options_.loss_rate > 0.0) {
      throw std::invalid_argument("loss injection requires the in-process transport");
    }
  } else {
    loopback_ = std::make_unique<telemetry::LoopbackTransport>();
    if (options_.loss_rate > 0.0) {
      loopback_->set_loss(options_.loss_rate, options_.scenario.seed);
    }
    transport_ = loopback_.get();
  }

  ingest::IngestOptions iopt;
  iopt.store_dir = options_.out_dir + "/store";
  iopt.detector = options_.detector;
  util::ensure_dir(options_.out_dir);
  service_ = std::make_unique<ingest::IngestService>(iopt);
  service_->attach(*transport_);
}

Engine::~Engine() = default;

void Engine::run_sensor(const std::string& sensor_id, RunResult& result) {
  node::NodeOptions nopt;
  nopt.sensor_id = sensor_id;
  nopt.trigger_config = options_.scenario.trigger;
  nopt.detection_timeout_s = options_.detection_timeout_s;
  nopt.bulk_enabled = options_.bulk_enabled;

  node::Node n(
      nopt, *world_, *transport_, service_.get(),
      [this](const ingest::DetectionRequest& req) -> std::optional<ingest::DetectionResponse> {
        return service_->handle_detection(req);
      },
      [this](const std::string& sid, std::uint64_t since) {
        return service_->get_config(sid, since);
      });
  n.set_row_tap([this, sensor_id](const std::string& ses, const telemetry::Row& row) {
    truth_[sensor_id][ses].push_back(telemetry::row_text(row));
  });

  std::vector<ConfigUpdateAt> updates;
  for (const ConfigUpdateAt& u : options_.config_updates) {
    if (u.sensor_id.empty() || u.sensor_id == sensor_id) updates.push_back(u);
  }
  std::stable_sort(updates.begin(), updates.end(),
                   [](const ConfigUpdateAt& a, const ConfigUpdateAt& b) { return a.t < b.t; });
  std::size_t update_idx = 0;
  const auto apply_updates_through = [&](double t) {
    while (update_idx < updates.size() && updates[update_idx].t <= t) {
      service_->set_config(sensor_id, updates[update_idx].params);
      ++update_idx;
    }
  };

  trigger::DistanceDetector detector;
  const double duration = world_->duration_s();
  double next_schedule = n.trigger_config().schedule_period_s;
  double last_schedule_fire = 0.0;
  double busy_until = 0.0;
  std::int64_t next_reading = 0;

  const auto handle_event = [&](const trigger::TriggerEvent& ev) {
    const bool busy = ev.t < busy_until;
    if (trigger::arbitrate(ev, busy) == trigger::Arbitration::Suppress) return;
    const node::SensingSession ses = n.run_cycle(ev);
    busy_until = ses.sense_begin_t + ses.duration_s;
    const double old_period = n.trigger_config().schedule_period_s;
    if (n.poll_config() && n.trigger_config().schedule_period_s != old_period) {
      const double period = n.trigger_config().schedule_period_s;
      next_schedule = last_schedule_fire + period;
      while (next_schedule <= ev.t) next_schedule += period;
    }
    transport_->poll();
  };

  // Half-open [0, duration): 1Hz rangefinder readings merged with the
  // schedule timer in time order; readings win ties.
  while (true) {
    const double t_dist = double(next_reading);
    const bool have_dist = t_dist < duration;
    const bool have_sched = next_schedule < duration;
    if (!have_dist && !have_sched) break;
    if (have_dist && (!have_sched || t_dist <= next_schedule)) {
      apply_updates_through(t_dist);
      const auto ev =
          detector.evaluate({t_dist, world_->distance_at(t_dist)}, n.trigger_config());
      ++next_reading;
      if (ev) handle_event(*ev);
    } else {
      const double fire_t = next_schedule;
      apply_updates_through(fire_t);
      last_schedule_fire = fire_t;
      next_schedule = trigger::schedule_next(fire_t, n.trigger_config().schedule_period_s);
      handle_event({fire_t, trigger::TriggerKind::Schedule});
    }
  }
  n.retry_pending_bulk();

  SensorRunResult sr;
  sr.sensor_id = sensor_id;
  sr.sessions = n.sessions();
  sr.publish_failures = n.publish_failures();
  sr.pending_bulk = n.pending_bulk_count();
  result.sensors.push_back(std::move(sr));
}

void Engine::write_outputs(RunResult& result) {
  const std::string gt_root = options_.out_dir + "/gt";
  for (const auto& [sensor_id, sessions] : truth_) {
    const std::string dir = gt_root + "/sensor" + sensor_id;
    util::ensure_dir(dir);
    for (const auto& [ses_id, rows] : sessions) {
      std::string csv = telemetry::csv_header();
      csv += '\n';
      for (const std::string& r : rows) {
        csv += r;
        csv += '\n';
      }
      util::write_text_file(dir + "/" + ses_id + ".csv", csv);
    }
  }

  std::string s = "{\"scenario\":\"";
  s += util::json_escape(options_.scenario.name);
  s += "\",\"seed\":";
  s += std::to_string(options_.scenario.seed);
  s += ",\"n_sensors\":";
  s += std::to_string(options_.n_sensors);
  s += ",\"loss_rate\":";
  s += util::fmt_fixed(options_.loss_rate, 6);
  s += ",\"bulk_enabled\":";
  s += options_.bulk_enabled ? "true" : "false";
  s += ",\"sensors\":[";
  bool first_sensor = true;
  for (const SensorRunResult& sr : result.sensors) {
    if (!first_sensor) s += ',';
    first_sensor = false;
    s += "{\"sensor_id\":\"";
    s += util::json_escape(sr.sensor_id);
    s += "\",\"sessions\":[";
    for (std::size_t i = 0; i < sr.sessions.size(); ++i) {
      const node::SensingSession& ses = sr.sessions[i];
      if (i) s += ',';
      s += "{\"session_id\":\"";
      s += util::json_escape(ses.session_id);
      s += "\",\"start_t\":";
      s += util::fmt_fixed(ses.start_t, 3);
      s += ",\"trigger\":\"";
      s += trigger::kind_name(ses.trigger_kind);
      s += "\",\"ship_present\":";
      s += ses.ship_present ? "true" : "false";
      s += ",\"duration_s\":";
      s += util::fmt_fixed(ses.duration_s, 3);
      s += ",\"rows\":";
      s += std::to_string(ses.row_count);
      s += ",\"timed_out\":";
      s += ses.detection_timed_out ? "true" : "false";
      s += '}';
    }
    s += "],\"store\":[";
    const auto& store = service_->store();
    bool first_ses = true;
    for (const std::string& ses_id : store.session_ids(sr.sensor_id)) {
      const auto stats = store.session_stats(sr.sensor_id, ses_id);
      if (!first_ses) s += ',';
      first_ses = false;
      s += "{\"session_id\":\"";
      s += util::json_escape(ses_id);
      s += "\",\"streamed_packets\":";
      s += std::to_string(stats.streamed_packets);
      s += ",\"duplicates\":";
      s += std::to_string(stats.duplicate_packets);
      s += ",\"bulk\":";
      s += stats.bulk_present ? "true" : "false";
      s += ",\"rows\":";
      s += std::to_string(stats.row_count);
      s += ",\"missing\":[";
      for (std::size_t m = 0; m < stats.missing_seq_ranges.size(); ++m) {
        if (m) s += ',';
        s += '[';
        s += std::to_string(stats.missing_seq_ranges[m].first);
        s += ',';
        s += std::to_string(stats.missing_seq_ranges[m].second);
        s += ']';
      }
      s += "]}";
    }
    s += "],\"publish_failures\":";
    s += std::to_string(sr.publish_failures);
    s += ",\"pending_bulk\":";
    s += std::to_string(sr.pending_bulk);
    s += '}';
  }
  s += "],\"transport\":{\"published\":";
  s += std::to_string(result.published_messages);
  s += ",\"dropped\":";
  s += std::to_string(result.dropped_messages);
  s += "},\"malformed\":";
  s += std::to_string(result.malformed_messages);
  s += "}\n";

  result.summary_path = options_.out_dir + "/summary.json";
  util::write_text_file(result.summary_path, s);
}

RunResult Engine::execute() {
  RunResult result;
  for (int k = 1; k <= options_.n_sensors; ++k) {
    run_sensor(std::to_string(k), result);
  }
  if (options_.external_transport) {
    // Drain in-flight broker deliveries before reading the store.
    for (int i = 0; i < 60; ++i) {
      transport_->poll();
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  if (loopback_) {
    result.published_messages = loopback_->published();
    result.dropped_messages = loopback_->dropped();
  }
  result.malformed_messages = service_->malformed_count();
  service_->store().flush();
  write_outputs(result);
  return result;
}

RunResult execute_run(const RunOptions& options) {
  Engine engine(options);
  return engine.execute();
}

}  // namespace portmon::run
