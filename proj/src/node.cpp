#include "portmon/node.hpp"

#include <cmath>
#include <stdexcept>

#include "portmon/util.hpp"

namespace portmon::node {

const char* state_name(State s) {
  switch (s) {
    case State::Rest:
      return "rest";
    case State::Capturing:
      return "capturing";
    case State::AwaitingDetection:
      return "awaiting_detection";
    case State::Sensing:
      return "sensing";
    case State::Transmitting:
      return "transmitting";
  }
  return "unknown";
}

Node::Node(NodeOptions options, const sim::World& world, telemetry::Transport& transport,
           telemetry::BulkEndpoint* bulk, DetectionFn detect, ConfigFn config)
    : options_(std::move(options)), world_(world), transport_(transport), bulk_(bulk),
      detect_(std::move(detect)), config_(std::move(config)),
      noise_(world.sensor_noise(options_.sensor_id)) {
  if (options_.sensor_id.empty()) throw std::invalid_argument("sensor_id must be nonempty");
  options_.trigger_config.validate();
  transitions_.emplace_back(0.0, State::Rest);
}

void Node::enter(State s, double t) {
  state_ = s;
  transitions_.emplace_back(t, s);
}

void Node::publish_or_count(const std::string& topic, const std::string& payload) {
  if (!transport_.publish(topic, payload)) ++publish_failures_;
}

SensingSession Node::run_cycle(const trigger::TriggerEvent& event) {
  if (state_ != State::Rest) throw std::logic_error("run_cycle requires the node at rest");

  SensingSession session;
  session.sensor_id = options_.sensor_id;
  session.session_id = options_.sensor_id + "-" + util::fmt_fixed(event.t, 3);
  session.start_t = event.t;
  session.trigger_kind = event.kind;
  session.distance_m = world_.distance_at(event.t);
  session.temperature_c = world_.temperature_at(event.t);

  enter(State::Capturing, event.t);
  const detection::AnnotationScene scene = world_.scene_at(event.t, session.session_id);
  const std::string scene_json = detection::scene_to_json(scene);

  enter(State::AwaitingDetection, event.t);
  double latency = options_.detection_timeout_s;
  bool berthing = false;
  const auto response =
      detect_(ingest::DetectionRequest{options_.sensor_id, session.session_id, scene_json});
  if (!response || response->latency_s >= options_.detection_timeout_s) {
    session.detection_timed_out = true;
  } else {
    latency = response->latency_s;
    berthing = !response->error && response->berthing;
  }
  session.ship_present = berthing;
  session.duration_s = berthing ? options_.trigger_config.sensing_s_ship
                                : options_.trigger_config.sensing_s_noship;
  session.sense_begin_t = event.t + latency;

  publish_or_count(telemetry::info_topic(options_.sensor_id),
                   telemetry::encode_info(telemetry::InfoRecord{
                       options_.sensor_id, session.session_id, session.start_t,
                       session.distance_m, session.temperature_c, session.trigger_kind,
                       session.ship_present}));

  enter(State::Sensing, session.sense_begin_t);
  dsp::FirDecimator chain(dsp::design_kaiser_fir(128, 110.0, 1000.0), 10);
  dsp::TiltLowpass tilt_lpf(1.0, 100.0);
  telemetry::RowPacker packer(options_.sensor_id, session.session_id);
  std::vector<telemetry::Row> rows;
  rows.reserve(std::size_t(session.duration_s * 100.0) + 1);

  const std::int64_t first = std::llround(session.sense_begin_t * 1000.0);
  const std::int64_t count = std::llround(session.duration_s * 1000.0);
  for (std::int64_t i = first; i < first + count; ++i) {
    const auto out = chain.push(world_.accel_at(noise_, i));
    if (!out) continue;
    const dsp::TiltSample raw = dsp::estimate_tilt(*out);
    const dsp::TiltSample smooth = tilt_lpf.push(raw);
    telemetry::Row row;
    row.t = out->t;
    row.ax_mg = out->ax * 1000.0;
    row.ay_mg = out->ay * 1000.0;
    row.az_mg = out->az * 1000.0;
    row.roll_deg = smooth.roll_deg;
    row.pitch_deg = smooth.pitch_deg;
    rows.push_back(row);
    if (row_tap_) row_tap_(session.session_id, row);
    if (auto packet = packer.push(row)) {
      publish_or_count(telemetry::data_topic(options_.sensor_id),
                       telemetry::encode_packet(*packet));
    }
  }
  if (auto packet = packer.finish()) {
    publish_or_count(telemetry::data_topic(options_.sensor_id),
                     telemetry::encode_packet(*packet));
  }
  session.row_count = rows.size();

  const double sense_end = session.sense_begin_t + session.duration_s;
  enter(State::Transmitting, sense_end);
  if (bulk_ && options_.bulk_enabled) {
    telemetry::BulkUpload bulk;
    bulk.sensor_id = options_.sensor_id;
    bulk.session_id = session.session_id;
    bulk.ship_present = session.ship_present;
    bulk.expected_rows = rows.size();
    bulk.csv = telemetry::rows_to_csv(rows);
    bulk.scene_json = scene_json;
    if (!bulk_->upload(bulk)) pending_bulk_.push_back(std::move(bulk));
  }

  enter(State::Rest, sense_end);
  sessions_.push_back(session);
  return session;
}

void Node::retry_pending_bulk() {
  if (!bulk_ || pending_bulk_.empty()) return;
  std::vector<telemetry::BulkUpload> still_pending;
  for (auto& b : pending_bulk_) {
    if (!bulk_->upload(b)) still_pending.push_back(std::move(b));
  }
  pending_bulk_.swap(still_pending);
}

void Node::apply_config(const ingest::ConfigSnapshot& snap) {
  trigger::TriggerConfig next = options_.trigger_config;
  const auto num = [&](const char* key, double fallback) {
    const auto it = snap.params.find(key);
    return it == snap.params.end() ? fallback : it->second;
  };
  next.schedule_period_s = num("schedule_period_s", next.schedule_period_s);
  next.distance_threshold_m = num("distance_threshold_m", next.distance_threshold_m);
  next.rearm_margin_m = num("rearm_margin_m", next.rearm_margin_m);
  next.cooldown_s = num("cooldown_s", next.cooldown_s);
  next.sensing_s_noship = num("sensing_s_noship", next.sensing_s_noship);
  next.sensing_s_ship = num("sensing_s_ship", next.sensing_s_ship);
  try {
    next.validate();
  } catch (const std::invalid_argument&) {
    ++rejected_config_updates_;
    config_version_ = snap.version;  // don't re-apply a bad set every cycle
    return;
  }
  options_.trigger_config = next;
  config_version_ = snap.version;
}

bool Node::poll_config() {
  if (!config_) return false;
  const auto snap = config_(options_.sensor_id, config_version_);
  if (!snap) return false;
  apply_config(*snap);
  return true;
}

}  // namespace portmon::node
