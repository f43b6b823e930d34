#include "portmon/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "portmon/util.hpp"

namespace portmon::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Splits off the first n '|'-delimited fields; the remainder (which may
// itself contain '|') becomes the final element.
std::vector<std::string> split_head(const std::string& line, std::size_t n) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bar = line.find('|', pos);
    if (bar == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, bar - pos));
    pos = bar + 1;
  }
  out.push_back(line.substr(pos));
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string params_to_json(const std::map<std::string, double>& params) {
  std::string s = "{";
  bool first = true;
  for (const auto& [k, v] : params) {
    if (!first) s += ',';
    first = false;
    s += '"';
    s += util::json_escape(k);
    s += "\":";
    s += util::fmt_fixed(v, 6);
  }
  s += '}';
  return s;
}

std::map<std::string, double> params_from_json(const std::string& text) {
  std::map<std::string, double> out;
  const json doc = json::parse(text);
  for (const auto& item : doc.items()) out[item.key()] = item.value().get<double>();
  return out;
}

struct SeriesStore::Sensor {
  std::map<std::string, Session> sessions;
  std::ofstream series_log;
  std::ofstream info_log;
};

SeriesStore::SeriesStore(std::string root) : root_(std::move(root)) {
  util::ensure_dir(root_);
  replay();
}

SeriesStore::~SeriesStore() = default;

SeriesStore::Sensor& SeriesStore::sensor(const std::string& sensor_id) {
  auto it = sensors_.find(sensor_id);
  if (it == sensors_.end()) {
    it = sensors_.emplace(sensor_id, std::make_unique<Sensor>()).first;
  }
  Sensor& s = *it->second;
  if (!s.series_log.is_open()) {
    const std::string dir = root_ + "/sensor" + sensor_id;
    util::ensure_dir(dir);
    s.series_log.open(dir + "/series.log", std::ios::app);
    s.info_log.open(dir + "/info.log", std::ios::app);
    if (!s.series_log || !s.info_log) {
      throw std::runtime_error("cannot open store logs under " + dir);
    }
  }
  return s;
}

const SeriesStore::Session* SeriesStore::find_session(const std::string& sensor_id,
                                                      const std::string& session_id) const {
  const auto it = sensors_.find(sensor_id);
  if (it == sensors_.end()) return nullptr;
  const auto jt = it->second->sessions.find(session_id);
  if (jt == it->second->sessions.end()) return nullptr;
  return &jt->second;
}

std::string SeriesStore::bulk_csv_path(const std::string& sensor_id,
                                       const std::string& session_id, bool ship_present) const {
  return root_ + "/bulk/" + (ship_present ? "ship" : "noship") + "/sensor" + sensor_id + "/" +
         session_id + ".csv";
}

void SeriesStore::replay() {
  if (!fs::exists(root_)) return;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("sensor", 0) != 0) continue;
    const std::string sensor_id = name.substr(6);
    if (sensor_id.empty()) continue;
    Sensor& s = *sensors_.emplace(sensor_id, std::make_unique<Sensor>()).first->second;

    for (const std::string& line : read_lines((entry.path() / "series.log").string())) {
      const std::vector<std::string> f = split_head(line, 3);
      if (f.size() != 4) continue;
      if (f[0] == "R") {
        s.sessions[f[1]].streamed[std::stoull(f[2])].push_back(f[3]);
      } else if (f[0] == "F") {
        Session& ses = s.sessions[f[1]];
        ses.bulk_ship_present = f[3] == "ship";
        const std::string path = bulk_csv_path(sensor_id, f[1], ses.bulk_ship_present);
        std::vector<std::string> texts;
        bool header = true;
        for (const std::string& row : read_lines(path)) {
          if (header) {
            header = false;
            continue;
          }
          texts.push_back(row);
        }
        ses.bulk = std::move(texts);
      }
    }
    for (const std::string& line : read_lines((entry.path() / "info.log").string())) {
      const std::vector<std::string> f = split_head(line, 2);
      if (f.size() == 3 && f[0] == "I") s.sessions[f[1]].info_json = f[2];
    }
  }
}

bool SeriesStore::append_streamed(const telemetry::DataPacket& packet) {
  Sensor& s = sensor(packet.sensor_id);
  Session& ses = s.sessions[packet.session_id];
  if (ses.streamed.count(packet.seq)) {
    ++ses.duplicate_packets;
    return false;
  }
  std::vector<std::string>& texts = ses.streamed[packet.seq];
  for (const telemetry::Row& r : packet.rows) {
    const std::string text = telemetry::row_text(r);
    texts.push_back(text);
    s.series_log << "R|" << packet.session_id << '|' << packet.seq << '|' << text << '\n';
  }
  return true;
}

bool SeriesStore::append_info(const telemetry::InfoRecord& info) {
  Sensor& s = sensor(info.sensor_id);
  Session& ses = s.sessions[info.session_id];
  if (ses.info_json.has_value()) return false;
  const std::string payload = telemetry::encode_info(info);
  ses.info_json = payload;
  s.info_log << "I|" << info.session_id << '|' << payload << '\n';
  return true;
}

void SeriesStore::finalize_bulk(const std::string& sensor_id, const std::string& session_id,
                                bool ship_present, const std::string& csv_text,
                                const std::optional<std::string>& scene_json) {
  const std::vector<telemetry::Row> rows = telemetry::parse_csv(csv_text);  // validates
  (void)rows;
  Sensor& s = sensor(sensor_id);

  const std::string path = bulk_csv_path(sensor_id, session_id, ship_present);
  util::ensure_dir(fs::path(path).parent_path().string());
  util::write_text_file(path, csv_text);
  if (scene_json.has_value()) {
    util::write_text_file(root_ + "/bulk/" + (ship_present ? "ship" : "noship") + "/sensor" +
                              sensor_id + "/" + session_id + ".scene.json",
                          *scene_json);
  }

  Session& ses = s.sessions[session_id];
  std::vector<std::string> texts;
  bool header = true;
  std::size_t pos = 0;
  while (pos < csv_text.size()) {
    std::size_t nl = csv_text.find('\n', pos);
    if (nl == std::string::npos) nl = csv_text.size();
    const std::string line = csv_text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    texts.push_back(line);
  }
  const bool repeat = ses.bulk.has_value() && *ses.bulk == texts &&
                      ses.bulk_ship_present == ship_present;
  ses.bulk = std::move(texts);
  ses.bulk_ship_present = ship_present;
  if (!repeat) {
    s.series_log << "F|" << session_id << '|' << ses.bulk->size() << '|'
                 << (ship_present ? "ship" : "noship") << '\n';
  }
}

void SeriesStore::flush() {
  for (auto& [_, s] : sensors_) {
    if (s->series_log.is_open()) s->series_log.flush();
    if (s->info_log.is_open()) s->info_log.flush();
  }
}

double SeriesStore::session_start_t(const Session& s) {
  const std::vector<std::string>* first = nullptr;
  if (s.bulk.has_value() && !s.bulk->empty()) {
    first = &*s.bulk;
  } else if (!s.streamed.empty()) {
    first = &s.streamed.begin()->second;
  }
  if (first && !first->empty()) {
    try {
      return telemetry::parse_row_text(first->front()).t;
    } catch (const std::exception&) {
    }
  }
  if (s.info_json.has_value()) {
    try {
      return telemetry::decode_info(*s.info_json).trigger_time;
    } catch (const std::exception&) {
    }
  }
  return std::numeric_limits<double>::infinity();
}

std::vector<std::string> SeriesStore::sensor_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : sensors_) out.push_back(id);
  return out;
}

std::vector<std::string> SeriesStore::session_ids(const std::string& sensor_id) const {
  std::vector<std::string> out;
  const auto it = sensors_.find(sensor_id);
  if (it == sensors_.end()) return out;
  std::vector<std::pair<double, std::string>> keyed;
  for (const auto& [ses_id, ses] : it->second->sessions) {
    keyed.emplace_back(session_start_t(ses), ses_id);
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [_, id] : keyed) out.push_back(id);
  return out;
}

std::vector<telemetry::Row> SeriesStore::session_rows(const std::string& sensor_id,
                                                      const std::string& session_id) const {
  std::vector<telemetry::Row> out;
  const Session* ses = find_session(sensor_id, session_id);
  if (!ses) return out;
  if (ses->bulk.has_value()) {
    for (const std::string& text : *ses->bulk) out.push_back(telemetry::parse_row_text(text));
    return out;
  }
  for (const auto& [_, texts] : ses->streamed) {
    for (const std::string& text : texts) out.push_back(telemetry::parse_row_text(text));
  }
  return out;
}

std::optional<telemetry::InfoRecord> SeriesStore::session_info(
    const std::string& sensor_id, const std::string& session_id) const {
  const Session* ses = find_session(sensor_id, session_id);
  if (!ses || !ses->info_json.has_value()) return std::nullopt;
  return telemetry::decode_info(*ses->info_json);
}

std::vector<telemetry::Row> SeriesStore::query_series(const std::string& sensor_id, double start,
                                                      double end) const {
  std::vector<telemetry::Row> out;
  for (const std::string& ses_id : session_ids(sensor_id)) {
    for (const telemetry::Row& r : session_rows(sensor_id, ses_id)) {
      if (r.t >= start && r.t < end) out.push_back(r);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const telemetry::Row& a, const telemetry::Row& b) { return a.t < b.t; });
  return out;
}

std::vector<telemetry::InfoRecord> SeriesStore::query_info(const std::string& sensor_id,
                                                           double start, double end) const {
  std::vector<telemetry::InfoRecord> out;
  for (const std::string& ses_id : session_ids(sensor_id)) {
    const auto info = session_info(sensor_id, ses_id);
    if (info && info->trigger_time >= start && info->trigger_time < end) out.push_back(*info);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const telemetry::InfoRecord& a, const telemetry::InfoRecord& b) {
                     return a.trigger_time < b.trigger_time;
                   });
  return out;
}

SeriesStore::SessionStats SeriesStore::session_stats(const std::string& sensor_id,
                                                     const std::string& session_id) const {
  SessionStats stats;
  const Session* ses = find_session(sensor_id, session_id);
  if (!ses) return stats;
  stats.streamed_packets = ses->streamed.size();
  stats.duplicate_packets = ses->duplicate_packets;
  stats.bulk_present = ses->bulk.has_value();
  if (ses->bulk.has_value()) {
    stats.row_count = ses->bulk->size();
  } else {
    for (const auto& [_, texts] : ses->streamed) stats.row_count += texts.size();
  }

  const std::uint64_t horizon =
      stats.bulk_present
          ? std::uint64_t((stats.row_count + std::size_t(telemetry::kRowsPerPacket) - 1) /
                          std::size_t(telemetry::kRowsPerPacket))
          : (ses->streamed.empty() ? 0 : ses->streamed.rbegin()->first + 1);
  std::uint64_t s = 0;
  while (s < horizon) {
    if (ses->streamed.count(s)) {
      ++s;
      continue;
    }
    std::uint64_t e = s;
    while (e + 1 < horizon && !ses->streamed.count(e + 1)) ++e;
    stats.missing_seq_ranges.emplace_back(s, e);
    s = e + 1;
  }
  return stats;
}

// --- ConfigStore ---

ConfigStore::ConfigStore(std::string root) : root_(std::move(root)) {
  util::ensure_dir(root_);
  for (const std::string& line : read_lines(root_ + "/config.log")) {
    const std::vector<std::string> f = split_head(line, 3);
    if (f.size() != 4) continue;
    if (f[0] == "C") {
      Entry& e = entries_[f[1]];
      e.snapshot.version = std::stoull(f[2]);
      e.snapshot.params = params_from_json(f[3]);
    } else if (f[0] == "V") {
      entries_[f[1]].verdicts.emplace_back(f[2], f[3]);
    }
  }
}

const std::vector<std::string>& ConfigStore::known_keys() {
  static const std::vector<std::string> keys = {
      "schedule_period_s",    "sensing_s_noship",     "sensing_s_ship",
      "distance_threshold_m", "rearm_margin_m",       "cooldown_s",
      "gate_roi_x_min_frac",  "gate_roi_y_min_frac",  "gate_roi_x_max_frac",
      "gate_roi_y_max_frac",  "gate_area_min_frac",   "gate_area_max_frac",
  };
  return keys;
}

bool ConfigStore::known_key(const std::string& key) {
  const auto& keys = known_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

void ConfigStore::append_log(const std::string& line) {
  std::ofstream out(root_ + "/config.log", std::ios::app);
  if (!out) throw std::runtime_error("cannot open config log under " + root_);
  out << line << '\n';
}

std::uint64_t ConfigStore::set(const std::string& sensor_id,
                               const std::map<std::string, double>& updates) {
  if (updates.empty()) throw std::invalid_argument("config update must set at least one key");
  for (const auto& [k, v] : updates) {
    if (!known_key(k)) throw std::invalid_argument("unknown config key: " + k);
    if (!std::isfinite(v)) throw std::invalid_argument("config value must be finite: " + k);
  }
  Entry& e = entries_[sensor_id];
  for (const auto& [k, v] : updates) e.snapshot.params[k] = v;
  ++e.snapshot.version;
  append_log("C|" + sensor_id + "|" + std::to_string(e.snapshot.version) + "|" +
             params_to_json(e.snapshot.params));
  return e.snapshot.version;
}

std::optional<ConfigSnapshot> ConfigStore::get(const std::string& sensor_id,
                                               std::uint64_t since_version) const {
  const auto it = entries_.find(sensor_id);
  if (it == entries_.end() || it->second.snapshot.version <= since_version) return std::nullopt;
  return it->second.snapshot;
}

std::uint64_t ConfigStore::version(const std::string& sensor_id) const {
  const auto it = entries_.find(sensor_id);
  return it == entries_.end() ? 0 : it->second.snapshot.version;
}

void ConfigStore::record_verdict(const std::string& sensor_id, const std::string& session_id,
                                 const std::string& verdict_json) {
  entries_[sensor_id].verdicts.emplace_back(session_id, verdict_json);
  append_log("V|" + sensor_id + "|" + session_id + "|" + verdict_json);
}

std::optional<std::string> ConfigStore::last_verdict(const std::string& sensor_id) const {
  const auto it = entries_.find(sensor_id);
  if (it == entries_.end() || it->second.verdicts.empty()) return std::nullopt;
  return it->second.verdicts.back().second;
}

// --- detection response codec ---

std::string encode_detection_response(const DetectionResponse& r) {
  std::string s = "{\"error\":";
  s += r.error ? "true" : "false";
  s += ",\"ship_present\":";
  s += r.ship_present ? "true" : "false";
  s += ",\"berthing\":";
  s += r.berthing ? "true" : "false";
  s += ",\"latency_s\":";
  s += util::fmt_fixed(r.latency_s, 3);
  s += ",\"boxes\":[";
  for (std::size_t i = 0; i < r.boxes.size(); ++i) {
    const detection::Detection& d = r.boxes[i];
    if (i) s += ',';
    s += "{\"label\":\"";
    s += util::json_escape(d.label);
    s += "\",\"score\":";
    s += util::fmt_fixed(d.score, 6);
    s += ",\"x_min\":";
    s += util::fmt_fixed(d.bbox.x_min, 3);
    s += ",\"y_min\":";
    s += util::fmt_fixed(d.bbox.y_min, 3);
    s += ",\"x_max\":";
    s += util::fmt_fixed(d.bbox.x_max, 3);
    s += ",\"y_max\":";
    s += util::fmt_fixed(d.bbox.y_max, 3);
    s += '}';
  }
  s += "]}";
  return s;
}

DetectionResponse decode_detection_response(const std::string& payload) {
  json doc;
  try {
    doc = json::parse(payload);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("detection response is not valid JSON: ") + e.what());
  }
  DetectionResponse r;
  r.error = doc.at("error").get<bool>();
  r.ship_present = doc.at("ship_present").get<bool>();
  r.berthing = doc.at("berthing").get<bool>();
  r.latency_s = doc.at("latency_s").get<double>();
  for (const json& b : doc.at("boxes")) {
    detection::Detection d;
    d.label = b.at("label").get<std::string>();
    d.score = b.at("score").get<double>();
    d.bbox = detection::BBox{b.at("x_min").get<double>(), b.at("y_min").get<double>(),
                             b.at("x_max").get<double>(), b.at("y_max").get<double>()};
    r.boxes.push_back(d);
  }
  return r;
}

// --- IngestService ---

IngestService::IngestService(IngestOptions options)
    : options_(std::move(options)), store_(options_.store_dir), config_(options_.store_dir) {}

void IngestService::attach(telemetry::Transport& transport) {
  transport.subscribe("sensors/+/data", [this](const std::string&, const std::string& payload) {
    const std::lock_guard<std::mutex> lock(mu_);
    try {
      store_.append_streamed(telemetry::decode_packet(payload));
    } catch (const std::invalid_argument&) {
      ++malformed_;
    }
  });
  transport.subscribe("sensors/+/info", [this](const std::string&, const std::string& payload) {
    const std::lock_guard<std::mutex> lock(mu_);
    try {
      store_.append_info(telemetry::decode_info(payload));
    } catch (const std::invalid_argument&) {
      ++malformed_;
    }
  });
}

bool IngestService::upload(const telemetry::BulkUpload& bulk) {
  const std::lock_guard<std::mutex> lock(mu_);
  try {
    const std::vector<telemetry::Row> rows = telemetry::parse_csv(bulk.csv);
    if (bulk.expected_rows != 0 && rows.size() != bulk.expected_rows) {
      throw std::invalid_argument("bulk row count does not match its metadata");
    }
    store_.finalize_bulk(bulk.sensor_id, bulk.session_id, bulk.ship_present, bulk.csv,
                         bulk.scene_json);
    return true;
  } catch (const std::invalid_argument&) {
    ++rejected_uploads_;
    return false;
  }
}

detection::BerthingGate IngestService::gate_for(const std::string& sensor_id, double frame_w,
                                                double frame_h) const {
  detection::BerthingGate gate = detection::default_gate(frame_w, frame_h);
  const auto snap = config_.get(sensor_id, 0);
  if (!snap) return gate;
  const auto& p = snap->params;
  const auto frac = [&](const char* key, double fallback) {
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
  };
  gate.roi.x_min = frac("gate_roi_x_min_frac", gate.roi.x_min / frame_w) * frame_w;
  gate.roi.y_min = frac("gate_roi_y_min_frac", gate.roi.y_min / frame_h) * frame_h;
  gate.roi.x_max = frac("gate_roi_x_max_frac", gate.roi.x_max / frame_w) * frame_w;
  gate.roi.y_max = frac("gate_roi_y_max_frac", gate.roi.y_max / frame_h) * frame_h;
  gate.area_min_frac = frac("gate_area_min_frac", gate.area_min_frac);
  gate.area_max_frac = frac("gate_area_max_frac", gate.area_max_frac);
  return gate;
}

DetectionResponse IngestService::handle_detection(const DetectionRequest& request) {
  const std::lock_guard<std::mutex> lock(mu_);
  DetectionResponse resp;
  resp.latency_s = options_.detector.latency_s;
  detection::AnnotationScene scene;
  try {
    scene = detection::parse_scene(request.scene_json);
  } catch (const std::invalid_argument&) {
    resp.error = true;
    config_.record_verdict(request.sensor_id, request.session_id,
                           encode_detection_response(resp));
    return resp;
  }
  resp.boxes = detection::detect(scene, options_.detector);
  resp.ship_present = !resp.boxes.empty();
  const detection::BerthingGate gate = gate_for(request.sensor_id, scene.width, scene.height);
  resp.berthing = detection::classify_berthing(resp.boxes, gate, scene.width, scene.height).berthing;

  DetectionResponse audit = resp;
  audit.boxes.clear();  // keep the audit trail compact
  config_.record_verdict(request.sensor_id, request.session_id,
                         encode_detection_response(audit));
  return resp;
}

std::uint64_t IngestService::set_config(const std::string& sensor_id,
                                        const std::map<std::string, double>& updates) {
  const std::lock_guard<std::mutex> lock(mu_);
  return config_.set(sensor_id, updates);
}

std::optional<ConfigSnapshot> IngestService::get_config(const std::string& sensor_id,
                                                        std::uint64_t since_version) const {
  const std::lock_guard<std::mutex> lock(mu_);
  return config_.get(sensor_id, since_version);
}

}  // namespace portmon::ingest
