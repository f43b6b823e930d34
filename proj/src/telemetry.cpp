#include "portmon/telemetry.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace portmon::telemetry {

namespace {

using nlohmann::json;

std::string fmt_t(double v) { return util::fmt_fixed(v, 3); }
std::string fmt_v(double v) { return util::fmt_fixed(v, 6); }

double parse_number(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing garbage");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("bad number for ") + what + ": " + s);
  }
}

Row row_from_json(const json& arr) {
  if (!arr.is_array() || arr.size() != 6) {
    throw std::invalid_argument("packet row must be an array of 6 numbers");
  }
  Row r;
  r.t = arr.at(0).get<double>();
  r.ax_mg = arr.at(1).get<double>();
  r.ay_mg = arr.at(2).get<double>();
  r.az_mg = arr.at(3).get<double>();
  r.roll_deg = arr.at(4).get<double>();
  r.pitch_deg = arr.at(5).get<double>();
  return r;
}

}  // namespace

std::string row_text(const Row& row) {
  std::string s;
  s.reserve(64);
  s += fmt_t(row.t);
  s += ',';
  s += fmt_v(row.ax_mg);
  s += ',';
  s += fmt_v(row.ay_mg);
  s += ',';
  s += fmt_v(row.az_mg);
  s += ',';
  s += fmt_v(row.roll_deg);
  s += ',';
  s += fmt_v(row.pitch_deg);
  return s;
}

Row parse_row_text(const std::string& line) {
  const std::vector<std::string> parts = util::split(line, ',');
  if (parts.size() != 6) throw std::invalid_argument("row must have 6 columns: " + line);
  Row r;
  r.t = parse_number(parts[0], "t");
  r.ax_mg = parse_number(parts[1], "ax_mg");
  r.ay_mg = parse_number(parts[2], "ay_mg");
  r.az_mg = parse_number(parts[3], "az_mg");
  r.roll_deg = parse_number(parts[4], "roll_deg");
  r.pitch_deg = parse_number(parts[5], "pitch_deg");
  return r;
}

std::string csv_header() { return "t,ax_mg,ay_mg,az_mg,roll_deg,pitch_deg"; }

std::string rows_to_csv(const std::vector<Row>& rows) {
  std::string out = csv_header();
  out += '\n';
  for (const Row& r : rows) {
    out += row_text(r);
    out += '\n';
  }
  return out;
}

std::vector<Row> parse_csv(const std::string& text) {
  std::vector<Row> rows;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    if (first) {
      if (line != csv_header()) throw std::invalid_argument("unexpected CSV header: " + line);
      first = false;
      continue;
    }
    rows.push_back(parse_row_text(line));
  }
  if (first) throw std::invalid_argument("CSV is missing its header");
  return rows;
}

std::string encode_packet(const DataPacket& packet) {
  std::string s = "{\"sid\":\"";
  s += util::json_escape(packet.sensor_id);
  s += "\",\"ses\":\"";
  s += util::json_escape(packet.session_id);
  s += "\",\"seq\":";
  s += std::to_string(packet.seq);
  s += ",\"fin\":";
  s += packet.final_flag ? "true" : "false";
  s += ",\"rows\":[";
  for (std::size_t i = 0; i < packet.rows.size(); ++i) {
    const Row& r = packet.rows[i];
    if (i) s += ',';
    s += '[';
    s += fmt_t(r.t);
    s += ',';
    s += fmt_v(r.ax_mg);
    s += ',';
    s += fmt_v(r.ay_mg);
    s += ',';
    s += fmt_v(r.az_mg);
    s += ',';
    s += fmt_v(r.roll_deg);
    s += ',';
    s += fmt_v(r.pitch_deg);
    s += ']';
  }
  s += "]}";
  return s;
}

DataPacket decode_packet(const std::string& payload) {
  json doc;
  try {
    doc = json::parse(payload);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("packet is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("sid") || !doc.contains("ses") || !doc.contains("seq") ||
      !doc.contains("fin") || !doc.contains("rows")) {
    throw std::invalid_argument("packet is missing required fields");
  }
  DataPacket p;
  p.sensor_id = doc.at("sid").get<std::string>();
  p.session_id = doc.at("ses").get<std::string>();
  p.seq = doc.at("seq").get<std::uint64_t>();
  p.final_flag = doc.at("fin").get<bool>();
  const json& rows = doc.at("rows");
  if (!rows.is_array()) throw std::invalid_argument("packet rows must be an array");
  for (const json& r : rows) p.rows.push_back(row_from_json(r));
  if (p.rows.empty() || p.rows.size() > std::size_t(kRowsPerPacket)) {
    throw std::invalid_argument("packet must carry 1 to 5 rows");
  }
  if (!p.final_flag && p.rows.size() != std::size_t(kRowsPerPacket)) {
    throw std::invalid_argument("non-final packet must carry exactly 5 rows");
  }
  for (std::size_t i = 1; i < p.rows.size(); ++i) {
    if (p.rows[i].t <= p.rows[i - 1].t) {
      throw std::invalid_argument("packet row timestamps must strictly increase");
    }
  }
  return p;
}

std::string encode_info(const InfoRecord& info) {
  std::string s = "{\"sid\":\"";
  s += util::json_escape(info.sensor_id);
  s += "\",\"ses\":\"";
  s += util::json_escape(info.session_id);
  s += "\",\"trigger_time\":";
  s += fmt_t(info.trigger_time);
  s += ",\"distance_m\":";
  s += fmt_t(info.distance_m);
  s += ",\"temperature_c\":";
  s += fmt_t(info.temperature_c);
  s += ",\"trigger_type\":\"";
  s += trigger::kind_name(info.trigger_type);
  s += "\",\"ship_present\":";
  s += info.ship_present ? "true" : "false";
  s += '}';
  return s;
}

InfoRecord decode_info(const std::string& payload) {
  json doc;
  try {
    doc = json::parse(payload);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("info record is not valid JSON: ") + e.what());
  }
  for (const char* key : {"sid", "ses", "trigger_time", "distance_m", "temperature_c",
                          "trigger_type", "ship_present"}) {
    if (!doc.contains(key)) {
      throw std::invalid_argument(std::string("info record is missing ") + key);
    }
  }
  InfoRecord r;
  r.sensor_id = doc.at("sid").get<std::string>();
  r.session_id = doc.at("ses").get<std::string>();
  r.trigger_time = doc.at("trigger_time").get<double>();
  r.distance_m = doc.at("distance_m").get<double>();
  r.temperature_c = doc.at("temperature_c").get<double>();
  r.trigger_type = trigger::kind_from_name(doc.at("trigger_type").get<std::string>());
  r.ship_present = doc.at("ship_present").get<bool>();
  return r;
}

std::string data_topic(const std::string& sensor_id) { return "sensors/" + sensor_id + "/data"; }
std::string info_topic(const std::string& sensor_id) { return "sensors/" + sensor_id + "/info"; }

bool topic_matches(const std::string& pattern, const std::string& topic) {
  const std::vector<std::string> p = util::split(pattern, '/');
  const std::vector<std::string> t = util::split(topic, '/');
  std::size_t i = 0;
  for (; i < p.size(); ++i) {
    if (p[i] == "#") return i + 1 == p.size();  // multi-level, must be last
    if (i >= t.size()) return false;
    if (p[i] == "+") continue;
    if (p[i] != t[i]) return false;
  }
  return i == t.size();
}

RowPacker::RowPacker(std::string sensor_id, std::string session_id)
    : sensor_id_(std::move(sensor_id)), session_id_(std::move(session_id)) {}

DataPacket RowPacker::take_pending(bool final_flag) {
  DataPacket p;
  p.sensor_id = sensor_id_;
  p.session_id = session_id_;
  p.seq = next_seq_++;
  p.final_flag = final_flag;
  p.rows.swap(pending_);
  return p;
}

std::optional<DataPacket> RowPacker::push(const Row& row) {
  if (finished_) throw std::logic_error("push after finish");
  std::optional<DataPacket> out;
  if (pending_.size() == std::size_t(kRowsPerPacket)) out = take_pending(false);
  pending_.push_back(row);
  return out;
}

std::optional<DataPacket> RowPacker::finish() {
  if (finished_) throw std::logic_error("finish called twice");
  finished_ = true;
  if (pending_.empty()) return std::nullopt;
  return take_pending(true);
}

bool LoopbackTransport::publish(const std::string& topic, const std::string& payload) {
  if (down_) return false;
  ++published_;
  if (loss_rate_ > 0.0 && topic_matches(loss_pattern_, topic) &&
      loss_rng_.uniform() < loss_rate_) {
    ++dropped_;
    return true;  // acknowledged to the publisher, lost downstream
  }
  const int copies =
      (dup_rate_ > 0.0 && dup_rng_.uniform() < dup_rate_) ? 2 : 1;
  if (copies == 2) ++duplicated_;
  for (int c = 0; c < copies; ++c) {
    for (const auto& [pattern, handler] : subs_) {
      if (topic_matches(pattern, topic)) handler(topic, payload);
    }
  }
  return true;
}

void LoopbackTransport::subscribe(const std::string& pattern, MessageHandler handler) {
  subs_.emplace_back(pattern, std::move(handler));
}

void LoopbackTransport::set_loss(double rate, std::uint64_t seed, std::string topic_pattern) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("loss rate must be in [0,1]");
  loss_rate_ = rate;
  loss_pattern_ = std::move(topic_pattern);
  loss_rng_ = util::SeqRng(util::mix_key(seed, 0x6c6f7373));
}

void LoopbackTransport::set_duplicate(double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("duplicate rate must be in [0,1]");
  dup_rate_ = rate;
  dup_rng_ = util::SeqRng(util::mix_key(seed, 0x647570));
}

ReconcileReport reconcile(const std::vector<DataPacket>& streamed,
                          const std::optional<std::vector<Row>>& bulk_rows) {
  ReconcileReport rep;

  std::vector<const DataPacket*> unique;
  {
    std::vector<DataPacket const*> sorted;
    sorted.reserve(streamed.size());
    for (const DataPacket& p : streamed) sorted.push_back(&p);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const DataPacket* a, const DataPacket* b) { return a->seq < b->seq; });
    for (const DataPacket* p : sorted) {
      if (!unique.empty() && unique.back()->seq == p->seq) {
        ++rep.duplicate_packets;
        continue;
      }
      unique.push_back(p);
    }
  }

  const bool have_bulk = bulk_rows.has_value() && !bulk_rows->empty();
  if (have_bulk) {
    rep.used_bulk = true;
    rep.rows = *bulk_rows;
    rep.expected_packets =
        (bulk_rows->size() + std::size_t(kRowsPerPacket) - 1) / std::size_t(kRowsPerPacket);
  } else {
    for (const DataPacket* p : unique) {
      for (const Row& r : p->rows) rep.rows.push_back(r);
    }
    for (const DataPacket* p : unique) {
      if (p->final_flag) rep.expected_packets = std::size_t(p->seq) + 1;
    }
  }

  // Gap scan over the streamed sequence numbers.
  const std::uint64_t horizon =
      rep.expected_packets > 0
          ? std::uint64_t(rep.expected_packets)
          : (unique.empty() ? 0 : unique.back()->seq + 1);
  std::vector<bool> present(std::size_t(horizon), false);
  for (const DataPacket* p : unique) {
    if (p->seq < horizon) present[std::size_t(p->seq)] = true;
  }
  for (std::uint64_t s = 0; s < horizon; ++s) {
    if (present[std::size_t(s)]) continue;
    std::uint64_t e = s;
    while (e + 1 < horizon && !present[std::size_t(e + 1)]) ++e;
    rep.missing_seq_ranges.emplace_back(s, e);
    s = e;
  }

  rep.lost = !have_bulk && rep.rows.empty();
  rep.complete = have_bulk || (rep.expected_packets > 0 && rep.missing_seq_ranges.empty());
  return rep;
}

}  // namespace portmon::telemetry
