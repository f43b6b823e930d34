#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "portmon/trigger.hpp"
#include "portmon/util.hpp"

namespace portmon::telemetry {

inline constexpr int kRowsPerPacket = 5;

// One 100Hz output record. Values are formatted with fixed decimal
// precision (t: 3 digits, everything else: 6) on every wire path, so the
// same row serializes to identical bytes via packets, CSV, and logs.
struct Row {
  double t = 0.0;
  double ax_mg = 0.0;
  double ay_mg = 0.0;
  double az_mg = 0.0;
  double roll_deg = 0.0;
  double pitch_deg = 0.0;
};

std::string row_text(const Row& row);
Row parse_row_text(const std::string& line);  // throws std::invalid_argument

std::string csv_header();
std::string rows_to_csv(const std::vector<Row>& rows);
std::vector<Row> parse_csv(const std::string& text);  // throws std::invalid_argument

struct DataPacket {
  std::string sensor_id;
  std::string session_id;
  std::uint64_t seq = 0;
  bool final_flag = false;
  std::vector<Row> rows;
};

std::string encode_packet(const DataPacket& packet);
DataPacket decode_packet(const std::string& payload);  // throws std::invalid_argument

struct InfoRecord {
  std::string sensor_id;
  std::string session_id;
  double trigger_time = 0.0;
  double distance_m = 0.0;
  double temperature_c = 0.0;
  trigger::TriggerKind trigger_type = trigger::TriggerKind::Schedule;
  bool ship_present = false;
};

std::string encode_info(const InfoRecord& info);
InfoRecord decode_info(const std::string& payload);  // throws std::invalid_argument

std::string data_topic(const std::string& sensor_id);
std::string info_topic(const std::string& sensor_id);
bool topic_matches(const std::string& pattern, const std::string& topic);

// Groups rows five at a time. Emission is lazy by one packet so the last
// packet of a session always carries final=true, even when the row count
// divides evenly.
class RowPacker {
 public:
  RowPacker(std::string sensor_id, std::string session_id);

  std::optional<DataPacket> push(const Row& row);
  std::optional<DataPacket> finish();

  std::uint64_t packets_emitted() const { return next_seq_; }

 private:
  DataPacket take_pending(bool final_flag);

  std::string sensor_id_;
  std::string session_id_;
  std::vector<Row> pending_;
  std::uint64_t next_seq_ = 0;
  bool finished_ = false;
};

using MessageHandler = std::function<void(const std::string& topic, const std::string& payload)>;

// At-least-once, per-stream-ordered publish/subscribe.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual bool publish(const std::string& topic, const std::string& payload) = 0;
  virtual void subscribe(const std::string& pattern, MessageHandler handler) = 0;
  virtual void poll() {}
};

// In-process transport with fault injection. Injected loss models drops on
// the broker-to-server leg: the publish is acknowledged, subscribers never
// see it. Loss applies only to topics matching the configured pattern.
class LoopbackTransport : public Transport {
 public:
  bool publish(const std::string& topic, const std::string& payload) override;
  void subscribe(const std::string& pattern, MessageHandler handler) override;

  void set_loss(double rate, std::uint64_t seed, std::string topic_pattern = "sensors/+/data");
  void set_duplicate(double rate, std::uint64_t seed);
  void set_down(bool down) { down_ = down; }

  std::size_t published() const { return published_; }
  std::size_t dropped() const { return dropped_; }
  std::size_t duplicated() const { return duplicated_; }

 private:
  std::vector<std::pair<std::string, MessageHandler>> subs_;
  bool down_ = false;
  double loss_rate_ = 0.0;
  std::string loss_pattern_ = "sensors/+/data";
  double dup_rate_ = 0.0;
  util::SeqRng loss_rng_{0};
  util::SeqRng dup_rng_{0};
  std::size_t published_ = 0;
  std::size_t dropped_ = 0;
  std::size_t duplicated_ = 0;
};

struct BulkUpload {
  std::string sensor_id;
  std::string session_id;
  bool ship_present = false;
  std::size_t expected_rows = 0;  // metadata cross-check; 0 means unstated
  std::string csv;
  std::optional<std::string> scene_json;
};

class BulkEndpoint {
 public:
  virtual ~BulkEndpoint() = default;
  virtual bool upload(const BulkUpload& bulk) = 0;
};

struct ReconcileReport {
  std::vector<Row> rows;
  bool used_bulk = false;
  bool complete = false;
  bool lost = false;
  std::size_t duplicate_packets = 0;
  std::size_t expected_packets = 0;  // 0 when not determinable
  std::vector<std::pair<std::uint64_t, std::uint64_t>> missing_seq_ranges;  // inclusive
};

// Bulk CSV is authoritative when present; otherwise streamed packets are
// deduplicated by seq and reassembled in order.
ReconcileReport reconcile(const std::vector<DataPacket>& streamed,
                          const std::optional<std::vector<Row>>& bulk_rows);

}  // namespace portmon::telemetry
