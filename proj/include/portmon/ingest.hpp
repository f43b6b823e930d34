#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "portmon/detection.hpp"
#include "portmon/telemetry.hpp"

namespace portmon::ingest {

// Time-series persistence: one append-only log per sensor, replayed on
// open. Streamed rows and bulk rows are kept separately; a session's bulk
// copy, once finalized, supersedes its streamed rows in every query.
class SeriesStore {
 public:
  explicit SeriesStore(std::string root);
  ~SeriesStore();
  SeriesStore(const SeriesStore&) = delete;
  SeriesStore& operator=(const SeriesStore&) = delete;

  // Returns false on a duplicate (session, seq); duplicates are not stored.
  bool append_streamed(const telemetry::DataPacket& packet);
  // Returns false when the session already has an info record.
  bool append_info(const telemetry::InfoRecord& info);
  // Throws std::invalid_argument on a malformed CSV. Idempotent: a repeat
  // with identical content leaves a single byte-identical stored copy.
  void finalize_bulk(const std::string& sensor_id, const std::string& session_id,
                     bool ship_present, const std::string& csv_text,
                     const std::optional<std::string>& scene_json);

  std::vector<std::string> sensor_ids() const;
  std::vector<std::string> session_ids(const std::string& sensor_id) const;
  std::vector<telemetry::Row> session_rows(const std::string& sensor_id,
                                           const std::string& session_id) const;
  std::optional<telemetry::InfoRecord> session_info(const std::string& sensor_id,
                                                    const std::string& session_id) const;
  std::vector<telemetry::Row> query_series(const std::string& sensor_id, double start,
                                           double end) const;
  std::vector<telemetry::InfoRecord> query_info(const std::string& sensor_id, double start,
                                                double end) const;

  struct SessionStats {
    std::size_t streamed_packets = 0;
    std::size_t duplicate_packets = 0;
    bool bulk_present = false;
    std::size_t row_count = 0;  // of the authoritative view
    std::vector<std::pair<std::uint64_t, std::uint64_t>> missing_seq_ranges;
  };
  SessionStats session_stats(const std::string& sensor_id, const std::string& session_id) const;

  std::string bulk_csv_path(const std::string& sensor_id, const std::string& session_id,
                            bool ship_present) const;
  const std::string& root() const { return root_; }
  void flush();

 private:
  struct Session {
    std::map<std::uint64_t, std::vector<std::string>> streamed;  // seq -> row texts
    std::optional<std::vector<std::string>> bulk;
    bool bulk_ship_present = false;
    std::optional<std::string> info_json;
    std::size_t duplicate_packets = 0;
  };
  struct Sensor;

  Sensor& sensor(const std::string& sensor_id);
  const Session* find_session(const std::string& sensor_id, const std::string& session_id) const;
  void replay();
  static double session_start_t(const Session& s);

  std::string root_;
  std::map<std::string, std::unique_ptr<Sensor>> sensors_;
};

struct ConfigSnapshot {
  std::map<std::string, double> params;
  std::uint64_t version = 0;
};

// Canonical object encoding for parameter maps: keys sorted, values %.6f.
std::string params_to_json(const std::map<std::string, double>& params);
std::map<std::string, double> params_from_json(const std::string& text);

// Versioned per-sensor parameter store plus a detection-verdict audit
// trail. Parameter keys are whitelisted; the audit trail is unversioned.
class ConfigStore {
 public:
  explicit ConfigStore(std::string root);

  static bool known_key(const std::string& key);
  static const std::vector<std::string>& known_keys();

  // Throws std::invalid_argument on an unknown key; version is unchanged.
  std::uint64_t set(const std::string& sensor_id, const std::map<std::string, double>& updates);
  std::optional<ConfigSnapshot> get(const std::string& sensor_id,
                                    std::uint64_t since_version) const;
  std::uint64_t version(const std::string& sensor_id) const;

  void record_verdict(const std::string& sensor_id, const std::string& session_id,
                      const std::string& verdict_json);
  std::optional<std::string> last_verdict(const std::string& sensor_id) const;

 private:
  struct Entry {
    ConfigSnapshot snapshot;
    std::vector<std::pair<std::string, std::string>> verdicts;  // session -> json
  };
  void append_log(const std::string& line);

  std::string root_;
  std::map<std::string, Entry> entries_;
};

struct DetectionRequest {
  std::string sensor_id;
  std::string session_id;
  std::string scene_json;
};

struct DetectionResponse {
  bool error = false;
  bool ship_present = false;
  bool berthing = false;
  std::vector<detection::Detection> boxes;
  double latency_s = 0.0;
};

std::string encode_detection_response(const DetectionResponse& r);
DetectionResponse decode_detection_response(const std::string& payload);

struct IngestOptions {
  std::string store_dir;
  detection::DetectorNoiseConfig detector;
};

// The cloud side: subscribes to sensor topics, persists series and info
// records, serves detection requests, accepts bulk uploads, and hosts the
// remote config store.
class IngestService : public telemetry::BulkEndpoint {
 public:
  explicit IngestService(IngestOptions options);

  void attach(telemetry::Transport& transport);

  bool upload(const telemetry::BulkUpload& bulk) override;
  DetectionResponse handle_detection(const DetectionRequest& request);

  std::uint64_t set_config(const std::string& sensor_id,
                           const std::map<std::string, double>& updates);
  std::optional<ConfigSnapshot> get_config(const std::string& sensor_id,
                                           std::uint64_t since_version) const;

  SeriesStore& store() { return store_; }
  const SeriesStore& store() const { return store_; }
  ConfigStore& config() { return config_; }
  const ConfigStore& config() const { return config_; }

  detection::BerthingGate gate_for(const std::string& sensor_id, double frame_w,
                                   double frame_h) const;

  std::size_t malformed_count() const { return malformed_; }
  std::size_t rejected_uploads() const { return rejected_uploads_; }

 private:
  IngestOptions options_;
  SeriesStore store_;
  ConfigStore config_;
  // Entry points may be hit from several front ends (in-process transport,
  // HTTP gateway worker); all mutating paths serialize on this.
  mutable std::mutex mu_;
  std::size_t malformed_ = 0;
  std::size_t rejected_uploads_ = 0;
};

}  // namespace portmon::ingest
