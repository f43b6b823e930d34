#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <portmon/ingest.hpp>
#include <portmon/telemetry.hpp>

namespace httplib {
class Server;
class Client;
}  // namespace httplib

namespace portmon::gateway {

// HTTP front end for the ingest service: bulk upload (PUT /bulk), detection
// requests (POST /detect), and remote config (GET/PUT /config/<sensor>).
// Requests run on a single worker thread, so handler order is deterministic
// for a single client.
class HttpGateway {
 public:
  explicit HttpGateway(ingest::IngestService& service);
  ~HttpGateway();
  HttpGateway(const HttpGateway&) = delete;
  HttpGateway& operator=(const HttpGateway&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  bool start(const std::string& host, int port = 0);
  void stop();
  int port() const { return port_; }

 private:
  ingest::IngestService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

// Bulk-upload client speaking the gateway protocol. The CSV travels as the
// request body; session metadata rides in X- headers, and the small scene
// annotation (when present) is base64-packed into one.
class HttpBulkClient : public telemetry::BulkEndpoint {
 public:
  HttpBulkClient(const std::string& host, int port);
  ~HttpBulkClient() override;

  bool upload(const telemetry::BulkUpload& bulk) override;

 private:
  std::unique_ptr<httplib::Client> client_;
};

// Detection + config client for the same gateway.
class HttpServiceClient {
 public:
  HttpServiceClient(const std::string& host, int port);
  ~HttpServiceClient();

  // nullopt on transport failure or a non-OK response.
  std::optional<ingest::DetectionResponse> detect(const ingest::DetectionRequest& request);

  // nullopt when nothing newer than since_version exists (or on failure).
  std::optional<ingest::ConfigSnapshot> get_config(const std::string& sensor_id,
                                                   std::uint64_t since_version);

  // Returns the new version, or nullopt when the update was refused.
  std::optional<std::uint64_t> set_config(const std::string& sensor_id,
                                          const std::map<std::string, double>& updates);

 private:
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace portmon::gateway
