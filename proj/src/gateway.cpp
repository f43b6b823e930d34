#include <portmon/gateway.hpp>

#include <chrono>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

#include <portmon/util.hpp>

namespace portmon::gateway {

namespace {

std::string snapshot_to_json(const ingest::ConfigSnapshot& snap) {
  return "{\"version\":" + std::to_string(snap.version) +
         ",\"params\":" + ingest::params_to_json(snap.params) + "}";
}

}  // namespace

HttpGateway::HttpGateway(ingest::IngestService& service) : service_(service) {}

HttpGateway::~HttpGateway() { stop(); }

bool HttpGateway::start(const std::string& host, int port) {
  if (server_) throw std::logic_error("gateway already started");
  server_ = std::make_unique<httplib::Server>();
  server_->new_task_queue = [] { return new httplib::ThreadPool(1); };

  server_->Put("/bulk", [this](const httplib::Request& req, httplib::Response& res) {
    telemetry::BulkUpload bulk;
    bulk.sensor_id = req.get_header_value("X-Sensor-Id");
    bulk.session_id = req.get_header_value("X-Session-Id");
    bulk.ship_present = req.get_header_value("X-Ship-Present") == "1";
    if (req.has_header("X-Row-Count")) {
      bulk.expected_rows = std::stoull(req.get_header_value("X-Row-Count"));
    }
    if (req.has_header("X-Scene-B64")) {
      try {
        bulk.scene_json = util::base64_decode(req.get_header_value("X-Scene-B64"));
      } catch (const std::invalid_argument&) {
        res.status = 400;
        return;
      }
    }
    bulk.csv = req.body;
    res.status = service_.upload(bulk) ? 200 : 422;
  });

  server_->Post("/detect", [this](const httplib::Request& req, httplib::Response& res) {
    ingest::DetectionRequest dr;
    dr.sensor_id = req.get_header_value("X-Sensor-Id");
    dr.session_id = req.get_header_value("X-Session-Id");
    dr.scene_json = req.body;
    res.set_content(ingest::encode_detection_response(service_.handle_detection(dr)),
                    "application/json");
  });

  server_->Get(R"(/config/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t since = 0;
    if (req.has_param("since")) since = std::stoull(req.get_param_value("since"));
    const auto snap = service_.get_config(req.matches[1], since);
    if (!snap) {
      res.status = 204;
      return;
    }
    res.set_content(snapshot_to_json(*snap), "application/json");
  });

  server_->Put(R"(/config/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto updates = ingest::params_from_json(req.body);
      const std::uint64_t version = service_.set_config(req.matches[1], updates);
      res.set_content("{\"version\":" + std::to_string(version) + "}", "application/json");
    } catch (const std::exception&) {
      res.status = 400;
    }
  });

  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ <= 0) return false;
  } else {
    if (!server_->bind_to_port(host, port)) return false;
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  for (int i = 0; i < 400 && !server_->is_running(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return server_->is_running();
}

void HttpGateway::stop() {
  if (!server_) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

namespace {

std::unique_ptr<httplib::Client> make_client(const std::string& host, int port) {
  auto client = std::make_unique<httplib::Client>(host, port);
  client->set_connection_timeout(5, 0);
  client->set_read_timeout(10, 0);
  client->set_write_timeout(10, 0);
  return client;
}

}  // namespace

HttpBulkClient::HttpBulkClient(const std::string& host, int port)
    : client_(make_client(host, port)) {}

HttpBulkClient::~HttpBulkClient() = default;

bool HttpBulkClient::upload(const telemetry::BulkUpload& bulk) {
  httplib::Headers headers{
      {"X-Sensor-Id", bulk.sensor_id},
      {"X-Session-Id", bulk.session_id},
      {"X-Ship-Present", bulk.ship_present ? "1" : "0"},
      {"X-Row-Count", std::to_string(bulk.expected_rows)},
  };
  if (bulk.scene_json && !bulk.scene_json->empty()) {
    headers.emplace("X-Scene-B64", util::base64_encode(*bulk.scene_json));
  }
  const auto res = client_->Put("/bulk", headers, bulk.csv, "text/csv");
  return res && res->status == 200;
}

HttpServiceClient::HttpServiceClient(const std::string& host, int port)
    : client_(make_client(host, port)) {}

HttpServiceClient::~HttpServiceClient() = default;

std::optional<ingest::DetectionResponse> HttpServiceClient::detect(
    const ingest::DetectionRequest& request) {
  const httplib::Headers headers{
      {"X-Sensor-Id", request.sensor_id},
      {"X-Session-Id", request.session_id},
  };
  const auto res = client_->Post("/detect", headers, request.scene_json, "application/json");
  if (!res || res->status != 200) return std::nullopt;
  try {
    return ingest::decode_detection_response(res->body);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

std::optional<ingest::ConfigSnapshot> HttpServiceClient::get_config(const std::string& sensor_id,
                                                                    std::uint64_t since_version) {
  const auto res =
      client_->Get("/config/" + sensor_id + "?since=" + std::to_string(since_version));
  if (!res || res->status != 200) return std::nullopt;
  try {
    const nlohmann::json doc = nlohmann::json::parse(res->body);
    ingest::ConfigSnapshot snap;
    snap.version = doc.at("version").get<std::uint64_t>();
    snap.params = ingest::params_from_json(doc.at("params").dump());
    return snap;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<std::uint64_t> HttpServiceClient::set_config(
    const std::string& sensor_id, const std::map<std::string, double>& updates) {
  const auto res = client_->Put("/config/" + sensor_id, ingest::params_to_json(updates),
                                "application/json");
  if (!res || res->status != 200) return std::nullopt;
  try {
    return nlohmann::json::parse(res->body).at("version").get<std::uint64_t>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace portmon::gateway
