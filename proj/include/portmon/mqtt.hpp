#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "portmon/telemetry.hpp"

namespace portmon::mqtt {

// Minimal MQTT 3.1.1 client: clean session, QoS 1 publish and subscribe,
// single-threaded. Incoming messages are dispatched from poll() and from
// the ack-wait loops; nothing runs on a background thread.
class MqttClient : public telemetry::Transport {
 public:
  // Returns nullptr when the broker cannot be reached or refuses the
  // connection.
  static std::unique_ptr<MqttClient> connect(const std::string& host, int port,
                                             const std::string& client_id,
                                             double timeout_s = 3.0);

  ~MqttClient() override;
  MqttClient(const MqttClient&) = delete;
  MqttClient& operator=(const MqttClient&) = delete;

  // QoS 1: returns true once the broker acknowledges the publish.
  bool publish(const std::string& topic, const std::string& payload) override;
  // Sends the subscription and waits for the broker's acknowledgement;
  // throws std::runtime_error when it is refused.
  void subscribe(const std::string& pattern, telemetry::MessageHandler handler) override;
  void poll() override;

  void disconnect();
  bool connected() const { return fd_ >= 0; }

 private:
  explicit MqttClient(int fd, double timeout_s);

  bool send_all(const std::vector<std::uint8_t>& bytes);
  void drain();
  void process_buffer();
  void handle_packet(std::uint8_t header, const std::vector<std::uint8_t>& body);
  bool wait_for_ack(std::uint8_t type, std::uint16_t packet_id);
  std::uint16_t next_packet_id();

  int fd_ = -1;
  double timeout_s_ = 3.0;
  std::vector<std::uint8_t> rx_;
  std::vector<std::pair<std::string, telemetry::MessageHandler>> subs_;
  std::uint16_t packet_id_ = 0;
  bool connack_ = false;
  bool acked_ = false;
  std::uint8_t acked_type_ = 0;
  std::uint16_t acked_id_ = 0;
};

// "host:port" (port defaults to 1883 when absent).
std::pair<std::string, int> parse_broker_url(const std::string& url);

}  // namespace portmon::mqtt
