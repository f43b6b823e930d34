#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include <portmon/mqtt.hpp>
#include <portmon/telemetry.hpp>

#include "support/mini_broker.hpp"

using namespace portmon;

namespace {

// Polls the client until the predicate holds or the deadline passes.
template <typename Pred>
bool poll_until(mqtt::MqttClient& client, Pred pred, int max_ms = 2000) {
  for (int waited = 0; waited < max_ms; waited += 5) {
    client.poll();
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  client.poll();
  return pred();
}

}  // namespace

TEST_CASE("broker URL parsing") {
  CHECK(mqtt::parse_broker_url("localhost:1884") == std::make_pair(std::string("localhost"), 1884));
  CHECK(mqtt::parse_broker_url("10.0.0.2") == std::make_pair(std::string("10.0.0.2"), 1883));
  CHECK_THROWS_AS((void)mqtt::parse_broker_url(""), std::invalid_argument);
  CHECK_THROWS_AS((void)mqtt::parse_broker_url("host:notaport"), std::invalid_argument);
}

TEST_CASE("connect fails cleanly when nothing listens") {
  // Port 9 (discard) is almost certainly closed; a refused or timed-out
  // connection must come back as nullptr, not an exception.
  const auto client = mqtt::MqttClient::connect("127.0.0.1", 9, "nobody", 0.5);
  CHECK(client == nullptr);
}

TEST_CASE("publish round-trips through the broker to a subscriber") {
  testsup::MiniBroker broker;

  auto sub = mqtt::MqttClient::connect("127.0.0.1", broker.port(), "sub");
  auto pub = mqtt::MqttClient::connect("127.0.0.1", broker.port(), "pub");
  REQUIRE(sub != nullptr);
  REQUIRE(pub != nullptr);

  std::vector<std::pair<std::string, std::string>> seen;
  sub->subscribe("sensors/+/data", [&](const std::string& topic, const std::string& payload) {
    seen.emplace_back(topic, payload);
  });

  CHECK(pub->publish("sensors/7/data", "hello"));
  CHECK(pub->publish("sensors/7/info", "ignored"));  // no matching subscription
  CHECK(pub->publish("sensors/8/data", "world"));

  REQUIRE(poll_until(*sub, [&] { return seen.size() >= 2; }));
  REQUIRE(seen.size() == 2);
  CHECK(seen[0] == std::make_pair(std::string("sensors/7/data"), std::string("hello")));
  CHECK(seen[1] == std::make_pair(std::string("sensors/8/data"), std::string("world")));

  pub->disconnect();
  sub->disconnect();
  CHECK(!pub->connected());
  broker.stop();
}

TEST_CASE("a client can publish onto its own subscription") {
  testsup::MiniBroker broker;
  auto client = mqtt::MqttClient::connect("127.0.0.1", broker.port(), "self");
  REQUIRE(client != nullptr);

  int got = 0;
  client->subscribe("loop/#", [&](const std::string&, const std::string&) { ++got; });
  CHECK(client->publish("loop/a", "x"));
  CHECK(client->publish("loop/b/c", "y"));
  CHECK(poll_until(*client, [&] { return got >= 2; }));
  CHECK(got == 2);
  CHECK(broker.forwarded() == 2);
  client->disconnect();
  broker.stop();
}

TEST_CASE("large payloads survive the multi-byte length encoding") {
  testsup::MiniBroker broker;
  auto client = mqtt::MqttClient::connect("127.0.0.1", broker.port(), "big");
  REQUIRE(client != nullptr);

  // > 16383 bytes forces a 3-byte remaining-length field both ways.
  std::string payload;
  payload.reserve(20000);
  for (int i = 0; i < 20000; ++i) payload.push_back(char('a' + i % 26));

  std::string received;
  client->subscribe("bulk/data", [&](const std::string&, const std::string& p) { received = p; });
  CHECK(client->publish("bulk/data", payload));
  CHECK(poll_until(*client, [&] { return !received.empty(); }));
  CHECK(received == payload);
  client->disconnect();
  broker.stop();
}

TEST_CASE("publishing after a broker shutdown reports failure") {
  testsup::MiniBroker broker;
  auto client = mqtt::MqttClient::connect("127.0.0.1", broker.port(), "orphan");
  REQUIRE(client != nullptr);
  CHECK(client->publish("t", "first"));
  broker.stop();
  // The socket dies mid-conversation; the publish must fail, not hang.
  CHECK(!client->publish("t", "second"));
  CHECK(!client->connected());
}

TEST_CASE("the telemetry pipeline flows over a real socket") {
  testsup::MiniBroker broker;
  auto sensor = mqtt::MqttClient::connect("127.0.0.1", broker.port(), "sensor");
  auto server = mqtt::MqttClient::connect("127.0.0.1", broker.port(), "server");
  REQUIRE(sensor != nullptr);
  REQUIRE(server != nullptr);

  std::vector<telemetry::DataPacket> packets;
  server->subscribe(telemetry::data_topic("+"),
                    [&](const std::string&, const std::string& payload) {
                      packets.push_back(telemetry::decode_packet(payload));
                    });

  telemetry::RowPacker packer("3", "3-5.000");
  for (int i = 0; i < 12; ++i) {
    telemetry::Row row;
    row.t = 5.0 + i * 0.01;
    row.az_mg = 1000.0;
    if (auto p = packer.push(row)) {
      CHECK(sensor->publish(telemetry::data_topic("3"), telemetry::encode_packet(*p)));
    }
  }
  if (auto p = packer.finish()) {
    CHECK(sensor->publish(telemetry::data_topic("3"), telemetry::encode_packet(*p)));
  }

  REQUIRE(poll_until(*server, [&] { return packets.size() >= 3; }));
  const auto report = telemetry::reconcile(packets, std::nullopt);
  CHECK(report.complete);
  CHECK(report.rows.size() == 12);
  sensor->disconnect();
  server->disconnect();
  broker.stop();
}
