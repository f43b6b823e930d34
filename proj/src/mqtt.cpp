#include "portmon/mqtt.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <stdexcept>

namespace portmon::mqtt {

namespace {

constexpr std::uint8_t kConnect = 0x10;
constexpr std::uint8_t kConnack = 0x20;
constexpr std::uint8_t kPublish = 0x30;
constexpr std::uint8_t kPuback = 0x40;
constexpr std::uint8_t kSubscribe = 0x82;
constexpr std::uint8_t kSuback = 0x90;
constexpr std::uint8_t kPingreq = 0xC0;
constexpr std::uint8_t kPingresp = 0xD0;
constexpr std::uint8_t kDisconnect = 0xE0;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v & 0xFF));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u16(out, std::uint16_t(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

void put_remaining_length(std::vector<std::uint8_t>& out, std::size_t n) {
  do {
    std::uint8_t byte = n % 128;
    n /= 128;
    if (n > 0) byte |= 0x80;
    out.push_back(byte);
  } while (n > 0);
}

std::vector<std::uint8_t> frame(std::uint8_t header, const std::vector<std::uint8_t>& body) {
  std::vector<std::uint8_t> out;
  out.push_back(header);
  put_remaining_length(out, body.size());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::pair<std::string, int> parse_broker_url(const std::string& url) {
  std::string rest = url;
  const std::string scheme = "mqtt://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  const std::size_t colon = rest.rfind(':');
  std::string host = colon == std::string::npos ? rest : rest.substr(0, colon);
  if (host.empty()) throw std::invalid_argument("broker URL needs a host");
  if (colon == std::string::npos) return {std::move(host), 1883};
  int port = 0;
  try {
    port = std::stoi(rest.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("broker port is not a number");
  }
  if (port <= 0 || port > 65535) throw std::invalid_argument("broker port out of range");
  return {std::move(host), port};
}

MqttClient::MqttClient(int fd, double timeout_s) : fd_(fd), timeout_s_(timeout_s) {}

std::unique_ptr<MqttClient> MqttClient::connect(const std::string& host, int port,
                                                const std::string& client_id, double timeout_s) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    return nullptr;
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0) return nullptr;

  const int flag = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &flag, sizeof(flag));
  fcntl(fd, F_SETFL, fcntl(fd, F_GETFL, 0) | O_NONBLOCK);

  auto client = std::unique_ptr<MqttClient>(new MqttClient(fd, timeout_s));
  std::vector<std::uint8_t> body;
  put_string(body, "MQTT");
  body.push_back(4);     // protocol level 3.1.1
  body.push_back(0x02);  // clean session
  put_u16(body, 60);     // keepalive seconds
  put_string(body, client_id);
  if (!client->send_all(frame(kConnect, body))) return nullptr;

  const double deadline = now_s() + timeout_s;
  while (!client->connack_) {
    if (now_s() > deadline) return nullptr;
    client->drain();
  }
  return client;
}

MqttClient::~MqttClient() { disconnect(); }

void MqttClient::disconnect() {
  if (fd_ < 0) return;
  send_all(frame(kDisconnect, {}));
  ::close(fd_);
  fd_ = -1;
}

std::uint16_t MqttClient::next_packet_id() {
  if (++packet_id_ == 0) ++packet_id_;
  return packet_id_;
}

bool MqttClient::send_all(const std::vector<std::uint8_t>& bytes) {
  if (fd_ < 0) return false;
  std::size_t sent = 0;
  const double deadline = now_s() + timeout_s_;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n > 0) {
      sent += std::size_t(n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      if (now_s() > deadline) return false;
      pollfd pfd{fd_, POLLOUT, 0};
      ::poll(&pfd, 1, 20);
      continue;
    }
    ::close(fd_);
    fd_ = -1;
    return false;
  }
  return true;
}

void MqttClient::drain() {
  if (fd_ < 0) return;
  pollfd pfd{fd_, POLLIN, 0};
  ::poll(&pfd, 1, 5);
  std::uint8_t buf[4096];
  while (true) {
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n > 0) {
      rx_.insert(rx_.end(), buf, buf + n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
    ::close(fd_);
    fd_ = -1;
    break;
  }
  process_buffer();
}

void MqttClient::process_buffer() {
  while (true) {
    if (rx_.size() < 2) return;
    std::size_t len = 0;
    std::size_t mult = 1;
    std::size_t idx = 1;
    bool complete = false;
    while (idx < rx_.size() && idx <= 4) {
      const std::uint8_t byte = rx_[idx];
      len += std::size_t(byte & 0x7F) * mult;
      mult *= 128;
      ++idx;
      if (!(byte & 0x80)) {
        complete = true;
        break;
      }
    }
    if (!complete || rx_.size() < idx + len) return;
    const std::uint8_t header = rx_[0];
    const std::vector<std::uint8_t> body(rx_.begin() + std::ptrdiff_t(idx),
                                         rx_.begin() + std::ptrdiff_t(idx + len));
    rx_.erase(rx_.begin(), rx_.begin() + std::ptrdiff_t(idx + len));
    handle_packet(header, body);
  }
}

void MqttClient::handle_packet(std::uint8_t header, const std::vector<std::uint8_t>& body) {
  const std::uint8_t type = header & 0xF0;
  if (type == kConnack) {
    if (body.size() >= 2 && body[1] == 0) connack_ = true;
    return;
  }
  if (type == kPuback || type == kSuback) {
    if (body.size() >= 2) {
      acked_ = true;
      acked_type_ = type;
      acked_id_ = std::uint16_t((body[0] << 8) | body[1]);
    }
    return;
  }
  if (type == kPingresp) return;
  if (type == kPublish) {
    const std::uint8_t qos = (header >> 1) & 0x03;
    if (body.size() < 2) return;
    const std::size_t topic_len = std::size_t((body[0] << 8) | body[1]);
    if (body.size() < 2 + topic_len + (qos ? 2 : 0)) return;
    const std::string topic(body.begin() + 2, body.begin() + 2 + std::ptrdiff_t(topic_len));
    std::size_t pos = 2 + topic_len;
    if (qos > 0) {
      const std::uint16_t pid = std::uint16_t((body[pos] << 8) | body[pos + 1]);
      pos += 2;
      std::vector<std::uint8_t> ack;
      put_u16(ack, pid);
      send_all(frame(kPuback, ack));
    }
    const std::string payload(body.begin() + std::ptrdiff_t(pos), body.end());
    for (const auto& [pattern, handler] : subs_) {
      if (telemetry::topic_matches(pattern, topic)) handler(topic, payload);
    }
  }
}

bool MqttClient::wait_for_ack(std::uint8_t type, std::uint16_t packet_id) {
  const double deadline = now_s() + timeout_s_;
  while (true) {
    if (acked_ && acked_type_ == type && acked_id_ == packet_id) {
      acked_ = false;
      return true;
    }
    if (fd_ < 0 || now_s() > deadline) return false;
    drain();
  }
}

bool MqttClient::publish(const std::string& topic, const std::string& payload) {
  if (fd_ < 0) return false;
  const std::uint16_t pid = next_packet_id();
  std::vector<std::uint8_t> body;
  put_string(body, topic);
  put_u16(body, pid);
  body.insert(body.end(), payload.begin(), payload.end());
  if (!send_all(frame(kPublish | 0x02, body))) return false;  // QoS 1
  return wait_for_ack(kPuback, pid);
}

void MqttClient::subscribe(const std::string& pattern, telemetry::MessageHandler handler) {
  subs_.emplace_back(pattern, std::move(handler));
  if (fd_ < 0) throw std::runtime_error("subscribe on a disconnected client");
  const std::uint16_t pid = next_packet_id();
  std::vector<std::uint8_t> body;
  put_u16(body, pid);
  put_string(body, pattern);
  body.push_back(1);  // requested QoS
  if (!send_all(frame(kSubscribe, body)) || !wait_for_ack(kSuback, pid)) {
    throw std::runtime_error("broker refused subscription to " + pattern);
  }
}

void MqttClient::poll() {
  if (fd_ < 0) return;
  drain();
}

}  // namespace portmon::mqtt
