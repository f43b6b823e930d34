#pragma once

// Minimal in-process MQTT 3.1.1 broker for exercising the real client over
// real sockets: CONNECT/CONNACK, SUBSCRIBE/SUBACK, QoS 0/1 PUBLISH routing,
// PINGREQ. No retained messages, no persistence, no redelivery.

#include <atomic>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <portmon/telemetry.hpp>

namespace testsup {

class MiniBroker {
 public:
  MiniBroker() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("broker: socket failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listen_fd_, 8) != 0) {
      ::close(listen_fd_);
      throw std::runtime_error("broker: bind/listen failed");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  ~MiniBroker() { stop(); }
  MiniBroker(const MiniBroker&) = delete;
  MiniBroker& operator=(const MiniBroker&) = delete;

  int port() const { return port_; }
  std::size_t forwarded() const { return forwarded_.load(); }

  void stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::shared_ptr<Conn>> conns;
    {
      const std::lock_guard<std::mutex> lock(mu_);
      conns = conns_;
    }
    for (const auto& c : conns) ::shutdown(c->fd, SHUT_RDWR);
    for (const auto& c : conns) {
      if (c->thread.joinable()) c->thread.join();
    }
  }

 private:
  struct Conn {
    int fd = -1;
    std::thread thread;
    std::mutex write_mu;
  };

  void accept_loop() {
    for (;;) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) return;
      auto conn = std::make_shared<Conn>();
      conn->fd = fd;
      {
        const std::lock_guard<std::mutex> lock(mu_);
        conns_.push_back(conn);
      }
      conn->thread = std::thread([this, conn] { serve(conn); });
    }
  }

  bool recv_exact(int fd, std::uint8_t* buf, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      const ssize_t r = ::recv(fd, buf + got, n - got, 0);
      if (r <= 0) return false;
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

  bool recv_varint(int fd, std::uint32_t& value) {
    value = 0;
    std::uint32_t mult = 1;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t b = 0;
      if (!recv_exact(fd, &b, 1)) return false;
      value += (b & 0x7F) * mult;
      if ((b & 0x80) == 0) return true;
      mult *= 128;
    }
    return false;
  }

  void send_packet(const std::shared_ptr<Conn>& conn, std::uint8_t header,
                   const std::vector<std::uint8_t>& body) {
    std::vector<std::uint8_t> out;
    out.push_back(header);
    std::uint32_t rem = static_cast<std::uint32_t>(body.size());
    do {
      std::uint8_t b = rem % 128;
      rem /= 128;
      if (rem > 0) b |= 0x80;
      out.push_back(b);
    } while (rem > 0);
    out.insert(out.end(), body.begin(), body.end());
    const std::lock_guard<std::mutex> lock(conn->write_mu);
    std::size_t sent = 0;
    while (sent < out.size()) {
      const ssize_t r = ::send(conn->fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
      if (r <= 0) return;
      sent += static_cast<std::size_t>(r);
    }
  }

  static void put_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x & 0xFF));
  }

  void route(const std::string& topic, const std::string& payload) {
    std::vector<std::pair<std::shared_ptr<Conn>, std::string>> targets;
    {
      const std::lock_guard<std::mutex> lock(mu_);
      for (const auto& sub : subs_) {
        if (portmon::telemetry::topic_matches(sub.second, topic)) {
          targets.emplace_back(sub.first, sub.second);
        }
      }
    }
    for (const auto& [conn, pattern] : targets) {
      (void)pattern;
      std::vector<std::uint8_t> body;
      put_u16(body, static_cast<std::uint16_t>(topic.size()));
      body.insert(body.end(), topic.begin(), topic.end());
      put_u16(body, next_pid_.fetch_add(1) % 65535 + 1);
      body.insert(body.end(), payload.begin(), payload.end());
      send_packet(conn, 0x32, body);  // PUBLISH QoS 1
      forwarded_.fetch_add(1);
    }
  }

  void serve(const std::shared_ptr<Conn>& conn) {
    for (;;) {
      std::uint8_t header = 0;
      if (!recv_exact(conn->fd, &header, 1)) break;
      std::uint32_t rem = 0;
      if (!recv_varint(conn->fd, rem)) break;
      std::vector<std::uint8_t> body(rem);
      if (rem > 0 && !recv_exact(conn->fd, body.data(), rem)) break;

      const std::uint8_t type = header >> 4;
      if (type == 1) {  // CONNECT
        send_packet(conn, 0x20, {0x00, 0x00});
      } else if (type == 8) {  // SUBSCRIBE
        if (body.size() < 2) break;
        const std::uint16_t pid = (body[0] << 8) | body[1];
        std::vector<std::uint8_t> ack;
        put_u16(ack, pid);
        std::size_t pos = 2;
        while (pos + 2 <= body.size()) {
          const std::uint16_t tlen = (body[pos] << 8) | body[pos + 1];
          pos += 2;
          if (pos + tlen + 1 > body.size()) break;
          const std::string pattern(body.begin() + pos, body.begin() + pos + tlen);
          pos += tlen + 1;  // skip requested qos
          {
            const std::lock_guard<std::mutex> lock(mu_);
            subs_.emplace_back(conn, pattern);
          }
          ack.push_back(0x01);
        }
        send_packet(conn, 0x90, ack);
      } else if (type == 3) {  // PUBLISH
        const int qos = (header >> 1) & 0x3;
        if (body.size() < 2) break;
        const std::uint16_t tlen = (body[0] << 8) | body[1];
        std::size_t pos = 2 + tlen;
        if (pos > body.size()) break;
        const std::string topic(body.begin() + 2, body.begin() + pos);
        if (qos > 0) {
          if (pos + 2 > body.size()) break;
          const std::uint16_t pid = (body[pos] << 8) | body[pos + 1];
          pos += 2;
          std::vector<std::uint8_t> ack;
          put_u16(ack, pid);
          send_packet(conn, 0x40, ack);  // PUBACK
        }
        route(topic, std::string(body.begin() + pos, body.end()));
      } else if (type == 12) {  // PINGREQ
        send_packet(conn, 0xD0, {});
      } else if (type == 14) {  // DISCONNECT
        break;
      }
      // PUBACK (type 4) from subscribers is read and dropped.
    }
    {
      const std::lock_guard<std::mutex> lock(mu_);
      for (auto it = subs_.begin(); it != subs_.end();) {
        it = (it->first == conn) ? subs_.erase(it) : std::next(it);
      }
    }
    ::close(conn->fd);
  }

  int listen_fd_ = -1;
  int port_ = 0;
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::shared_ptr<Conn>> conns_;
  std::vector<std::pair<std::shared_ptr<Conn>, std::string>> subs_;
  std::atomic<std::uint16_t> next_pid_{1};
  std::atomic<std::size_t> forwarded_{0};
  std::atomic<bool> stopping_{false};
};

}  // namespace testsup
