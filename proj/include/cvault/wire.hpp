#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cvault/bytes.hpp"
#include "cvault/tiered_cache.hpp"

namespace cvault::wire {

// Request frame: u32-LE body length, then op u8, name[32], stripe u8 and,
// for PUT, the stripe bytes.
// Response: status u8, u32-LE length, bytes.

enum class Op : std::uint8_t { get = 1, put = 2 };
enum class Status : std::uint8_t { ok = 0, not_found = 1, error = 2 };

constexpr std::size_t kRequestHeaderSize = 1 + 32 + 1;
constexpr std::uint32_t kMaxFrame = 64u << 20;

struct Request {
  Op op = Op::get;
  Digest name{};
  std::uint8_t stripe = 0;
  Bytes payload;
  bool operator==(const Request&) const = default;
};

struct Response {
  Status status = Status::ok;
  Bytes body;
  bool operator==(const Response&) const = default;
};

Bytes encode_request(const Request& req);
// Parses one complete frame (length prefix included). Throws ValidationError.
Request decode_request(ByteView frame);
Bytes encode_response(const Response& resp);
Response decode_response(ByteView frame);

// Serves one request against a cache node.
Response handle_request(CacheNode& node, const Request& req);

// Blocking TCP server on 127.0.0.1 exposing one CacheNode. Each connection
// may carry any number of request/response exchanges.
class NodeServer {
 public:
  // port 0 picks an ephemeral port.
  NodeServer(CacheNode& node, std::uint16_t port = 0);
  ~NodeServer();
  NodeServer(const NodeServer&) = delete;
  NodeServer& operator=(const NodeServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  CacheNode& node_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

class NodeClient {
 public:
  NodeClient(const std::string& host, std::uint16_t port);
  ~NodeClient();
  NodeClient(const NodeClient&) = delete;
  NodeClient& operator=(const NodeClient&) = delete;

  Response call(const Request& req);
  std::optional<Bytes> get(const Digest& name, std::uint8_t stripe);
  void put(const Digest& name, std::uint8_t stripe, ByteView bytes);

 private:
  int fd_ = -1;
};

}  // namespace cvault::wire
