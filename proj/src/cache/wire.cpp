#include "cvault/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cvault/errors.hpp"

namespace cvault::wire {

Bytes encode_request(const Request& req) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(kRequestHeaderSize + req.payload.size()));
  w.u8(static_cast<std::uint8_t>(req.op));
  w.raw(req.name);
  w.u8(req.stripe);
  w.raw(req.payload);
  return w.take();
}

Request decode_request(ByteView frame) {
  ByteReader r(frame, "wire request");
  std::uint32_t len = r.u32();
  if (len != r.remaining()) throw ValidationError("wire request: frame length mismatch");
  if (len < kRequestHeaderSize) throw ValidationError("wire request: frame too short");
  Request req;
  std::uint8_t op = r.u8();
  if (op != 1 && op != 2) throw ValidationError("wire request: unknown op " + std::to_string(op));
  req.op = static_cast<Op>(op);
  ByteView name = r.raw(32);
  std::copy(name.begin(), name.end(), req.name.begin());
  req.stripe = r.u8();
  ByteView payload = r.raw(r.remaining());
  if (req.op == Op::get && !payload.empty()) throw ValidationError("wire request: GET carries a payload");
  req.payload.assign(payload.begin(), payload.end());
  return req;
}

Bytes encode_response(const Response& resp) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(resp.status));
  w.u32(static_cast<std::uint32_t>(resp.body.size()));
  w.raw(resp.body);
  return w.take();
}

Response decode_response(ByteView frame) {
  ByteReader r(frame, "wire response");
  Response resp;
  std::uint8_t status = r.u8();
  if (status > 2) throw ValidationError("wire response: unknown status " + std::to_string(status));
  resp.status = static_cast<Status>(status);
  std::uint32_t len = r.u32();
  ByteView body = r.raw(len);
  if (!r.done()) throw ValidationError("wire response: trailing bytes");
  resp.body.assign(body.begin(), body.end());
  return resp;
}

Response handle_request(CacheNode& node, const Request& req) {
  StripeKey key{req.name, req.stripe};
  if (req.op == Op::get) {
    ChunkPtr hit = node.get(key);
    if (!hit) return {Status::not_found, {}};
    return {Status::ok, *hit};
  }
  if (!node.up()) return {Status::error, to_bytes("node down")};
  node.put(key, std::make_shared<const Bytes>(req.payload));
  return {Status::ok, {}};
}

namespace {

bool read_exact(int fd, std::uint8_t* out, std::size_t n) {
  while (n > 0) {
    ssize_t got = ::recv(fd, out, n, 0);
    if (got == 0) return false;
    if (got < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    out += got;
    n -= static_cast<std::size_t>(got);
  }
  return true;
}

bool write_all(int fd, ByteView data) {
  const std::uint8_t* p = data.data();
  std::size_t n = data.size();
  while (n > 0) {
    ssize_t sent = ::send(fd, p, n, MSG_NOSIGNAL);
    if (sent < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += sent;
    n -= static_cast<std::size_t>(sent);
  }
  return true;
}

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

[[noreturn]] void throw_errno(const std::string& what) {
  throw UnavailableError(what + ": " + std::strerror(errno));
}

}  // namespace

NodeServer::NodeServer(CacheNode& node, std::uint16_t port) : node_(node) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw_errno("socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 64) < 0) {
    int saved = errno;
    ::close(listen_fd_);
    errno = saved;
    throw_errno("bind");
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

NodeServer::~NodeServer() { stop(); }

void NodeServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void NodeServer::accept_loop() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void NodeServer::serve(int fd) {
  for (;;) {
    std::uint8_t prefix[4];
    if (!read_exact(fd, prefix, 4)) break;
    std::uint32_t len = le32(prefix);
    Response resp;
    if (len > kMaxFrame) {
      resp = {Status::error, to_bytes("frame too large")};
      write_all(fd, encode_response(resp));
      break;
    }
    Bytes frame(4 + len);
    std::copy(prefix, prefix + 4, frame.begin());
    if (!read_exact(fd, frame.data() + 4, len)) break;
    try {
      resp = handle_request(node_, decode_request(frame));
    } catch (const Error& e) {
      resp = {Status::error, to_bytes(e.what())};
    }
    if (!write_all(fd, encode_response(resp))) break;
  }
  std::lock_guard lock(mu_);
  std::erase(client_fds_, fd);
  ::close(fd);
}

NodeClient::NodeClient(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw_errno("socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw ValidationError("bad IPv4 address '" + host + "'");
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    int saved = errno;
    ::close(fd_);
    errno = saved;
    throw_errno("connect");
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

NodeClient::~NodeClient() {
  if (fd_ >= 0) ::close(fd_);
}

Response NodeClient::call(const Request& req) {
  if (!write_all(fd_, encode_request(req))) throw_errno("send");
  std::uint8_t head[5];
  if (!read_exact(fd_, head, 5)) throw UnavailableError("connection closed by cache node");
  std::uint32_t len = le32(head + 1);
  if (len > kMaxFrame) throw ValidationError("wire response: frame too large");
  Bytes frame(5 + len);
  std::copy(head, head + 5, frame.begin());
  if (!read_exact(fd_, frame.data() + 5, len)) throw UnavailableError("connection closed by cache node");
  return decode_response(frame);
}

std::optional<Bytes> NodeClient::get(const Digest& name, std::uint8_t stripe) {
  Response r = call({Op::get, name, stripe, {}});
  if (r.status == Status::not_found) return std::nullopt;
  if (r.status != Status::ok) throw UnavailableError(std::string(r.body.begin(), r.body.end()));
  return std::move(r.body);
}

void NodeClient::put(const Digest& name, std::uint8_t stripe, ByteView bytes) {
  Response r = call({Op::put, name, stripe, Bytes(bytes.begin(), bytes.end())});
  if (r.status != Status::ok) throw UnavailableError(std::string(r.body.begin(), r.body.end()));
}

}  // namespace cvault::wire
