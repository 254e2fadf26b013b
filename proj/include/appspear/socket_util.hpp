/*
 * Copyright 2026 The AppSPEAR Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef APPSPEAR_SOCKET_UTIL_HPP_
#define APPSPEAR_SOCKET_UTIL_HPP_

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <string>
#include <thread>

#include "appspear/common.hpp"

namespace appspear {

class OwnedFd {
 public:
  OwnedFd() = default;
  explicit OwnedFd(int fd) : fd_(fd) {}
  ~OwnedFd() { reset(); }

  OwnedFd(OwnedFd&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  OwnedFd& operator=(OwnedFd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  OwnedFd(const OwnedFd&) = delete;
  OwnedFd& operator=(const OwnedFd&) = delete;

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void reset() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  /// Shuts down both directions so blocked reads in other threads return.
  void shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

inline Result<OwnedFd> unix_listen(const std::string& path, int backlog = 16) {
  OwnedFd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd.valid()) return {Err::backend_unavailable, "socket: " + std::string(strerror(errno))};
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) {
    return {Err::backend_unavailable, "socket path too long: " + path};
  }
  std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
  ::unlink(path.c_str());
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    return {Err::backend_unavailable, "bind " + path + ": " + strerror(errno)};
  }
  if (::listen(fd.get(), backlog) != 0) {
    return {Err::backend_unavailable, "listen " + path + ": " + strerror(errno)};
  }
  return fd;
}

/// Connects with retry so a requester can race the responder's startup.
inline Result<OwnedFd> unix_connect(const std::string& path,
                                    std::chrono::milliseconds timeout =
                                        std::chrono::milliseconds(5000)) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    OwnedFd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd.valid()) return {Err::backend_unavailable, strerror(errno)};
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof(addr.sun_path)) {
      return {Err::backend_unavailable, "socket path too long: " + path};
    }
    std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
      return fd;
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      return {Err::backend_unavailable, "connect " + path + ": " + strerror(errno)};
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

inline Result<void> write_all(int fd, const uint8_t* p, size_t n) {
  while (n > 0) {
    ssize_t w = ::write(fd, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      return {Err::transport_failure, "write: " + std::string(strerror(errno))};
    }
    p += w;
    n -= static_cast<size_t>(w);
  }
  return {};
}

inline Result<void> read_all(int fd, uint8_t* p, size_t n) {
  while (n > 0) {
    ssize_t r = ::read(fd, p, n);
    if (r < 0) {
      if (errno == EINTR) continue;
      return {Err::transport_failure, "read: " + std::string(strerror(errno))};
    }
    if (r == 0) return {Err::transport_failure, "peer closed"};
    p += r;
    n -= static_cast<size_t>(r);
  }
  return {};
}

/// Packets are u32 length-prefixed byte blobs; the typed frame layer sits on
/// top (plain or encrypted, depending on the backend).
inline Result<void> send_packet(int fd, ByteSpan payload) {
  if (payload.size() > (64u << 20)) return {Err::transport_failure, "packet too large"};
  uint8_t hdr[4];
  uint32_t n = static_cast<uint32_t>(payload.size());
  for (int i = 0; i < 4; i++) hdr[i] = static_cast<uint8_t>(n >> (8 * i));
  if (auto r = write_all(fd, hdr, 4); !r) return r;
  return write_all(fd, payload.data(), payload.size());
}

inline Result<Bytes> recv_packet(int fd) {
  uint8_t hdr[4];
  if (auto r = read_all(fd, hdr, 4); !r) return r.error();
  uint32_t n = 0;
  for (int i = 0; i < 4; i++) n |= static_cast<uint32_t>(hdr[i]) << (8 * i);
  if (n > (64u << 20)) return {Err::transport_failure, "packet too large"};
  Bytes out(n);
  if (n > 0) {
    if (auto r = read_all(fd, out.data(), n); !r) return r.error();
  }
  return out;
}

}  // namespace appspear

#endif  // APPSPEAR_SOCKET_UTIL_HPP_
