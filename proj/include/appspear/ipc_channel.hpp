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

// Socket-backed requester/responder proxies. The same machinery serves the
// plain process-isolation (IPC) backend and, with an AEAD codec layered on,
// the TEE-sim backend. Requesters are safe for concurrent callers: a reader
// thread correlates responses by request id and dispatches pushes; when
// shared rings are attached (switchless-style call mode) the calling thread
// polls the completion ring itself instead of paying a socket round trip.

#ifndef APPSPEAR_IPC_CHANNEL_HPP_
#define APPSPEAR_IPC_CHANNEL_HPP_

#include <fcntl.h>
#include <poll.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "appspear/channel.hpp"
#include "appspear/sealing.hpp"
#include "appspear/shm_queue.hpp"
#include "appspear/socket_util.hpp"
#include "appspear/wire.hpp"

namespace appspear {

/// Translates typed frames to packet payloads: the identity for plain IPC,
/// per-message AEAD for the TEE-sim boundary.
class PacketCodec {
 public:
  virtual ~PacketCodec() = default;
  virtual Bytes wrap(ByteSpan frame_bytes) = 0;
  virtual Result<Bytes> unwrap(ByteSpan packet) = 0;
};

class PlainCodec : public PacketCodec {
 public:
  Bytes wrap(ByteSpan b) override { return Bytes(b.begin(), b.end()); }
  Result<Bytes> unwrap(ByteSpan p) override { return Bytes(p.begin(), p.end()); }
};

class AeadCodec : public PacketCodec {
 public:
  explicit AeadCodec(SessionKeys keys) : keys_(keys) {}

  Bytes wrap(ByteSpan b) override { return channel_encrypt(keys_.tx, b); }
  Result<Bytes> unwrap(ByteSpan p) override { return channel_decrypt(keys_.rx, p); }

 private:
  SessionKeys keys_;
};

inline Bytes frame_payload(const wire::Frame& f) {
  Bytes b;
  b.reserve(1 + f.body.size());
  b.push_back(static_cast<uint8_t>(f.type));
  b.insert(b.end(), f.body.begin(), f.body.end());
  return b;
}

inline Result<wire::Frame> parse_frame_payload(Bytes b) {
  if (b.empty() || b[0] < 1 || b[0] > 6) {
    return {Err::malformed_record, "bad frame payload"};
  }
  wire::Frame f;
  f.type = static_cast<wire::MsgType>(b[0]);
  b.erase(b.begin());
  f.body = std::move(b);
  return f;
}

// ---------------------------------------------------------------------------
// Requester
// ---------------------------------------------------------------------------

class SocketChannel : public RequesterChannel {
 public:
  /// scrub_plaintext: zeroize and retain internal plaintext staging after
  /// each send so the untrusted side holds no payload residue (TEE-sim).
  SocketChannel(OwnedFd fd, std::unique_ptr<PacketCodec> codec,
                bool scrub_plaintext = false)
      : fd_(std::move(fd)), codec_(std::move(codec)), scrub_(scrub_plaintext) {}

  ~SocketChannel() override { close(); }

  void attach_rings(ShmRingPair rings) { rings_ = std::move(rings); }

  /// Starts the reader; call once handshaking (if any) is done.
  void start() {
    reader_ = std::thread([this] { reader_loop(); });
  }

  Result<wire::Frame> call(wire::Frame f) override {
    if (dead_.load(std::memory_order_acquire)) {
      return {Err::transport_failure, "channel closed"};
    }
    if (rings_.valid()) return queued_call(f);
    return sync_call(f);
  }

  void set_push_handler(PushHandler h) override {
    std::lock_guard lk(push_mu_);
    push_ = std::move(h);
  }

  void close() override {
    bool was = dead_.exchange(true);
    fd_.shutdown();
    if (reader_.joinable()) reader_.join();
    if (!was) pending_.fail_all({Err::transport_failure, "channel closed"});
    fd_.reset();
  }

  uint64_t queue_saturated_count() const { return queue_saturated_; }

  /// Internal buffers visible to the untrusted side, for residue inspection:
  /// plaintext staging (zeroed after use), last ciphertext packets, and the
  /// shared ring memory.
  std::vector<Bytes> inspect_buffers() {
    std::lock_guard lk(tx_mu_);
    std::vector<Bytes> out{tx_stage_, last_packet_};
    if (rings_.valid()) {
      auto m = rings_.memory();
      out.emplace_back(m.begin(), m.end());
    }
    return out;
  }

 private:
  Result<void> send_frame(const wire::Frame& f) {
    std::lock_guard lk(tx_mu_);
    tx_stage_ = frame_payload(f);
    Bytes packet = codec_->wrap(tx_stage_);
    if (scrub_) {
      sodium_memzero(tx_stage_.data(), tx_stage_.size());
      last_packet_ = packet;
    }
    auto r = send_packet(fd_.get(), packet);
    if (!r) fail("send: " + r.error().detail);
    return r;
  }

  Result<wire::Frame> sync_call(const wire::Frame& f) {
    uint64_t id = wire::peek_correlation_id(f.body);
    auto waiter = pending_.add(id);
    if (auto r = send_frame(f); !r) {
      pending_.remove(id);
      return r.error();
    }
    return PendingMap::wait(*waiter);
  }

  /// Switchless-style path: submit into the shared ring and poll the
  /// completion ring inline. Falls back to the synchronous socket call when
  /// the queue is saturated or the message does not fit a slot.
  Result<wire::Frame> queued_call(const wire::Frame& f) {
    uint64_t id = wire::peek_correlation_id(f.body);
    auto waiter = pending_.add(id);
    bool pushed = false;
    {
      std::lock_guard lk(tx_mu_);
      tx_stage_ = frame_payload(f);
      Bytes packet = codec_->wrap(tx_stage_);
      if (scrub_) sodium_memzero(tx_stage_.data(), tx_stage_.size());
      pushed = rings_.submission().try_push(packet);
    }
    if (!pushed) {
      queue_saturated_++;
      pending_.remove(id);
      return sync_call(f);
    }
    poll_completion_until(*waiter);
    return PendingMap::wait(*waiter);
  }

  void poll_completion_until(PendingMap::Waiter& waiter) {
    Backoff backoff;
    Bytes packet;
    for (;;) {
      {
        std::lock_guard wk(waiter.mu);
        if (waiter.ready) return;
      }
      if (dead_.load(std::memory_order_acquire)) return;
      std::unique_lock lk(comp_mu_, std::try_to_lock);
      if (!lk.owns_lock()) {
        // Another caller is draining; it will complete us.
        if (PendingMap::wait_for(waiter, std::chrono::microseconds(200))) return;
        continue;
      }
      if (rings_.completion().try_pop(packet)) {
        backoff.reset();
        auto fb = codec_->unwrap(packet);
        if (!fb) {
          fail("ring payload tamper");
          return;
        }
        auto fr = parse_frame_payload(std::move(*fb));
        if (!fr) {
          fail("ring payload malformed");
          return;
        }
        uint64_t rid = wire::peek_correlation_id(fr->body);
        pending_.complete(rid, std::move(*fr));
      } else {
        backoff.pause();
      }
    }
  }

  void reader_loop() {
    for (;;) {
      auto packet = recv_packet(fd_.get());
      if (!packet) break;
      auto fb = codec_->unwrap(*packet);
      if (!fb) break;
      auto fr = parse_frame_payload(std::move(*fb));
      if (!fr) break;
      if (fr->type == wire::MsgType::decision) {
        uint64_t id = wire::peek_correlation_id(fr->body);
        pending_.complete(id, std::move(*fr));
      } else if (fr->type == wire::MsgType::invalidation ||
                 fr->type == wire::MsgType::event) {
        std::optional<wire::Frame> reply;
        {
          std::lock_guard lk(push_mu_);
          if (push_) reply = push_(*fr);
        }
        if (reply) (void)send_frame(*reply);
      } else {
        break;  // protocol violation
      }
    }
    fail("peer closed");
  }

  void fail(const std::string& why) {
    if (!dead_.exchange(true)) {
      pending_.fail_all({Err::transport_failure, why});
    }
  }

  OwnedFd fd_;
  std::unique_ptr<PacketCodec> codec_;
  bool scrub_;
  std::atomic<bool> dead_{false};
  std::atomic<uint64_t> queue_saturated_{0};

  std::mutex tx_mu_;
  Bytes tx_stage_;
  Bytes last_packet_;

  std::mutex comp_mu_;
  ShmRingPair rings_;

  std::mutex push_mu_;
  PushHandler push_;

  PendingMap pending_;
  std::thread reader_;
};

// ---------------------------------------------------------------------------
// Responder host
// ---------------------------------------------------------------------------

/// Per-connection state the setup hook hands back: the codec plus an
/// optional auxiliary loop (the TEE worker's ring poller).
struct ConnSetupResult {
  std::unique_ptr<PacketCodec> codec;
  std::function<void(std::atomic<bool>& stop)> aux_loop;
};

using ConnSetup = std::function<Result<ConnSetupResult>(int fd)>;

inline ConnSetup plain_conn_setup() {
  return [](int) -> Result<ConnSetupResult> {
    return ConnSetupResult{std::make_unique<PlainCodec>(), {}};
  };
}

/// Accepts requester connections on a local domain socket, dispatches their
/// frames into the owning component's handler, and distributes confirmed
/// pushes (invalidation notices) to every live connection.
class SocketResponderHost : public Broadcaster {
 public:
  SocketResponderHost(std::string path, FrameHandler& handler, ConnSetup setup)
      : path_(std::move(path)), handler_(handler), setup_(std::move(setup)) {}

  ~SocketResponderHost() override { stop(); }

  Result<void> start() {
    auto fd = unix_listen(path_);
    if (!fd) return fd.error();
    listener_ = std::move(*fd);
    int wake[2];
    if (::pipe2(wake, O_CLOEXEC) != 0) {
      return {Err::backend_unavailable, "pipe"};
    }
    wake_rd_ = OwnedFd(wake[0]);
    wake_wr_ = OwnedFd(wake[1]);
    acceptor_ = std::thread([this] { accept_loop(); });
    return {};
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    // accept() does not reliably unblock on shutdown; poke the wake pipe.
    if (wake_wr_.valid()) {
      uint8_t b = 1;
      (void)!::write(wake_wr_.get(), &b, 1);
    }
    if (acceptor_.joinable()) acceptor_.join();
    listener_.reset();
    ::unlink(path_.c_str());
    std::vector<std::unique_ptr<Conn>> conns;
    {
      std::lock_guard lk(conns_mu_);
      conns.swap(conns_);
    }
    for (auto& c : conns) shutdown_conn(*c);
  }

  /// Sends the frame to every live connection and waits until each one has
  /// confirmed the epoch it carries (or died). Only invalidation frames are
  /// broadcast with confirmation.
  void broadcast_confirmed(const wire::Frame& f) override {
    uint64_t epoch = 0;
    if (f.type == wire::MsgType::invalidation) {
      auto n = wire::decode_invalidation(f.body);
      if (n) epoch = n->epoch;
    }
    std::vector<Conn*> live;
    {
      std::lock_guard lk(conns_mu_);
      for (auto& c : conns_) {
        if (!c->dead.load()) live.push_back(c.get());
      }
    }
    for (Conn* c : live) {
      if (!send_to(*c, f)) c->dead.store(true);
    }
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
    for (Conn* c : live) {
      std::unique_lock lk(c->ack_mu);
      bool ok = c->ack_cv.wait_until(lk, deadline, [c, epoch] {
        return c->dead.load() || c->acked_epoch >= epoch;
      });
      if (!ok) c->dead.store(true);  // unresponsive proxy loses its cache
    }
  }

  size_t connection_count() const override {
    std::lock_guard lk(conns_mu_);
    size_t n = 0;
    for (const auto& c : conns_) {
      if (!c->dead.load()) n++;
    }
    return n;
  }

  const std::string& path() const { return path_; }

 private:
  struct Conn {
    OwnedFd fd;
    std::unique_ptr<PacketCodec> codec;
    std::mutex tx_mu;
    std::thread reader;
    std::thread aux;
    std::atomic<bool> dead{false};
    std::atomic<bool> stop_aux{false};
    std::mutex ack_mu;
    std::condition_variable ack_cv;
    uint64_t acked_epoch = 0;
  };

  void accept_loop() {
    for (;;) {
      pollfd fds[2] = {{listener_.get(), POLLIN, 0}, {wake_rd_.get(), POLLIN, 0}};
      int pr = ::poll(fds, 2, -1);
      if (pr < 0) {
        if (errno == EINTR) continue;
        break;
      }
      if ((fds[1].revents & POLLIN) != 0) break;  // stop() poked the pipe
      if ((fds[0].revents & POLLIN) == 0) continue;
      int cfd = ::accept(listener_.get(), nullptr, nullptr);
      if (cfd < 0) {
        if (errno == EINTR) continue;
        break;
      }
      auto setup = setup_(cfd);
      if (!setup) {
        ::close(cfd);
        continue;
      }
      auto conn = std::make_unique<Conn>();
      conn->fd = OwnedFd(cfd);
      conn->codec = std::move(setup->codec);
      Conn* c = conn.get();
      if (setup->aux_loop) {
        auto loop = std::move(setup->aux_loop);
        c->aux = std::thread([c, loop = std::move(loop)] { loop(c->stop_aux); });
      }
      c->reader = std::thread([this, c] { conn_loop(*c); });
      std::lock_guard lk(conns_mu_);
      conns_.push_back(std::move(conn));
    }
  }

  void conn_loop(Conn& c) {
    for (;;) {
      auto packet = recv_packet(c.fd.get());
      if (!packet) break;
      auto fb = c.codec->unwrap(*packet);
      if (!fb) break;
      auto fr = parse_frame_payload(std::move(*fb));
      if (!fr) break;
      if (fr->type == wire::MsgType::invalidation) {
        auto n = wire::decode_invalidation(fr->body);
        if (n && n->is_ack) {
          std::lock_guard lk(c.ack_mu);
          if (n->epoch > c.acked_epoch) c.acked_epoch = n->epoch;
          c.ack_cv.notify_all();
          continue;
        }
      }
      wire::Frame resp = handler_.handle_frame(*fr);
      if (!send_to(c, resp)) break;
    }
    c.dead.store(true);
    c.stop_aux.store(true);
    {
      std::lock_guard lk(c.ack_mu);
      c.ack_cv.notify_all();
    }
  }

  bool send_to(Conn& c, const wire::Frame& f) {
    std::lock_guard lk(c.tx_mu);
    Bytes packet = c.codec->wrap(frame_payload(f));
    return static_cast<bool>(send_packet(c.fd.get(), packet));
  }

  void shutdown_conn(Conn& c) {
    c.stop_aux.store(true);
    c.fd.shutdown();
    if (c.reader.joinable()) c.reader.join();
    if (c.aux.joinable()) c.aux.join();
    c.fd.reset();
  }

  std::string path_;
  FrameHandler& handler_;
  ConnSetup setup_;
  OwnedFd listener_;
  OwnedFd wake_rd_, wake_wr_;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};
  mutable std::mutex conns_mu_;
  std::vector<std::unique_ptr<Conn>> conns_;
};

/// Plain IPC requester connection.
inline Result<std::unique_ptr<SocketChannel>> connect_ipc(const std::string& path) {
  auto fd = unix_connect(path);
  if (!fd) return fd.error();
  auto ch = std::make_unique<SocketChannel>(std::move(*fd),
                                            std::make_unique<PlainCodec>());
  ch->start();
  return ch;
}

}  // namespace appspear

#endif  // APPSPEAR_IPC_CHANNEL_HPP_
