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

// Requester/responder proxy-pair plumbing shared by all isolation backends.
// A requester channel carries correlated request/response frames and
// delivers responder-initiated pushes (invalidation notices, events) to a
// handler; the responder side dispatches incoming frames into the owning
// component and can broadcast pushes to every connected proxy.

#ifndef APPSPEAR_CHANNEL_HPP_
#define APPSPEAR_CHANNEL_HPP_

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "appspear/common.hpp"
#include "appspear/wire.hpp"

namespace appspear {

/// Handler for responder-initiated frames (invalidation, event). May return
/// a reply frame to send back (the invalidation ack).
using PushHandler = std::function<std::optional<wire::Frame>(const wire::Frame&)>;

class RequesterChannel {
 public:
  virtual ~RequesterChannel() = default;

  /// Sends a request/admin/context frame and blocks until the response with
  /// the matching correlation id arrives.
  virtual Result<wire::Frame> call(wire::Frame f) = 0;

  virtual void set_push_handler(PushHandler h) = 0;
  virtual void close() = 0;
};

/// Responder-side dispatch into the owning component (TPS or a TOM domain).
/// Implementations serialize internally.
class FrameHandler {
 public:
  virtual ~FrameHandler() = default;
  virtual wire::Frame handle_frame(const wire::Frame& f) = 0;
};

/// Push distribution to connected requester proxies. broadcast_confirmed
/// returns only once every live proxy has confirmed (or been declared dead);
/// this is what makes invalidation-before-ack exact.
class Broadcaster {
 public:
  virtual ~Broadcaster() = default;
  virtual void broadcast_confirmed(const wire::Frame& f) = 0;
  virtual size_t connection_count() const = 0;
};

// ---------------------------------------------------------------------------
// LPC backend
// ---------------------------------------------------------------------------

/// In-process push hub. Handlers run synchronously in the broadcasting
/// thread, so delivery is its own confirmation.
class LpcHub : public Broadcaster {
 public:
  void add_handler(PushHandler h) {
    std::lock_guard lk(mu_);
    handlers_.push_back(std::move(h));
  }

  void broadcast_confirmed(const wire::Frame& f) override {
    std::lock_guard lk(mu_);
    for (auto& h : handlers_) (void)h(f);
  }

  size_t connection_count() const override {
    std::lock_guard lk(mu_);
    return handlers_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<PushHandler> handlers_;
};

/// LPC requester: a direct function dispatch into the responder.
class LpcChannel : public RequesterChannel {
 public:
  LpcChannel(FrameHandler& handler, LpcHub* hub = nullptr)
      : handler_(handler), hub_(hub) {}

  Result<wire::Frame> call(wire::Frame f) override {
    return handler_.handle_frame(f);
  }

  void set_push_handler(PushHandler h) override {
    if (hub_ != nullptr) hub_->add_handler(std::move(h));
  }

  void close() override {}

 private:
  FrameHandler& handler_;
  LpcHub* hub_;
};

// ---------------------------------------------------------------------------
// Correlation machinery for remote backends
// ---------------------------------------------------------------------------

/// Maps in-flight request ids to waiting callers. Safe for concurrent
/// callers; a channel failure releases every waiter with TransportFailure.
class PendingMap {
 public:
  struct Waiter {
    std::mutex mu;
    std::condition_variable cv;
    bool ready = false;
    Result<wire::Frame> result{Err::transport_failure};
  };

  std::shared_ptr<Waiter> add(uint64_t id) {
    auto w = std::make_shared<Waiter>();
    std::lock_guard lk(mu_);
    waiters_[id] = w;
    return w;
  }

  void remove(uint64_t id) {
    std::lock_guard lk(mu_);
    waiters_.erase(id);
  }

  /// Delivers a response to its waiter; unmatched ids are dropped.
  void complete(uint64_t id, Result<wire::Frame> result) {
    std::shared_ptr<Waiter> w;
    {
      std::lock_guard lk(mu_);
      auto it = waiters_.find(id);
      if (it == waiters_.end()) return;
      w = it->second;
      waiters_.erase(it);
    }
    std::lock_guard wlk(w->mu);
    w->result = std::move(result);
    w->ready = true;
    w->cv.notify_all();
  }

  void fail_all(const Error& e) {
    std::unordered_map<uint64_t, std::shared_ptr<Waiter>> taken;
    {
      std::lock_guard lk(mu_);
      taken.swap(waiters_);
    }
    for (auto& [id, w] : taken) {
      std::lock_guard wlk(w->mu);
      w->result = e;
      w->ready = true;
      w->cv.notify_all();
    }
  }

  static Result<wire::Frame> wait(Waiter& w) {
    std::unique_lock lk(w.mu);
    w.cv.wait(lk, [&w] { return w.ready; });
    return std::move(w.result);
  }

  template <typename Rep, typename Period>
  static bool wait_for(Waiter& w, std::chrono::duration<Rep, Period> d) {
    std::unique_lock lk(w.mu);
    return w.cv.wait_for(lk, d, [&w] { return w.ready; });
  }

 private:
  std::mutex mu_;
  std::unordered_map<uint64_t, std::shared_ptr<Waiter>> waiters_;
};

}  // namespace appspear

#endif  // APPSPEAR_CHANNEL_HPP_
