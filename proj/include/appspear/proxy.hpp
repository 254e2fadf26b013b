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

// TOM-side requester proxy toward the TPS. Depending on the configured
// isolation it dispatches directly into the policy server (LPC) or encodes
// frames over a channel (IPC / TEE-sim). The in-proxy decision cache and its
// invalidation handling live here, transparent to the TOM logic.

#ifndef APPSPEAR_PROXY_HPP_
#define APPSPEAR_PROXY_HPP_

#include <atomic>
#include <memory>
#include <optional>

#include "appspear/cache.hpp"
#include "appspear/channel.hpp"
#include "appspear/tps.hpp"
#include "appspear/wire.hpp"

namespace appspear {

/// Typed transport toward the TPS; LPC stays a direct function dispatch.
class TpsTransport {
 public:
  virtual ~TpsTransport() = default;
  virtual Result<wire::AccessDecision> request(const wire::AccessRequest& req) = 0;
  virtual Result<uint64_t> admin(uint64_t id, const TransitionCmd& cmd) = 0;
  virtual Result<void> push_context(uint64_t id, const ContextValue& v) = 0;
  virtual void on_push(PushHandler h) = 0;
};

class LocalTpsTransport : public TpsTransport {
 public:
  LocalTpsTransport(TrustedPolicyServer& tps, LpcHub& hub) : tps_(tps), hub_(hub) {}

  Result<wire::AccessDecision> request(const wire::AccessRequest& req) override {
    return tps_.handle_request(req);
  }
  Result<uint64_t> admin(uint64_t, const TransitionCmd& cmd) override {
    return tps_.handle_admin(cmd);
  }
  Result<void> push_context(uint64_t, const ContextValue& v) override {
    return tps_.handle_context(v);
  }
  void on_push(PushHandler h) override { hub_.add_handler(std::move(h)); }

 private:
  TrustedPolicyServer& tps_;
  LpcHub& hub_;
};

class ChannelTpsTransport : public TpsTransport {
 public:
  explicit ChannelTpsTransport(std::unique_ptr<RequesterChannel> ch)
      : ch_(std::move(ch)) {}

  Result<wire::AccessDecision> request(const wire::AccessRequest& req) override {
    auto resp = ch_->call({wire::MsgType::request, wire::encode(req)});
    if (!resp) return resp.error();
    auto d = wire::decode_access_decision(resp->body);
    if (!d) return Error{Err::transport_failure, "bad decision frame"};
    return *d;
  }

  Result<uint64_t> admin(uint64_t id, const TransitionCmd& cmd) override {
    wire::AdminCmd m{id, cmd};
    auto resp = ch_->call({wire::MsgType::admin, wire::encode(m)});
    if (!resp) return resp.error();
    auto d = wire::decode_access_decision(resp->body);
    if (!d) return Error{Err::transport_failure, "bad admin ack"};
    if (!d->verdict) return Error{d->error, {}};
    return d->epoch;
  }

  Result<void> push_context(uint64_t id, const ContextValue& v) override {
    wire::ContextPush m{id, v};
    auto resp = ch_->call({wire::MsgType::context_push, wire::encode(m)});
    if (!resp) return resp.error();
    auto d = wire::decode_access_decision(resp->body);
    if (!d) return Error{Err::transport_failure, "bad context ack"};
    if (!d->verdict) return Error{d->error, {}};
    return {};
  }

  void on_push(PushHandler h) override { ch_->set_push_handler(std::move(h)); }

  RequesterChannel& channel() { return *ch_; }

 private:
  std::unique_ptr<RequesterChannel> ch_;
};

/// Outcome of one policy consultation as the TOM sees it.
struct Consultation {
  bool verdict = false;
  Err error = Err::none;
  bool from_cache = false;
  uint64_t epoch = 0;
};

class TpsClient {
 public:
  TpsClient(std::unique_ptr<TpsTransport> transport, bool cache_enabled,
            size_t cache_capacity = 0)
      : transport_(std::move(transport)),
        cache_enabled_(cache_enabled),
        cache_(cache_capacity) {
    transport_->on_push([this](const wire::Frame& f) { return handle_push(f); });
  }

  /// One policy consultation: cache first, then the proxy pair. Transport
  /// failures come back as deny-with-error; the caller never executes on
  /// failure.
  Consultation consult(const EntityVec& entities, const OperationId& op,
                       bool contexts_required = false) {
    if (cache_enabled_) {
      CacheKey key{entities, op.name};
      if (auto hit = cache_.lookup(key)) {
        return {*hit, Err::none, true, cache_.last_seen_epoch()};
      }
    }
    wire::AccessRequest req;
    req.request_id = next_id_.fetch_add(1, std::memory_order_relaxed);
    req.entities = entities;
    req.op = op;
    req.contexts_required = contexts_required;
    auto d = transport_->request(req);
    if (!d) return {false, Err::transport_failure, false, 0};
    if (cache_enabled_ && d->cacheable) {
      cache_.insert(CacheKey{entities, op.name}, *d);
    }
    return {d->verdict, d->error, false, d->epoch};
  }

  Result<uint64_t> admin(const TransitionCmd& cmd) {
    return transport_->admin(next_id_.fetch_add(1, std::memory_order_relaxed), cmd);
  }

  Result<void> push_context(const ContextValue& v) {
    return transport_->push_context(next_id_.fetch_add(1, std::memory_order_relaxed), v);
  }

  DecisionCache& cache() { return cache_; }
  bool cache_enabled() const { return cache_enabled_; }
  TpsTransport& transport() { return *transport_; }

 private:
  std::optional<wire::Frame> handle_push(const wire::Frame& f) {
    if (f.type != wire::MsgType::invalidation) return std::nullopt;
    auto n = wire::decode_invalidation(f.body);
    if (!n || n->is_ack) return std::nullopt;
    (void)cache_.invalidate(n->epoch, n->patterns);
    wire::InvalidationNotice ack;
    ack.epoch = n->epoch;
    ack.is_ack = true;
    return wire::Frame{wire::MsgType::invalidation, wire::encode(ack)};
  }

  std::unique_ptr<TpsTransport> transport_;
  bool cache_enabled_;
  DecisionCache cache_;
  std::atomic<uint64_t> next_id_{1};
};

}  // namespace appspear

#endif  // APPSPEAR_PROXY_HPP_
