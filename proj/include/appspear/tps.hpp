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

// Trusted policy server: the policy runtime environment. One serialized
// decision/transition loop owns the policy state exclusively; transport
// responders may accept connections concurrently but funnel every request
// through this loop. Every error path yields a deny (fail-closed), and a
// transition's invalidation notices are confirmed by all connected proxies
// before its ack returns.

#ifndef APPSPEAR_TPS_HPP_
#define APPSPEAR_TPS_HPP_

#include <sodium.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "appspear/bootstrap.hpp"
#include "appspear/channel.hpp"
#include "appspear/policy.hpp"
#include "appspear/sealing.hpp"
#include "appspear/tep.hpp"
#include "appspear/wire.hpp"

namespace appspear {

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Integrity-checked persistence blob: a canonical state snapshot or the
/// transition list accumulated since the last snapshot.
struct PersistenceRecord {
  enum class Strategy : uint8_t { snapshot = 0, diff_log = 1 };

  Strategy strategy = Strategy::snapshot;
  Bytes payload;
  std::array<uint8_t, 32> checksum{};

  static std::array<uint8_t, 32> digest(Strategy s, ByteSpan payload) {
    std::array<uint8_t, 32> out{};
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, out.size());
    uint8_t tag = static_cast<uint8_t>(s);
    crypto_generichash_update(&st, &tag, 1);
    crypto_generichash_update(&st, payload.data(), payload.size());
    crypto_generichash_final(&st, out.data(), out.size());
    return out;
  }

  static PersistenceRecord make(Strategy s, Bytes payload) {
    PersistenceRecord rec;
    rec.strategy = s;
    rec.payload = std::move(payload);
    rec.checksum = digest(s, rec.payload);
    return rec;
  }

  Result<void> verify() const {
    if (digest(strategy, payload) != checksum) {
      return {Err::checksum_mismatch, "persistence record"};
    }
    return {};
  }

  Bytes encode() const {
    wire::Writer w;
    w.u8(static_cast<uint8_t>(strategy));
    w.bytes(payload);
    w.raw({checksum.data(), checksum.size()});
    return w.take();
  }

  static Result<PersistenceRecord> decode(ByteSpan b) {
    if (b.size() < 1 + 4 + 32) return {Err::malformed_record, "record too short"};
    PersistenceRecord rec;
    uint8_t s = b[0];
    if (s > 1) return {Err::malformed_record, "record strategy"};
    rec.strategy = static_cast<Strategy>(s);
    wire::Reader r(b.subspan(1, b.size() - 1 - 32));
    rec.payload = r.bytes();
    if (!r.done()) return {Err::malformed_record, "record payload"};
    std::memcpy(rec.checksum.data(), b.data() + b.size() - 32, 32);
    return rec;
  }
};

struct TpsOptions {
  /// Directory for persistent policy state; empty disables persistence.
  std::string persist_dir;
  /// A fresh snapshot is taken after this many transitions; the diff log is
  /// written on every transition.
  size_t snapshot_every = 100;
  bool audit_decisions = false;
  /// When set (TEE-sim domains), persistence records are sealed before they
  /// leave the trusted component and unsealed on restore.
  std::shared_ptr<Sealer> sealer;
};

class TrustedPolicyServer : public FrameHandler {
 public:
  explicit TrustedPolicyServer(Bootstrap bootstrap, TpsOptions opts = {},
                               TrustedEventProcessor* tep = nullptr)
      : opts_(std::move(opts)),
        tep_(tep),
        state_(std::move(bootstrap.state)),
        ops_(std::move(bootstrap.ops)),
        risk_(std::move(bootstrap.risk)) {
    if (!opts_.persist_dir.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(opts_.persist_dir, ec);
      try_restore_from_disk();
    }
    diff_base_epoch_ = state_.epoch;
  }

  // ------------------------------------------------------------------
  // Core operations (serialized)
  // ------------------------------------------------------------------

  wire::AccessDecision handle_request(const wire::AccessRequest& req) {
    std::lock_guard lk(loop_);
    requests_received_.fetch_add(1, std::memory_order_relaxed);

    // Synthetic always-allow policy: the minimal decision path.
    if (state_.allow_all) {
      auto v = evaluate_acf(state_, {req.entities.data(), req.entities.size()},
                            req.op);
      return finish(req, v, /*cacheable=*/true);
    }

    auto reg = ops_.find(req.op.name);
    if (reg == ops_.end()) {
      return finish(req, Result<bool>{Err::unknown_operation, req.op.name}, false);
    }
    const OpInfo& info = reg->second;
    if (info.arity != req.op.arity) {
      return finish(req, Result<bool>{Err::arity_mismatch, req.op.name}, false);
    }
    OperationId op{req.op.name, info.arity};
    std::span<const EntityId> entities{req.entities.data(), req.entities.size()};

    if (info.context_required) {
      if (tep_ == nullptr) {
        return finish(req, Result<bool>{Err::unknown_context_variable, "no TEP"}, false);
      }
      auto ctx = tep_->gather(risk_);
      if (!ctx) return finish(req, Result<bool>{ctx.error()}, false);
      auto v = evaluate_context_acf(state_, entities, *ctx, op, risk_);
      // Context-dependent decisions are never cacheable: context drifts
      // without a policy-state transition.
      return finish(req, v, /*cacheable=*/false);
    }
    auto v = evaluate_acf(state_, entities, op);
    return finish(req, v, /*cacheable=*/true);
  }

  /// Applies a transition; on success the invalidation notice is broadcast
  /// and confirmed by every connected proxy before this returns. Returns the
  /// new epoch.
  Result<uint64_t> handle_admin(const TransitionCmd& cmd) {
    std::lock_guard lk(loop_);
    auto r = apply_transition(state_, cmd);
    if (!r) return r.error();
    state_ = std::move(r->next);
    transitions_applied_++;
    persist_after_transition(cmd);

    wire::InvalidationNotice notice;
    notice.epoch = state_.epoch;
    notice.patterns = std::move(r->invalidated);
    wire::Frame f{wire::MsgType::invalidation, wire::encode(notice)};
    for (Broadcaster* b : broadcasters_) b->broadcast_confirmed(f);
    return state_.epoch;
  }

  Result<void> handle_context(const ContextValue& v) {
    std::lock_guard lk(loop_);
    if (tep_ == nullptr) return {Err::unknown_provider, v.name};
    return tep_->push_context(v);
  }

  // ------------------------------------------------------------------
  // Persistence
  // ------------------------------------------------------------------

  PersistenceRecord persist_state(PersistenceRecord::Strategy strategy) {
    std::lock_guard lk(loop_);
    return persist_locked(strategy);
  }

  static Result<PolicyState> restore_state(const PersistenceRecord& rec) {
    if (auto v = rec.verify(); !v) return v.error();
    if (rec.strategy != PersistenceRecord::Strategy::snapshot) {
      return {Err::malformed_record, "diff log needs a base snapshot"};
    }
    return wire::decode_state(rec.payload);
  }

  /// Snapshot plus diff log: replays the logged transitions onto the
  /// snapshot state.
  static Result<PolicyState> restore_state(const PersistenceRecord& snapshot,
                                           const PersistenceRecord& diff_log) {
    auto base = restore_state(snapshot);
    if (!base) return base;
    if (auto v = diff_log.verify(); !v) return v.error();
    if (diff_log.strategy != PersistenceRecord::Strategy::diff_log) {
      return {Err::malformed_record, "not a diff log"};
    }
    wire::Reader r(diff_log.payload);
    uint64_t base_epoch = r.u64();
    if (!r.ok() || base_epoch != base->epoch) {
      return {Err::malformed_record, "diff log base epoch mismatch"};
    }
    uint32_t n = r.u32();
    PolicyState state = std::move(*base);
    for (uint32_t i = 0; i < n; i++) {
      auto cmd = wire::decode_transition(r);
      if (!cmd) return cmd.error();
      auto applied = apply_transition(state, *cmd);
      if (!applied) {
        return {Err::malformed_record, "diff log replay: " + applied.error().message()};
      }
      state = std::move(applied->next);
    }
    if (!r.done()) return {Err::malformed_record, "diff log trailing bytes"};
    return state;
  }

  // ------------------------------------------------------------------
  // Wiring and introspection
  // ------------------------------------------------------------------

  void add_broadcaster(Broadcaster* b) {
    std::lock_guard lk(loop_);
    broadcasters_.push_back(b);
  }

  uint64_t epoch() const {
    std::lock_guard lk(loop_);
    return state_.epoch;
  }

  PolicyState state_copy() const {
    std::lock_guard lk(loop_);
    return state_;
  }

  const OperationRegistry& ops() const { return ops_; }
  const RiskPolicy& risk() const { return risk_; }
  TrustedEventProcessor* tep() const { return tep_; }

  uint64_t requests_received() const {
    return requests_received_.load(std::memory_order_relaxed);
  }
  uint64_t transitions_applied() const { return transitions_applied_; }

  // ------------------------------------------------------------------
  // FrameHandler: the responder-side dispatch for remote proxies
  // ------------------------------------------------------------------

  wire::Frame handle_frame(const wire::Frame& f) override {
    using wire::MsgType;
    uint64_t id = wire::peek_correlation_id(f.body);
    switch (f.type) {
      case MsgType::request: {
        auto req = wire::decode_access_request(f.body);
        if (!req) return deny_frame(id, Err::malformed_record);
        return {MsgType::decision, wire::encode(handle_request(*req))};
      }
      case MsgType::admin: {
        auto cmd = wire::decode_admin_cmd(f.body);
        if (!cmd) return deny_frame(id, Err::malformed_record);
        auto r = handle_admin(cmd->cmd);
        wire::AccessDecision ack;
        ack.request_id = id;
        ack.verdict = r.ok();
        ack.epoch = r.ok() ? *r : epoch();
        ack.cacheable = false;
        ack.error = r.code();
        return {MsgType::decision, wire::encode(ack)};
      }
      case MsgType::context_push: {
        auto push = wire::decode_context_push(f.body);
        if (!push) return deny_frame(id, Err::malformed_record);
        auto r = handle_context(push->value);
        wire::AccessDecision ack;
        ack.request_id = id;
        ack.verdict = r.ok();
        ack.epoch = epoch();
        ack.cacheable = false;
        ack.error = r.code();
        return {MsgType::decision, wire::encode(ack)};
      }
      default:
        return deny_frame(id, Err::malformed_record);
    }
  }

 private:
  wire::Frame deny_frame(uint64_t id, Err e) {
    wire::AccessDecision d;
    d.request_id = id;
    d.verdict = false;
    d.epoch = epoch();
    d.cacheable = false;
    d.error = e;
    return {wire::MsgType::decision, wire::encode(d)};
  }

  /// Folds evaluation outcome plus errors into the fail-closed decision and
  /// emits the audit event.
  wire::AccessDecision finish(const wire::AccessRequest& req,
                              const Result<bool>& v, bool cacheable) {
    wire::AccessDecision d;
    d.request_id = req.request_id;
    d.verdict = v.ok() && *v;
    d.epoch = state_.epoch;
    d.cacheable = v.ok() ? cacheable : false;
    d.error = v.code();
    if (opts_.audit_decisions && tep_ != nullptr) {
      wire::EventRecord ev;
      ev.request_id = req.request_id;
      ev.op = req.op.name;
      ev.entities.assign(req.entities.begin(), req.entities.end());
      ev.verdict = d.verdict;
      ev.epoch = d.epoch;
      ev.timestamp = static_cast<uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(
              std::chrono::steady_clock::now().time_since_epoch())
              .count());
      tep_->record_event(std::move(ev));
    }
    return d;
  }

  PersistenceRecord persist_locked(PersistenceRecord::Strategy strategy) {
    if (strategy == PersistenceRecord::Strategy::snapshot) {
      return PersistenceRecord::make(strategy, wire::encode_state(state_));
    }
    wire::Writer w;
    w.u64(diff_base_epoch_);
    w.u32(static_cast<uint32_t>(pending_diff_.size()));
    for (const TransitionCmd& cmd : pending_diff_) wire::encode_transition(w, cmd);
    return PersistenceRecord::make(strategy, w.take());
  }

  void persist_after_transition(const TransitionCmd& cmd) {
    pending_diff_.push_back(cmd);
    bool rotate = pending_diff_.size() >= opts_.snapshot_every;
    if (rotate && !opts_.persist_dir.empty()) {
      write_record(snap_path(), persist_locked(PersistenceRecord::Strategy::snapshot));
    }
    if (rotate) {
      pending_diff_.clear();
      diff_base_epoch_ = state_.epoch;
    }
    if (!opts_.persist_dir.empty()) {
      write_record(log_path(), persist_locked(PersistenceRecord::Strategy::diff_log));
    }
  }

  void try_restore_from_disk() {
    auto snap = read_record(snap_path());
    if (!snap) return;
    auto log = read_record(log_path());
    Result<PolicyState> restored =
        log ? restore_state(*snap, *log) : restore_state(*snap);
    if (restored) {
      state_ = std::move(*restored);
      diff_base_epoch_ = state_.epoch;
    }
  }

  std::string snap_path() const { return opts_.persist_dir + "/policy.snap"; }
  std::string log_path() const { return opts_.persist_dir + "/policy.log"; }

  void write_record(const std::string& path, const PersistenceRecord& rec) const {
    Bytes enc = rec.encode();
    if (opts_.sealer) enc = opts_.sealer->seal(enc).encode();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(enc.data()),
            static_cast<std::streamsize>(enc.size()));
  }

  Result<PersistenceRecord> read_record(const std::string& path) const {
    std::ifstream f(path, std::ios::binary);
    if (!f) return {Err::io_failure, path};
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string& s = ss.str();
    Bytes enc(s.begin(), s.end());
    if (opts_.sealer) {
      auto blob = SealedBlob::decode(enc);
      if (!blob) return blob.error();
      auto open = opts_.sealer->unseal(*blob);
      if (!open) return open.error();
      enc = std::move(*open);
    }
    return PersistenceRecord::decode(enc);
  }

  TpsOptions opts_;
  TrustedEventProcessor* tep_;

  mutable std::mutex loop_;
  PolicyState state_;
  OperationRegistry ops_;
  RiskPolicy risk_;
  std::vector<Broadcaster*> broadcasters_;

  std::vector<TransitionCmd> pending_diff_;
  uint64_t diff_base_epoch_ = 0;

  std::atomic<uint64_t> requests_received_{0};
  uint64_t transitions_applied_ = 0;
};

}  // namespace appspear

#endif  // APPSPEAR_TPS_HPP_
