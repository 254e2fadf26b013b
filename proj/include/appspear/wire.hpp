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

// Canonical binary wire format for proxy-pair communication. All integers
// are little-endian and fixed width; sequences carry a u32 element count;
// strings and byte blobs carry a u32 byte count. Fields are serialized in
// declaration order with no padding, so equal messages have byte-identical
// encodings. The full layout is documented in docs/wire-format.md.

#ifndef APPSPEAR_WIRE_HPP_
#define APPSPEAR_WIRE_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "appspear/common.hpp"
#include "appspear/entity.hpp"
#include "appspear/policy.hpp"

namespace appspear::wire {

constexpr uint32_t kMaxFrameBytes = 16u << 20;

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { le(v); }
  void u32(uint32_t v) { le(v); }
  void u64(uint64_t v) { le(v); }
  void boolean(bool v) { u8(v ? 1 : 0); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

  void str(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void bytes(ByteSpan b) {
    u32(static_cast<uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  void raw(ByteSpan b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

  void entity(const EntityId& e) {
    u64(e.id);
    u8(static_cast<uint8_t>(e.kind));
  }
  void entities(std::span<const EntityId> es) {
    u32(static_cast<uint32_t>(es.size()));
    for (const auto& e : es) entity(e);
  }

  Bytes take() { return std::move(buf_); }
  const Bytes& data() const { return buf_; }

 private:
  template <typename T>
  void le(T v) {
    for (size_t i = 0; i < sizeof(T); i++) {
      buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
  }

  Bytes buf_;
};

/// Bounds-checked cursor over an encoded message. Decoders call ok() once at
/// the end; a short or trailing-garbage buffer decodes to MalformedRecord.
class Reader {
 public:
  explicit Reader(ByteSpan b) : p_(b.data()), end_(b.data() + b.size()) {}

  uint8_t u8() { return take<uint8_t>(); }
  uint16_t u16() { return take<uint16_t>(); }
  uint32_t u32() { return take<uint32_t>(); }
  uint64_t u64() { return take<uint64_t>(); }
  bool boolean() { return u8() != 0; }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    uint32_t n = u32();
    if (!has(n)) return fail<std::string>();
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  Bytes bytes() {
    uint32_t n = u32();
    if (!has(n)) return fail<Bytes>();
    Bytes b(p_, p_ + n);
    p_ += n;
    return b;
  }

  EntityId entity() {
    EntityId e;
    e.id = u64();
    uint8_t k = u8();
    if (!valid_kind_tag(k)) return fail<EntityId>();
    e.kind = static_cast<EntityKind>(k);
    return e;
  }

  template <typename T, typename Fn>
  std::vector<T> seq(Fn element) {
    uint32_t n = u32();
    std::vector<T> out;
    if (n > remaining()) return fail<std::vector<T>>();  // elements are >= 1 byte
    out.reserve(n);
    for (uint32_t i = 0; i < n && ok_; i++) out.push_back(element(*this));
    return out;
  }

  bool ok() const { return ok_; }
  bool done() const { return ok_ && p_ == end_; }
  size_t remaining() const { return static_cast<size_t>(end_ - p_); }

 private:
  template <typename T>
  T take() {
    if (!has(sizeof(T))) return fail<T>();
    T v = 0;
    for (size_t i = 0; i < sizeof(T); i++) {
      v |= static_cast<T>(p_[i]) << (8 * i);
    }
    p_ += sizeof(T);
    return v;
  }
  bool has(size_t n) { return ok_ && static_cast<size_t>(end_ - p_) >= n; }
  template <typename T>
  T fail() {
    ok_ = false;
    return T{};
  }

  const uint8_t* p_;
  const uint8_t* end_;
  bool ok_ = true;
};

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

enum class MsgType : uint8_t {
  request = 1,
  decision = 2,
  admin = 3,
  invalidation = 4,
  context_push = 5,
  event = 6,
};

struct Frame {
  MsgType type = MsgType::request;
  Bytes body;

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// On-the-wire frame: u32 byte count (type byte + body), msg_type, body.
inline Bytes encode_frame(const Frame& f) {
  Writer w;
  w.u32(static_cast<uint32_t>(1 + f.body.size()));
  w.u8(static_cast<uint8_t>(f.type));
  w.raw(f.body);
  return w.take();
}

inline Result<Frame> decode_frame(ByteSpan buf) {
  Reader r(buf);
  uint32_t len = r.u32();
  if (!r.ok() || len < 1 || len > kMaxFrameBytes || r.remaining() != len) {
    return {Err::malformed_record, "bad frame length"};
  }
  uint8_t t = r.u8();
  if (t < 1 || t > 6) return {Err::malformed_record, "bad frame type"};
  Frame f;
  f.type = static_cast<MsgType>(t);
  f.body.assign(buf.begin() + 5, buf.end());
  return f;
}

/// Request/decision-class bodies start with the u64 correlation id so
/// transports can route responses without decoding the full payload.
inline uint64_t peek_correlation_id(ByteSpan body) {
  Reader r(body);
  return r.u64();
}

// ---------------------------------------------------------------------------
// TOM <-> TPS messages
// ---------------------------------------------------------------------------

/// One f_P / f_P' invocation crossing the TOM-to-TPS boundary.
struct AccessRequest {
  uint64_t request_id = 0;
  EntityVec entities;
  OperationId op;
  bool contexts_required = false;

  friend bool operator==(const AccessRequest&, const AccessRequest&) = default;
};

struct AccessDecision {
  uint64_t request_id = 0;
  bool verdict = false;
  uint64_t epoch = 0;
  bool cacheable = false;
  Err error = Err::none;

  friend bool operator==(const AccessDecision&, const AccessDecision&) = default;
};

inline Bytes encode(const AccessRequest& m) {
  Writer w;
  w.u64(m.request_id);
  w.entities({m.entities.data(), m.entities.size()});
  w.str(m.op.name);
  w.u8(m.op.arity);
  w.boolean(m.contexts_required);
  return w.take();
}

inline Result<AccessRequest> decode_access_request(ByteSpan b) {
  Reader r(b);
  AccessRequest m;
  m.request_id = r.u64();
  auto es = r.seq<EntityId>([](Reader& rr) { return rr.entity(); });
  m.entities.assign(es.begin(), es.end());
  m.op.name = r.str();
  m.op.arity = r.u8();
  m.contexts_required = r.boolean();
  if (!r.done()) return {Err::malformed_record, "AccessRequest"};
  return m;
}

inline Bytes encode(const AccessDecision& m) {
  Writer w;
  w.u64(m.request_id);
  w.boolean(m.verdict);
  w.u64(m.epoch);
  w.boolean(m.cacheable);
  w.u8(static_cast<uint8_t>(m.error));
  return w.take();
}

inline Result<AccessDecision> decode_access_decision(ByteSpan b) {
  Reader r(b);
  AccessDecision m;
  m.request_id = r.u64();
  m.verdict = r.boolean();
  m.epoch = r.u64();
  m.cacheable = r.boolean();
  m.error = static_cast<Err>(r.u8());
  if (!r.done()) return {Err::malformed_record, "AccessDecision"};
  return m;
}

inline void encode_transition(Writer& w, const TransitionCmd& cmd) {
  w.u8(static_cast<uint8_t>(cmd.kind));
  w.entity(cmd.user);
  w.str(cmd.role);
  w.str(cmd.permission.op);
  w.u8(static_cast<uint8_t>(cmd.permission.kind));
}

inline Result<TransitionCmd> decode_transition(Reader& r) {
  TransitionCmd cmd;
  uint8_t k = r.u8();
  if (!r.ok() || k > 7) return {Err::malformed_record, "transition kind"};
  cmd.kind = static_cast<TransitionCmd::Kind>(k);
  cmd.user = r.entity();
  cmd.role = r.str();
  cmd.permission.op = r.str();
  uint8_t pk = r.u8();
  if (!r.ok() || !valid_kind_tag(pk)) return {Err::malformed_record, "transition perm kind"};
  cmd.permission.kind = static_cast<EntityKind>(pk);
  return cmd;
}

/// Administrative transition command (trusted channel).
struct AdminCmd {
  uint64_t request_id = 0;
  TransitionCmd cmd;

  friend bool operator==(const AdminCmd&, const AdminCmd&) = default;
};

inline Bytes encode(const AdminCmd& m) {
  Writer w;
  w.u64(m.request_id);
  encode_transition(w, m.cmd);
  return w.take();
}

inline Result<AdminCmd> decode_admin_cmd(ByteSpan b) {
  Reader r(b);
  AdminCmd m;
  m.request_id = r.u64();
  auto cmd = decode_transition(r);
  if (!cmd) return cmd.error();
  m.cmd = std::move(*cmd);
  if (!r.done()) return {Err::malformed_record, "AdminCmd"};
  return m;
}

/// Pushed by the TPS after a transition; echoed back (is_ack) by each proxy
/// once its cache has been purged.
struct InvalidationNotice {
  uint64_t epoch = 0;
  bool is_ack = false;
  std::vector<KeyPattern> patterns;

  friend bool operator==(const InvalidationNotice&, const InvalidationNotice&) = default;
};

inline Bytes encode(const InvalidationNotice& m) {
  Writer w;
  w.u64(m.epoch);
  w.boolean(m.is_ack);
  w.u32(static_cast<uint32_t>(m.patterns.size()));
  for (const auto& p : m.patterns) {
    w.u8(static_cast<uint8_t>(p.match));
    w.u64(p.subject_id);
  }
  return w.take();
}

inline Result<InvalidationNotice> decode_invalidation(ByteSpan b) {
  Reader r(b);
  InvalidationNotice m;
  m.epoch = r.u64();
  m.is_ack = r.boolean();
  m.patterns = r.seq<KeyPattern>([](Reader& rr) {
    KeyPattern p;
    p.match = static_cast<KeyPattern::Match>(rr.u8() != 0 ? 1 : 0);
    p.subject_id = rr.u64();
    return p;
  });
  if (!r.done()) return {Err::malformed_record, "InvalidationNotice"};
  return m;
}

/// New context value from a TEP provider feed.
struct ContextPush {
  uint64_t request_id = 0;
  ContextValue value;

  friend bool operator==(const ContextPush&, const ContextPush&) = default;
};

inline Bytes encode(const ContextPush& m) {
  Writer w;
  w.u64(m.request_id);
  w.str(m.value.name);
  w.f64(m.value.value);
  w.u64(m.value.timestamp);
  return w.take();
}

inline Result<ContextPush> decode_context_push(ByteSpan b) {
  Reader r(b);
  ContextPush m;
  m.request_id = r.u64();
  m.value.name = r.str();
  m.value.value = r.f64();
  m.value.timestamp = r.u64();
  if (!r.done()) return {Err::malformed_record, "ContextPush"};
  return m;
}

/// Access-decision event emitted for logging and auditing.
struct EventRecord {
  uint64_t seq = 0;
  uint64_t request_id = 0;
  std::string op;
  std::vector<EntityId> entities;
  bool verdict = false;
  uint64_t epoch = 0;
  uint64_t timestamp = 0;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

inline Bytes encode(const EventRecord& m) {
  Writer w;
  w.u64(m.seq);
  w.u64(m.request_id);
  w.str(m.op);
  w.entities(m.entities);
  w.boolean(m.verdict);
  w.u64(m.epoch);
  w.u64(m.timestamp);
  return w.take();
}

inline Result<EventRecord> decode_event(ByteSpan b) {
  Reader r(b);
  EventRecord m;
  m.seq = r.u64();
  m.request_id = r.u64();
  m.op = r.str();
  m.entities = r.seq<EntityId>([](Reader& rr) { return rr.entity(); });
  m.verdict = r.boolean();
  m.epoch = r.u64();
  m.timestamp = r.u64();
  if (!r.done()) return {Err::malformed_record, "EventRecord"};
  return m;
}

// ---------------------------------------------------------------------------
// Application <-> TOM messages
// ---------------------------------------------------------------------------

/// One service-layer operation crossing the application-to-TOM boundary.
/// Travels as msg_type=request; replies travel as msg_type=decision.
struct ServiceCall {
  uint64_t request_id = 0;
  std::string service;
  std::string op;
  EntityId subject;
  std::vector<EntityId> targets;
  Bytes args;

  friend bool operator==(const ServiceCall&, const ServiceCall&) = default;
};

struct ServiceReply {
  uint64_t request_id = 0;
  Err error = Err::none;
  Bytes result;

  friend bool operator==(const ServiceReply&, const ServiceReply&) = default;
};

inline Bytes encode(const ServiceCall& m) {
  Writer w;
  w.u64(m.request_id);
  w.str(m.service);
  w.str(m.op);
  w.entity(m.subject);
  w.entities(m.targets);
  w.bytes(m.args);
  return w.take();
}

inline Result<ServiceCall> decode_service_call(ByteSpan b) {
  Reader r(b);
  ServiceCall m;
  m.request_id = r.u64();
  m.service = r.str();
  m.op = r.str();
  m.subject = r.entity();
  m.targets = r.seq<EntityId>([](Reader& rr) { return rr.entity(); });
  m.args = r.bytes();
  if (!r.done()) return {Err::malformed_record, "ServiceCall"};
  return m;
}

inline Bytes encode(const ServiceReply& m) {
  Writer w;
  w.u64(m.request_id);
  w.u8(static_cast<uint8_t>(m.error));
  w.bytes(m.result);
  return w.take();
}

inline Result<ServiceReply> decode_service_reply(ByteSpan b) {
  Reader r(b);
  ServiceReply m;
  m.request_id = r.u64();
  m.error = static_cast<Err>(r.u8());
  m.result = r.bytes();
  if (!r.done()) return {Err::malformed_record, "ServiceReply"};
  return m;
}

// ---------------------------------------------------------------------------
// Policy state snapshots (persistence payloads, state digests)
// ---------------------------------------------------------------------------

inline void encode_state(Writer& w, const PolicyState& s) {
  w.u64(s.epoch);
  w.boolean(s.allow_all);
  w.u32(static_cast<uint32_t>(s.users.size()));
  for (uint64_t u : s.users) w.u64(u);
  w.u32(static_cast<uint32_t>(s.roles.size()));
  for (const auto& r : s.roles) w.str(r);
  w.u32(static_cast<uint32_t>(s.permissions.size()));
  for (const auto& p : s.permissions) {
    w.str(p.op);
    w.u8(static_cast<uint8_t>(p.kind));
  }
  auto role_set = [&w](const std::set<std::string>& roles) {
    w.u32(static_cast<uint32_t>(roles.size()));
    for (const auto& r : roles) w.str(r);
  };
  w.u32(static_cast<uint32_t>(s.user_roles.size()));
  for (const auto& [u, roles] : s.user_roles) {
    w.u64(u);
    role_set(roles);
  }
  w.u32(static_cast<uint32_t>(s.role_perms.size()));
  for (const auto& [role, perms] : s.role_perms) {
    w.str(role);
    w.u32(static_cast<uint32_t>(perms.size()));
    for (const auto& p : perms) {
      w.str(p.op);
      w.u8(static_cast<uint8_t>(p.kind));
    }
  }
  w.u32(static_cast<uint32_t>(s.sessions.size()));
  for (const auto& [u, roles] : s.sessions) {
    w.u64(u);
    role_set(roles);
  }
}

inline Bytes encode_state(const PolicyState& s) {
  Writer w;
  encode_state(w, s);
  return w.take();
}

inline PolicyState decode_state(Reader& r) {
  PolicyState s;
  s.epoch = r.u64();
  s.allow_all = r.boolean();
  uint32_t n = r.u32();
  for (uint32_t i = 0; i < n && r.ok(); i++) s.users.insert(r.u64());
  n = r.u32();
  for (uint32_t i = 0; i < n && r.ok(); i++) s.roles.insert(r.str());
  n = r.u32();
  for (uint32_t i = 0; i < n && r.ok(); i++) {
    Permission p;
    p.op = r.str();
    p.kind = static_cast<EntityKind>(r.u8());
    s.permissions.insert(std::move(p));
  }
  auto role_set = [&r]() {
    std::set<std::string> roles;
    uint32_t k = r.u32();
    for (uint32_t i = 0; i < k && r.ok(); i++) roles.insert(r.str());
    return roles;
  };
  n = r.u32();
  for (uint32_t i = 0; i < n && r.ok(); i++) {
    uint64_t u = r.u64();
    s.user_roles[u] = role_set();
  }
  n = r.u32();
  for (uint32_t i = 0; i < n && r.ok(); i++) {
    std::string role = r.str();
    uint32_t k = r.u32();
    std::set<Permission> perms;
    for (uint32_t j = 0; j < k && r.ok(); j++) {
      Permission p;
      p.op = r.str();
      p.kind = static_cast<EntityKind>(r.u8());
      perms.insert(std::move(p));
    }
    s.role_perms[role] = std::move(perms);
  }
  n = r.u32();
  for (uint32_t i = 0; i < n && r.ok(); i++) {
    uint64_t u = r.u64();
    s.sessions[u] = role_set();
  }
  return s;
}

inline Result<PolicyState> decode_state(ByteSpan b) {
  Reader r(b);
  PolicyState s = decode_state(r);
  if (!r.done()) return {Err::malformed_record, "PolicyState"};
  return s;
}

inline void encode_ops(Writer& w, const OperationRegistry& ops) {
  w.u32(static_cast<uint32_t>(ops.size()));
  for (const auto& [name, info] : ops) {
    w.str(name);
    w.u8(info.arity);
    w.boolean(info.context_required);
  }
}

inline OperationRegistry decode_ops(Reader& r) {
  OperationRegistry ops;
  uint32_t n = r.u32();
  for (uint32_t i = 0; i < n && r.ok(); i++) {
    std::string name = r.str();
    OpInfo info;
    info.arity = r.u8();
    info.context_required = r.boolean();
    ops[name] = info;
  }
  return ops;
}

}  // namespace appspear::wire

#endif  // APPSPEAR_WIRE_HPP_
