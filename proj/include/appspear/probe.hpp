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

// Probe application: a minimal TOM set whose operations do nothing but run
// the mediation path. The synthetic baseline benchmark and the randomized
// end-to-end equivalence drivers use it to exercise TOM -> proxy -> TPS
// under any isolation configuration.

#ifndef APPSPEAR_PROBE_HPP_
#define APPSPEAR_PROBE_HPP_

#include <memory>

#include "appspear/emr.hpp"
#include "appspear/tom.hpp"

namespace appspear {

class ProbeDomain {
 public:
  ProbeDomain(const TpsClientFactory& make_client)
      : person_tps_(make_client()),
        patient_tps_(make_client()),
        doc_tps_(make_client()),
        admin_tps_(make_client()),
        persons_("probe-person", EntityKind::person, *person_tps_),
        patients_("probe-patient", EntityKind::patient, *patient_tps_),
        docs_("probe-doc", EntityKind::emr_document, *doc_tps_) {}

  /// Pre-registers a target object under a caller-chosen id (test fixtures
  /// address objects by stable ids).
  Result<void> adopt(EntityId id) {
    auto* tom = tom_for(id.kind);
    if (tom == nullptr) return {Err::unknown_kind, id.str()};
    return tom->adopt_object(id, {});
  }

  /// Mediated no-op: returns the policy verdict. Clean denials (including
  /// unknown subjects) come back as false; infrastructure failures surface
  /// as errors.
  Result<bool> invoke(const std::string& op, EntityId subject,
                      std::span<const EntityId> targets) {
    Tom* tom = targets.empty() ? &docs_ : tom_for(targets[0].kind);
    if (tom == nullptr) return {Err::unknown_kind, "target kind"};
    auto r = tom->mediate(subject, op, targets, []() -> Result<Bytes> {
      return Bytes{};
    });
    if (r.ok()) return true;
    switch (r.error().code) {
      case Err::permission_denied:
      case Err::unknown_entity:
      case Err::arity_mismatch:
      case Err::unknown_operation:
        return false;
      default:
        return r.error();
    }
  }

  /// Administrative transition through one of the domain's proxies.
  Result<uint64_t> admin(const TransitionCmd& cmd) {
    return docs_.tps().admin(cmd);
  }

  Result<void> push_context(const ContextValue& v) {
    return docs_.tps().push_context(v);
  }

  Tom* tom_for(EntityKind k) {
    switch (k) {
      case EntityKind::person: return &persons_;
      case EntityKind::patient: return &patients_;
      case EntityKind::emr_document: return &docs_;
      default: return nullptr;
    }
  }

  uint64_t total_operations() const {
    return persons_.counters().operations_executed.load() +
           patients_.counters().operations_executed.load() +
           docs_.counters().operations_executed.load();
  }
  uint64_t total_requests_sent() const {
    return persons_.counters().requests_sent.load() +
           patients_.counters().requests_sent.load() +
           docs_.counters().requests_sent.load();
  }

 private:
  std::unique_ptr<TpsClient> person_tps_, patient_tps_, doc_tps_, admin_tps_;
  Tom persons_, patients_, docs_;
};

/// App-side facade mirrored by the remote marshalling, like EmrClient.
class ProbeClient {
 public:
  virtual ~ProbeClient() = default;
  virtual Result<void> adopt(EntityId id) = 0;
  virtual Result<bool> invoke(const std::string& op, EntityId subject,
                              std::vector<EntityId> targets) = 0;
  virtual Result<uint64_t> admin(const TransitionCmd& cmd) = 0;
  virtual Result<void> push_context(const ContextValue& v) = 0;
};

class LocalProbeClient : public ProbeClient {
 public:
  explicit LocalProbeClient(ProbeDomain& d) : d_(d) {}
  Result<void> adopt(EntityId id) override { return d_.adopt(id); }
  Result<bool> invoke(const std::string& op, EntityId subject,
                      std::vector<EntityId> targets) override {
    return d_.invoke(op, subject, targets);
  }
  Result<uint64_t> admin(const TransitionCmd& cmd) override { return d_.admin(cmd); }
  Result<void> push_context(const ContextValue& v) override {
    return d_.push_context(v);
  }

 private:
  ProbeDomain& d_;
};

inline void register_probe_services(ServiceDispatcher& disp, ProbeDomain& d) {
  using namespace emr_wire;
  disp.register_service("probe", [&d](const wire::ServiceCall& c) -> wire::ServiceReply {
    if (c.op == "adopt") {
      if (c.targets.size() != 1) return err_reply({Err::malformed_record, c.op});
      auto r = d.adopt(c.targets[0]);
      return r ? ok_reply() : err_reply(r.error());
    }
    if (c.op == "invoke") {
      auto opname = decode_str(c.args);
      if (!opname) return err_reply(opname.error());
      auto r = d.invoke(*opname, c.subject, c.targets);
      if (!r) return err_reply(r.error());
      return ok_reply(Bytes{static_cast<uint8_t>(*r ? 1 : 0)});
    }
    if (c.op == "admin") {
      wire::Reader rd(c.args);
      auto cmd = wire::decode_transition(rd);
      if (!cmd || !rd.done()) return err_reply({Err::malformed_record, c.op});
      auto r = d.admin(*cmd);
      if (!r) return err_reply(r.error());
      wire::Writer w;
      w.u64(*r);
      return ok_reply(w.take());
    }
    if (c.op == "push_context") {
      wire::Reader rd(c.args);
      ContextValue v;
      v.name = rd.str();
      v.value = rd.f64();
      v.timestamp = rd.u64();
      if (!rd.done()) return err_reply({Err::malformed_record, c.op});
      auto r = d.push_context(v);
      return r ? ok_reply() : err_reply(r.error());
    }
    return err_reply({Err::unknown_operation, c.op});
  });
}

class RemoteProbeClient : public ProbeClient {
 public:
  explicit RemoteProbeClient(std::unique_ptr<RequesterChannel> ch)
      : ch_(std::move(ch)) {}

  Result<void> adopt(EntityId id) override {
    auto r = invoke_raw("adopt", {}, {id}, {});
    if (!r) return r.error();
    return {};
  }

  Result<bool> invoke(const std::string& op, EntityId subject,
                      std::vector<EntityId> targets) override {
    auto r = invoke_raw("invoke", subject, std::move(targets),
                        emr_wire::encode_str(op));
    if (!r) return r.error();
    if (r->size() != 1) return Error{Err::malformed_record, "verdict"};
    return (*r)[0] != 0;
  }

  Result<uint64_t> admin(const TransitionCmd& cmd) override {
    wire::Writer w;
    wire::encode_transition(w, cmd);
    auto r = invoke_raw("admin", {}, {}, w.take());
    if (!r) return r.error();
    wire::Reader rd(*r);
    uint64_t epoch = rd.u64();
    if (!rd.done()) return Error{Err::malformed_record, "admin ack"};
    return epoch;
  }

  Result<void> push_context(const ContextValue& v) override {
    wire::Writer w;
    w.str(v.name);
    w.f64(v.value);
    w.u64(v.timestamp);
    auto r = invoke_raw("push_context", {}, {}, w.take());
    if (!r) return r.error();
    return {};
  }

 private:
  Result<Bytes> invoke_raw(const std::string& op, EntityId subject,
                           std::vector<EntityId> targets, Bytes args) {
    wire::ServiceCall call;
    call.request_id = next_id_++;
    call.service = "probe";
    call.op = op;
    call.subject = subject;
    call.targets = std::move(targets);
    call.args = std::move(args);
    auto resp = ch_->call({wire::MsgType::request, wire::encode(call)});
    if (!resp) return resp.error();
    auto reply = wire::decode_service_reply(resp->body);
    if (!reply) return reply.error();
    if (reply->error != Err::none) return Error{reply->error, {}};
    return reply->result;
  }

  std::unique_ptr<RequesterChannel> ch_;
  std::atomic<uint64_t> next_id_{1};
};

}  // namespace appspear

#endif  // APPSPEAR_PROBE_HPP_
