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

// Miniature electronic-medical-record application: user, person and patient
// services as type-specific TOMs over the embedded key-value store. The
// service layer (EmrDomain) is the trusted side; applications talk to it
// through the EmrClient facade, either in-process or across an isolation
// boundary via service-call frames.

#ifndef APPSPEAR_EMR_HPP_
#define APPSPEAR_EMR_HPP_

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "appspear/bootstrap.hpp"
#include "appspear/channel.hpp"
#include "appspear/kvstore.hpp"
#include "appspear/tom.hpp"

namespace appspear {

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct PersonRecord {
  std::string name;
  std::string address;

  Bytes encode() const {
    wire::Writer w;
    w.str(name);
    w.str(address);
    return w.take();
  }
  static Result<PersonRecord> decode(ByteSpan b) {
    wire::Reader r(b);
    PersonRecord p;
    p.name = r.str();
    p.address = r.str();
    if (!r.done()) return {Err::malformed_record, "PersonRecord"};
    return p;
  }
};

struct PatientRecord {
  uint64_t person_id = 0;
  std::string diagnosis;

  Bytes encode() const {
    wire::Writer w;
    w.u64(person_id);
    w.str(diagnosis);
    return w.take();
  }
  static Result<PatientRecord> decode(ByteSpan b) {
    wire::Reader r(b);
    PatientRecord p;
    p.person_id = r.u64();
    p.diagnosis = r.str();
    if (!r.done()) return {Err::malformed_record, "PatientRecord"};
    return p;
  }
};

struct UserAccount {
  std::string username;
  std::vector<std::string> roles;

  Bytes encode() const {
    wire::Writer w;
    w.str(username);
    w.u32(static_cast<uint32_t>(roles.size()));
    for (const auto& r : roles) w.str(r);
    return w.take();
  }
  static Result<UserAccount> decode(ByteSpan b) {
    wire::Reader r(b);
    UserAccount u;
    u.username = r.str();
    uint32_t n = r.u32();
    for (uint32_t i = 0; i < n && r.ok(); i++) u.roles.push_back(r.str());
    if (!r.done()) return {Err::malformed_record, "UserAccount"};
    return u;
  }
};

// ---------------------------------------------------------------------------
// Services (type-specific TOMs)
// ---------------------------------------------------------------------------

class PersonService : public Tom {
 public:
  PersonService(TpsClient& tps, std::unique_ptr<ObjectStore> store)
      : Tom("person-service", EntityKind::person, tps, std::move(store)) {}

  Result<EntityId> create_person(EntityId subject, const std::string& name,
                                 const std::string& address) {
    EntityId out;
    EntityId tgt[] = {anchor()};
    auto r = mediate(subject, "person_create", tgt, [&]() -> Result<Bytes> {
      out = register_object(PersonRecord{name, address}.encode());
      return Bytes{};
    });
    if (!r) return r.error();
    return out;
  }

  /// `linked` reports whether any patient still references the person;
  /// deletion with a live link is refused to keep referential integrity.
  Result<void> delete_person(EntityId subject, EntityId person,
                             const std::function<bool(EntityId)>& linked) {
    EntityId tgt[] = {person};
    auto r = mediate(subject, "person_delete", tgt, [&]() -> Result<Bytes> {
      if (linked(person)) return Error{Err::dangling_link, person.str()};
      std::lock_guard lk(table_mutex());
      if (!store_unlocked().erase(person.id)) {
        return Error{Err::unknown_entity, person.str()};
      }
      return Bytes{};
    });
    if (!r) return r.error();
    return {};
  }

  Result<std::string> get_address(EntityId subject, EntityId person) {
    EntityId tgt[] = {person};
    auto r = mediate(subject, "person_get_address", tgt, [&]() -> Result<Bytes> {
      std::lock_guard lk(table_mutex());
      auto obj = store_unlocked().get(person.id);
      if (!obj) return Error{Err::unknown_entity, person.str()};
      return obj->body;
    });
    if (!r) return r.error();
    auto rec = PersonRecord::decode(*r);
    if (!rec) return rec.error();
    return rec->address;
  }

  Result<void> set_address(EntityId subject, EntityId person,
                           const std::string& address) {
    EntityId tgt[] = {person};
    auto r = mediate(subject, "person_set_address", tgt, [&]() -> Result<Bytes> {
      std::lock_guard lk(table_mutex());
      auto obj = store_unlocked().get(person.id);
      if (!obj) return Error{Err::unknown_entity, person.str()};
      auto rec = PersonRecord::decode(obj->body);
      if (!rec) return rec.error();
      rec->address = address;
      store_unlocked().put(person.id, rec->encode(), obj->version + 1);
      return Bytes{};
    });
    if (!r) return r.error();
    return {};
  }
};

class PatientService : public Tom {
 public:
  PatientService(TpsClient& tps, std::unique_ptr<ObjectStore> store)
      : Tom("patient-service", EntityKind::patient, tps, std::move(store)) {}

  /// `person_exists` validates the link target in the person service.
  Result<EntityId> create_patient(EntityId subject, EntityId person,
                                  const std::string& diagnosis,
                                  const std::function<bool(EntityId)>& person_exists) {
    EntityId out;
    EntityId tgt[] = {anchor()};
    auto r = mediate(subject, "patient_create", tgt, [&]() -> Result<Bytes> {
      if (person.kind != EntityKind::person || !person_exists(person)) {
        return Error{Err::unknown_entity, person.str()};
      }
      out = register_object(PatientRecord{person.id, diagnosis}.encode());
      return Bytes{};
    });
    if (!r) return r.error();
    return out;
  }

  Result<void> delete_patient(EntityId subject, EntityId patient) {
    EntityId tgt[] = {patient};
    auto r = mediate(subject, "patient_delete", tgt, [&]() -> Result<Bytes> {
      std::lock_guard lk(table_mutex());
      if (!store_unlocked().erase(patient.id)) {
        return Error{Err::unknown_entity, patient.str()};
      }
      return Bytes{};
    });
    if (!r) return r.error();
    return {};
  }

  Result<std::string> get_diagnosis(EntityId subject, EntityId patient) {
    EntityId tgt[] = {patient};
    auto r = mediate(subject, "patient_get_diagnosis", tgt, [&]() -> Result<Bytes> {
      std::lock_guard lk(table_mutex());
      auto obj = store_unlocked().get(patient.id);
      if (!obj) return Error{Err::unknown_entity, patient.str()};
      return obj->body;
    });
    if (!r) return r.error();
    auto rec = PatientRecord::decode(*r);
    if (!rec) return rec.error();
    return rec->diagnosis;
  }

  Result<void> set_diagnosis(EntityId subject, EntityId patient,
                             const std::string& diagnosis) {
    EntityId tgt[] = {patient};
    auto r = mediate(subject, "patient_set_diagnosis", tgt, [&]() -> Result<Bytes> {
      std::lock_guard lk(table_mutex());
      auto obj = store_unlocked().get(patient.id);
      if (!obj) return Error{Err::unknown_entity, patient.str()};
      auto rec = PatientRecord::decode(obj->body);
      if (!rec) return rec.error();
      rec->diagnosis = diagnosis;
      store_unlocked().put(patient.id, rec->encode(), obj->version + 1);
      return Bytes{};
    });
    if (!r) return r.error();
    return {};
  }

  /// Referential-integrity scan used by person deletion.
  bool any_for_person(EntityId person) const {
    std::lock_guard lk(table_mutex());
    bool found = false;
    const_cast<PatientService*>(this)->store_unlocked().for_each(
        [&](uint64_t, const StoredObject& obj) {
          auto rec = PatientRecord::decode(obj.body);
          if (rec.ok() && rec->person_id == person.id) found = true;
        });
    return found;
  }
};

/// Session layer plus user accounts. Login is an authentication stub
/// (username lookup); role activation and deactivation go through the
/// administrative channel so the policy sessions track the application
/// session.
class UserService : public Tom {
 public:
  UserService(TpsClient& tps, std::unique_ptr<ObjectStore> store)
      : Tom("user-service", EntityKind::user, tps, std::move(store)) {}

  /// Creates the accounts declared in the policy bootstrap, with matching
  /// entity ids.
  Result<void> adopt_accounts(const Bootstrap& boot) {
    // std::map iteration is id-ordered, as adopt_object requires.
    std::map<uint64_t, UserAccount> accounts;
    for (const auto& [name, id] : boot.users_by_name) {
      UserAccount acc;
      acc.username = name;
      auto ua = boot.state.user_roles.find(id);
      if (ua != boot.state.user_roles.end()) {
        acc.roles.assign(ua->second.begin(), ua->second.end());
      }
      accounts[id] = std::move(acc);
    }
    for (const auto& [id, acc] : accounts) {
      by_name_[acc.username] = id;
      if (exists({id, EntityKind::user})) continue;  // reloaded from disk
      if (auto r = adopt_object({id, EntityKind::user}, acc.encode()); !r) {
        return r;
      }
    }
    return {};
  }

  Result<EntityId> login(const std::string& username) {
    auto it = by_name_.find(username);
    if (it == by_name_.end()) return {Err::unknown_user, username};
    if (session_user_) (void)logout_internal();
    session_user_ = EntityId{it->second, EntityKind::user};
    return *session_user_;
  }

  Result<void> activate_role(const std::string& role) {
    auto acc = current_account();
    if (!acc) return {Err::unknown_user, "no session"};
    if (std::find(acc->roles.begin(), acc->roles.end(), role) == acc->roles.end()) {
      return {Err::role_not_assigned, role};
    }
    auto r = tps().admin(TransitionCmd::activate_role(*session_user_, role));
    if (!r) return r.error();
    active_.insert(role);
    return {};
  }

  Result<void> deactivate_role(const std::string& role) {
    if (!session_user_) return {Err::unknown_user, "no session"};
    if (!active_.contains(role)) return {Err::role_not_assigned, role};
    auto r = tps().admin(TransitionCmd::deactivate_role(*session_user_, role));
    if (!r) return r.error();
    active_.erase(role);
    return {};
  }

  Result<void> logout() {
    if (!session_user_) return {Err::unknown_user, "no session"};
    return logout_internal();
  }

  std::optional<EntityId> current_user() const { return session_user_; }

 private:
  Result<void> logout_internal() {
    // Deactivate every activated role so the policy session empties out.
    for (const std::string& role : active_) {
      auto r = tps().admin(TransitionCmd::deactivate_role(*session_user_, role));
      if (!r) return r.error();
    }
    active_.clear();
    session_user_.reset();
    return {};
  }

  std::optional<UserAccount> current_account() {
    if (!session_user_) return std::nullopt;
    std::lock_guard lk(table_mutex());
    auto obj = store_unlocked().get(session_user_->id);
    if (!obj) return std::nullopt;
    auto acc = UserAccount::decode(obj->body);
    if (!acc) return std::nullopt;
    return *acc;
  }

  std::map<std::string, uint64_t> by_name_;
  std::optional<EntityId> session_user_;
  std::set<std::string> active_;
};

// ---------------------------------------------------------------------------
// The trusted service domain
// ---------------------------------------------------------------------------

using TpsClientFactory = std::function<std::unique_ptr<TpsClient>()>;

class EmrDomain {
 public:
  /// data_dir empty keeps the store in memory.
  EmrDomain(const Bootstrap& boot, const TpsClientFactory& make_client,
            const std::string& data_dir = {})
      : kv_(data_dir),
        user_tps_(make_client()),
        person_tps_(make_client()),
        patient_tps_(make_client()),
        users_(*user_tps_, std::make_unique<KvObjectStore>(kv_, "user")),
        persons_(*person_tps_, std::make_unique<KvObjectStore>(kv_, "person")),
        patients_(*patient_tps_, std::make_unique<KvObjectStore>(kv_, "patient")) {
    (void)users_.adopt_accounts(boot);
  }

  // Session ops.
  Result<EntityId> login(const std::string& u) { return users_.login(u); }
  Result<void> logout() { return users_.logout(); }
  Result<void> activate_role(const std::string& r) { return users_.activate_role(r); }
  Result<void> deactivate_role(const std::string& r) {
    return users_.deactivate_role(r);
  }

  // Person service.
  Result<EntityId> person_create(const std::string& name, const std::string& addr) {
    auto s = subject();
    if (!s) return s.error();
    return persons_.create_person(*s, name, addr);
  }
  Result<void> person_delete(EntityId p) {
    auto s = subject();
    if (!s) return s.error();
    return persons_.delete_person(
        *s, p, [this](EntityId e) { return patients_.any_for_person(e); });
  }
  Result<std::string> person_get_address(EntityId p) {
    auto s = subject();
    if (!s) return s.error();
    return persons_.get_address(*s, p);
  }
  Result<void> person_set_address(EntityId p, const std::string& addr) {
    auto s = subject();
    if (!s) return s.error();
    return persons_.set_address(*s, p, addr);
  }

  // Patient service.
  Result<EntityId> patient_create(EntityId person, const std::string& diagnosis) {
    auto s = subject();
    if (!s) return s.error();
    return patients_.create_patient(*s, person, diagnosis, [this](EntityId e) {
      return persons_.exists(e);
    });
  }
  Result<void> patient_delete(EntityId p) {
    auto s = subject();
    if (!s) return s.error();
    return patients_.delete_patient(*s, p);
  }
  Result<std::string> patient_get_diagnosis(EntityId p) {
    auto s = subject();
    if (!s) return s.error();
    return patients_.get_diagnosis(*s, p);
  }
  Result<void> patient_set_diagnosis(EntityId p, const std::string& d) {
    auto s = subject();
    if (!s) return s.error();
    return patients_.set_diagnosis(*s, p, d);
  }

  UserService& user_service() { return users_; }
  PersonService& person_service() { return persons_; }
  PatientService& patient_service() { return patients_; }
  KvStore& store() { return kv_; }

  std::array<uint8_t, 32> store_digest() const { return kv_.digest(); }

 private:
  Result<EntityId> subject() const {
    auto u = users_.current_user();
    if (!u) return {Err::unknown_user, "not logged in"};
    return *u;
  }

  KvStore kv_;
  std::unique_ptr<TpsClient> user_tps_, person_tps_, patient_tps_;
  UserService users_;
  PersonService persons_;
  PatientService patients_;
};

// ---------------------------------------------------------------------------
// Client facade and service-call marshalling
// ---------------------------------------------------------------------------

class EmrClient {
 public:
  virtual ~EmrClient() = default;
  virtual Result<EntityId> login(const std::string& username) = 0;
  virtual Result<void> logout() = 0;
  virtual Result<void> activate_role(const std::string& role) = 0;
  virtual Result<void> deactivate_role(const std::string& role) = 0;
  virtual Result<EntityId> person_create(const std::string& name,
                                         const std::string& addr) = 0;
  virtual Result<void> person_delete(EntityId p) = 0;
  virtual Result<std::string> person_get_address(EntityId p) = 0;
  virtual Result<void> person_set_address(EntityId p, const std::string& a) = 0;
  virtual Result<EntityId> patient_create(EntityId person, const std::string& d) = 0;
  virtual Result<void> patient_delete(EntityId p) = 0;
  virtual Result<std::string> patient_get_diagnosis(EntityId p) = 0;
  virtual Result<void> patient_set_diagnosis(EntityId p, const std::string& d) = 0;
};

class LocalEmrClient : public EmrClient {
 public:
  explicit LocalEmrClient(EmrDomain& d) : d_(d) {}

  Result<EntityId> login(const std::string& u) override { return d_.login(u); }
  Result<void> logout() override { return d_.logout(); }
  Result<void> activate_role(const std::string& r) override {
    return d_.activate_role(r);
  }
  Result<void> deactivate_role(const std::string& r) override {
    return d_.deactivate_role(r);
  }
  Result<EntityId> person_create(const std::string& n, const std::string& a) override {
    return d_.person_create(n, a);
  }
  Result<void> person_delete(EntityId p) override { return d_.person_delete(p); }
  Result<std::string> person_get_address(EntityId p) override {
    return d_.person_get_address(p);
  }
  Result<void> person_set_address(EntityId p, const std::string& a) override {
    return d_.person_set_address(p, a);
  }
  Result<EntityId> patient_create(EntityId person, const std::string& d) override {
    return d_.patient_create(person, d);
  }
  Result<void> patient_delete(EntityId p) override { return d_.patient_delete(p); }
  Result<std::string> patient_get_diagnosis(EntityId p) override {
    return d_.patient_get_diagnosis(p);
  }
  Result<void> patient_set_diagnosis(EntityId p, const std::string& d) override {
    return d_.patient_set_diagnosis(p, d);
  }

 private:
  EmrDomain& d_;
};

/// Generic responder-side dispatch of service-call frames.
class ServiceDispatcher : public FrameHandler {
 public:
  using Handler = std::function<wire::ServiceReply(const wire::ServiceCall&)>;

  void register_service(const std::string& name, Handler h) {
    handlers_[name] = std::move(h);
  }

  wire::Frame handle_frame(const wire::Frame& f) override {
    uint64_t id = wire::peek_correlation_id(f.body);
    wire::ServiceReply reply;
    reply.request_id = id;
    if (f.type != wire::MsgType::request) {
      reply.error = Err::malformed_record;
      return {wire::MsgType::decision, wire::encode(reply)};
    }
    auto call = wire::decode_service_call(f.body);
    if (!call) {
      reply.error = Err::malformed_record;
      return {wire::MsgType::decision, wire::encode(reply)};
    }
    if (call->service == "_sys" && call->op == "echo") {
      reply.result = call->args;
      return {wire::MsgType::decision, wire::encode(reply)};
    }
    auto it = handlers_.find(call->service);
    if (it == handlers_.end()) {
      reply.error = Err::unknown_service;
      return {wire::MsgType::decision, wire::encode(reply)};
    }
    reply = it->second(*call);
    reply.request_id = id;
    return {wire::MsgType::decision, wire::encode(reply)};
  }

 private:
  std::map<std::string, Handler> handlers_;
};

namespace emr_wire {

inline wire::ServiceReply ok_reply(Bytes result = {}) {
  return {0, Err::none, std::move(result)};
}
inline wire::ServiceReply err_reply(const Error& e) { return {0, e.code, {}}; }

inline Bytes encode_entity(EntityId e) {
  wire::Writer w;
  w.entity(e);
  return w.take();
}

inline Result<EntityId> decode_entity(ByteSpan b) {
  wire::Reader r(b);
  EntityId e = r.entity();
  if (!r.done()) return {Err::malformed_record, "entity result"};
  return e;
}

inline Bytes encode_str(const std::string& s) {
  wire::Writer w;
  w.str(s);
  return w.take();
}

inline Result<std::string> decode_str(ByteSpan b) {
  wire::Reader r(b);
  std::string s = r.str();
  if (!r.done()) return {Err::malformed_record, "string result"};
  return s;
}

inline Result<std::pair<std::string, std::string>> decode_str2(ByteSpan b) {
  wire::Reader r(b);
  std::string x = r.str(), y = r.str();
  if (!r.done()) return {Err::malformed_record, "string pair"};
  return std::make_pair(std::move(x), std::move(y));
}

}  // namespace emr_wire

/// Registers the EMR domain's three services on a dispatcher.
inline void register_emr_services(ServiceDispatcher& disp, EmrDomain& d) {
  using namespace emr_wire;
  using wire::ServiceCall;
  using wire::ServiceReply;

  disp.register_service("user", [&d](const ServiceCall& c) -> ServiceReply {
    if (c.op == "login") {
      auto u = decode_str(c.args);
      if (!u) return err_reply(u.error());
      auto r = d.login(*u);
      return r ? ok_reply(encode_entity(*r)) : err_reply(r.error());
    }
    if (c.op == "logout") {
      auto r = d.logout();
      return r ? ok_reply() : err_reply(r.error());
    }
    if (c.op == "activate" || c.op == "deactivate") {
      auto role = decode_str(c.args);
      if (!role) return err_reply(role.error());
      auto r = c.op == "activate" ? d.activate_role(*role) : d.deactivate_role(*role);
      return r ? ok_reply() : err_reply(r.error());
    }
    return err_reply({Err::unknown_operation, c.op});
  });

  disp.register_service("person", [&d](const ServiceCall& c) -> ServiceReply {
    if (c.op == "create") {
      auto args = decode_str2(c.args);
      if (!args) return err_reply(args.error());
      auto r = d.person_create(args->first, args->second);
      return r ? ok_reply(encode_entity(*r)) : err_reply(r.error());
    }
    if (c.targets.size() != 1) return err_reply({Err::malformed_record, c.op});
    EntityId target = c.targets[0];
    if (c.op == "delete") {
      auto r = d.person_delete(target);
      return r ? ok_reply() : err_reply(r.error());
    }
    if (c.op == "get_address") {
      auto r = d.person_get_address(target);
      return r ? ok_reply(encode_str(*r)) : err_reply(r.error());
    }
    if (c.op == "set_address") {
      auto a = decode_str(c.args);
      if (!a) return err_reply(a.error());
      auto r = d.person_set_address(target, *a);
      return r ? ok_reply() : err_reply(r.error());
    }
    return err_reply({Err::unknown_operation, c.op});
  });

  disp.register_service("patient", [&d](const ServiceCall& c) -> ServiceReply {
    if (c.op == "create") {
      if (c.targets.size() != 1) return err_reply({Err::malformed_record, c.op});
      auto diag = decode_str(c.args);
      if (!diag) return err_reply(diag.error());
      auto r = d.patient_create(c.targets[0], *diag);
      return r ? ok_reply(encode_entity(*r)) : err_reply(r.error());
    }
    if (c.targets.size() != 1) return err_reply({Err::malformed_record, c.op});
    EntityId target = c.targets[0];
    if (c.op == "delete") {
      auto r = d.patient_delete(target);
      return r ? ok_reply() : err_reply(r.error());
    }
    if (c.op == "get_diagnosis") {
      auto r = d.patient_get_diagnosis(target);
      return r ? ok_reply(encode_str(*r)) : err_reply(r.error());
    }
    if (c.op == "set_diagnosis") {
      auto a = decode_str(c.args);
      if (!a) return err_reply(a.error());
      auto r = d.patient_set_diagnosis(target, *a);
      return r ? ok_reply() : err_reply(r.error());
    }
    return err_reply({Err::unknown_operation, c.op});
  });
}

class RemoteEmrClient : public EmrClient {
 public:
  explicit RemoteEmrClient(std::unique_ptr<RequesterChannel> ch)
      : ch_(std::move(ch)) {}

  Result<EntityId> login(const std::string& u) override {
    auto r = invoke("user", "login", {}, emr_wire::encode_str(u));
    if (!r) return r.error();
    auto e = emr_wire::decode_entity(*r);
    if (e) subject_ = *e;
    return e;
  }
  Result<void> logout() override { return invoke_void("user", "logout", {}, {}); }
  Result<void> activate_role(const std::string& r) override {
    return invoke_void("user", "activate", {}, emr_wire::encode_str(r));
  }
  Result<void> deactivate_role(const std::string& r) override {
    return invoke_void("user", "deactivate", {}, emr_wire::encode_str(r));
  }
  Result<EntityId> person_create(const std::string& n, const std::string& a) override {
    wire::Writer w;
    w.str(n);
    w.str(a);
    auto r = invoke("person", "create", {}, w.take());
    if (!r) return r.error();
    return emr_wire::decode_entity(*r);
  }
  Result<void> person_delete(EntityId p) override {
    return invoke_void("person", "delete", {p}, {});
  }
  Result<std::string> person_get_address(EntityId p) override {
    auto r = invoke("person", "get_address", {p}, {});
    if (!r) return r.error();
    return emr_wire::decode_str(*r);
  }
  Result<void> person_set_address(EntityId p, const std::string& a) override {
    return invoke_void("person", "set_address", {p}, emr_wire::encode_str(a));
  }
  Result<EntityId> patient_create(EntityId person, const std::string& d) override {
    auto r = invoke("patient", "create", {person}, emr_wire::encode_str(d));
    if (!r) return r.error();
    return emr_wire::decode_entity(*r);
  }
  Result<void> patient_delete(EntityId p) override {
    return invoke_void("patient", "delete", {p}, {});
  }
  Result<std::string> patient_get_diagnosis(EntityId p) override {
    auto r = invoke("patient", "get_diagnosis", {p}, {});
    if (!r) return r.error();
    return emr_wire::decode_str(*r);
  }
  Result<void> patient_set_diagnosis(EntityId p, const std::string& d) override {
    return invoke_void("patient", "set_diagnosis", {p}, emr_wire::encode_str(d));
  }

 private:
  Result<Bytes> invoke(const std::string& service, const std::string& op,
                       std::vector<EntityId> targets, Bytes args) {
    wire::ServiceCall call;
    call.request_id = next_id_++;
    call.service = service;
    call.op = op;
    call.subject = subject_;
    call.targets = std::move(targets);
    call.args = std::move(args);
    auto resp = ch_->call({wire::MsgType::request, wire::encode(call)});
    if (!resp) return resp.error();
    auto reply = wire::decode_service_reply(resp->body);
    if (!reply) return reply.error();
    if (reply->error != Err::none) return Error{reply->error, {}};
    return reply->result;
  }

  Result<void> invoke_void(const std::string& service, const std::string& op,
                           std::vector<EntityId> targets, Bytes args) {
    auto r = invoke(service, op, std::move(targets), std::move(args));
    if (!r) return r.error();
    return {};
  }

  std::unique_ptr<RequesterChannel> ch_;
  EntityId subject_;
  std::atomic<uint64_t> next_id_{1};
};

// ---------------------------------------------------------------------------
// Default policy fixture and synthetic dataset
// ---------------------------------------------------------------------------

/// Roles: physician (full clinical access), nurse (read diagnosis, manage
/// person records, no diagnosis changes), admin (OS-object wrapper access).
inline std::string default_emr_bootstrap() {
  return R"(# EMR demo policy
user 1 alice
user 2 nora
user 3 oscar
role physician
role nurse
role admin
op person_create 2
op person_delete 2
op person_get_address 2
op person_set_address 2
op patient_create 2
op patient_delete 2
op patient_get_diagnosis 2
op patient_set_diagnosis 2
op file_read 2
op file_write 2
op file_create 2
op file_delete 2
grant physician person_create person
grant physician person_delete person
grant physician person_get_address person
grant physician person_set_address person
grant physician patient_create patient
grant physician patient_delete patient
grant physician patient_get_diagnosis patient
grant physician patient_set_diagnosis patient
grant nurse person_create person
grant nurse person_get_address person
grant nurse person_set_address person
grant nurse patient_get_diagnosis patient
grant admin file_read os-object
grant admin file_write os-object
grant admin file_create os-object
grant admin file_delete os-object
assign alice physician
assign nora nurse
assign oscar admin
)";
}

struct DatasetStats {
  size_t persons = 0;
  size_t patients = 0;
  std::vector<EntityId> person_ids;
  std::vector<EntityId> patient_ids;
};

/// Deterministic synthetic dataset: n patients, each with their own person
/// record, generated through the (mediated) service interface. The caller
/// must be logged in with a role permitted to create persons and patients.
inline Result<DatasetStats> load_dataset(EmrClient& client, size_t n_patients,
                                         uint64_t seed) {
  static const char* kGiven[] = {"ada", "grace", "alan", "edsger", "barbara",
                                 "donald", "john", "joan", "leslie", "tony"};
  static const char* kStreet[] = {"oak", "elm", "main", "mill", "park",
                                  "lake", "hill", "bay", "ridge", "vine"};
  static const char* kDiag[] = {"hypertension", "diabetes", "asthma",
                                "migraine", "fracture", "anemia",
                                "allergy", "bronchitis"};
  std::mt19937_64 rng(seed);
  DatasetStats stats;
  for (size_t i = 0; i < n_patients; i++) {
    std::string name = std::string(kGiven[rng() % 10]) + "-" + std::to_string(rng() % 10000);
    std::string addr = std::to_string(1 + rng() % 999) + " " +
                       kStreet[rng() % 10] + " st";
    auto person = client.person_create(name, addr);
    if (!person) return person.error();
    std::string diag = std::string(kDiag[rng() % 8]) + " stage-" +
                       std::to_string(1 + rng() % 4);
    auto patient = client.patient_create(*person, diag);
    if (!patient) return patient.error();
    stats.persons++;
    stats.patients++;
    stats.person_ids.push_back(*person);
    stats.patient_ids.push_back(*patient);
  }
  return stats;
}

}  // namespace appspear

#endif  // APPSPEAR_EMR_HPP_
