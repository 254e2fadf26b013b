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

// Generic trusted object manager: one per object kind. A TOM owns the only
// path to its objects; every access runs through mediate(), which consults
// the policy exactly once (cache hit or TPS round trip) and executes the
// object action only on an allow verdict. Entity identifiers are assigned
// once, monotonically, and never reused after destroy.

#ifndef APPSPEAR_TOM_HPP_
#define APPSPEAR_TOM_HPP_

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "appspear/entity.hpp"
#include "appspear/proxy.hpp"

namespace appspear {

struct MediationCounter {
  std::atomic<uint64_t> requests_sent{0};
  std::atomic<uint64_t> cache_hits{0};
  /// Mediated operations attempted (policy consulted), whether the verdict
  /// allowed or denied the action. With the cache enabled,
  /// operations_executed == requests_sent + cache_hits; with it disabled,
  /// operations_executed == requests_sent.
  std::atomic<uint64_t> operations_executed{0};
};

struct StoredObject {
  Bytes body;
  uint64_t version = 0;
};

/// Storage behind a TOM. Implementations are internally consistent but not
/// synchronized; the TOM serializes access.
class ObjectStore {
 public:
  virtual ~ObjectStore() = default;
  virtual void put(uint64_t id, ByteSpan body, uint64_t version) = 0;
  virtual std::optional<StoredObject> get(uint64_t id) const = 0;
  virtual bool erase(uint64_t id) = 0;
  virtual bool contains(uint64_t id) const = 0;
  virtual size_t size() const = 0;
  virtual uint64_t max_id() const = 0;
  virtual void for_each(
      const std::function<void(uint64_t, const StoredObject&)>& fn) const = 0;
};

class MemoryStore : public ObjectStore {
 public:
  void put(uint64_t id, ByteSpan body, uint64_t version) override {
    objects_[id] = StoredObject{Bytes(body.begin(), body.end()), version};
  }
  std::optional<StoredObject> get(uint64_t id) const override {
    auto it = objects_.find(id);
    if (it == objects_.end()) return std::nullopt;
    return it->second;
  }
  bool erase(uint64_t id) override { return objects_.erase(id) > 0; }
  bool contains(uint64_t id) const override { return objects_.contains(id); }
  size_t size() const override { return objects_.size(); }
  uint64_t max_id() const override {
    return objects_.empty() ? 0 : objects_.rbegin()->first;
  }
  void for_each(const std::function<void(uint64_t, const StoredObject&)>& fn)
      const override {
    for (const auto& [id, obj] : objects_) fn(id, obj);
  }

 private:
  std::map<uint64_t, StoredObject> objects_;
};

class Tom {
 public:
  /// Entity id 0 of the TOM's kind is the type anchor: the target entity for
  /// operations (like create) that precede any concrete object.
  static constexpr uint64_t kAnchorId = 0;

  Tom(std::string name, EntityKind kind, TpsClient& tps,
      std::unique_ptr<ObjectStore> store = nullptr)
      : name_(std::move(name)),
        kind_(kind),
        tps_(tps),
        store_(store ? std::move(store) : std::make_unique<MemoryStore>()) {
    next_id_ = store_->max_id() + 1;
  }

  const std::string& name() const { return name_; }
  EntityKind kind() const { return kind_; }
  EntityId anchor() const { return {kAnchorId, kind_}; }

  // ------------------------------------------------------------------
  // Entity identifier management (not itself mediated)
  // ------------------------------------------------------------------

  EntityId register_object(ByteSpan body) {
    std::lock_guard lk(mu_);
    uint64_t id = next_id_++;
    store_->put(id, body, 1);
    return {id, kind_};
  }

  /// Binds a pre-assigned identifier (bootstrap data). Ids at or below any
  /// previously issued id are rejected, preserving no-reuse.
  Result<void> adopt_object(EntityId eid, ByteSpan body) {
    if (eid.kind != kind_) return {Err::unknown_kind, eid.str()};
    std::lock_guard lk(mu_);
    if (eid.id < next_id_ || eid.id == kAnchorId) {
      return {Err::invariant_violation, "id not adoptable: " + eid.str()};
    }
    store_->put(eid.id, body, 1);
    next_id_ = eid.id + 1;
    return {};
  }

  // ------------------------------------------------------------------
  // Mediation
  // ------------------------------------------------------------------

  /// Runs `action` iff the policy allows (subject, op, targets). Exactly one
  /// policy consultation per call; any transport failure denies without
  /// executing the action.
  template <typename Action>
  Result<Bytes> mediate(EntityId subject, std::string_view op_name,
                        std::span<const EntityId> targets, Action&& action,
                        bool contexts_required = false) {
    counters_.operations_executed.fetch_add(1, std::memory_order_relaxed);

    {
      std::lock_guard lk(mu_);
      for (const EntityId& t : targets) {
        if (t.kind == kind_ && t.id != kAnchorId && !store_->contains(t.id)) {
          return Error{Err::unknown_entity, t.str()};
        }
      }
    }

    EntityVec entities;
    entities.push_back(subject);
    entities.insert(entities.end(), targets.begin(), targets.end());
    OperationId op{std::string(op_name), static_cast<uint8_t>(entities.size())};

    Consultation c = tps_.consult(entities, op, contexts_required);
    if (c.from_cache) {
      counters_.cache_hits.fetch_add(1, std::memory_order_relaxed);
    } else {
      counters_.requests_sent.fetch_add(1, std::memory_order_relaxed);
    }
    if (!c.verdict) {
      if (c.error == Err::none) return Error{Err::permission_denied, op.name};
      return Error{c.error, op.name};
    }
    return action();
  }

  // ------------------------------------------------------------------
  // Generic CRUD, each routed through mediate
  // ------------------------------------------------------------------

  Result<EntityId> create(EntityId subject, ByteSpan body) {
    EntityId out;
    EntityId tgt[] = {anchor()};
    auto r = mediate(subject, "create", tgt, [&]() -> Result<Bytes> {
      out = register_object(body);
      return Bytes{};
    });
    if (!r) return r.error();
    return out;
  }

  Result<Bytes> read(EntityId subject, EntityId id) {
    EntityId tgt[] = {id};
    return mediate(subject, "read", tgt, [&]() -> Result<Bytes> {
      std::lock_guard lk(mu_);
      auto obj = store_->get(id.id);
      if (!obj) return Error{Err::unknown_entity, id.str()};
      return obj->body;
    });
  }

  Result<uint64_t> write(EntityId subject, EntityId id, ByteSpan body) {
    uint64_t new_version = 0;
    EntityId tgt[] = {id};
    auto r = mediate(subject, "write", tgt, [&]() -> Result<Bytes> {
      std::lock_guard lk(mu_);
      auto obj = store_->get(id.id);
      if (!obj) return Error{Err::unknown_entity, id.str()};
      new_version = obj->version + 1;
      store_->put(id.id, body, new_version);
      return Bytes{};
    });
    if (!r) return r.error();
    return new_version;
  }

  Result<void> destroy(EntityId subject, EntityId id) {
    EntityId tgt[] = {id};
    auto r = mediate(subject, "destroy", tgt, [&]() -> Result<Bytes> {
      std::lock_guard lk(mu_);
      if (!store_->erase(id.id)) return Error{Err::unknown_entity, id.str()};
      return Bytes{};
    });
    if (!r) return r.error();
    return {};
  }

  // ------------------------------------------------------------------
  // Introspection (no object bodies cross this surface)
  // ------------------------------------------------------------------

  bool exists(EntityId id) const {
    std::lock_guard lk(mu_);
    return id.kind == kind_ && store_->contains(id.id);
  }

  std::optional<uint64_t> version_of(EntityId id) const {
    std::lock_guard lk(mu_);
    auto obj = store_->get(id.id);
    if (!obj) return std::nullopt;
    return obj->version;
  }

  size_t object_count() const {
    std::lock_guard lk(mu_);
    return store_->size();
  }

  MediationCounter& counters() { return counters_; }
  const MediationCounter& counters() const { return counters_; }
  TpsClient& tps() { return tps_; }

 protected:
  /// For derived type-specific TOMs only: store access stays inside the TCB
  /// boundary, callers go through mediate().
  ObjectStore& store_unlocked() { return *store_; }
  std::mutex& table_mutex() const { return mu_; }

 private:
  std::string name_;
  EntityKind kind_;
  TpsClient& tps_;
  std::unique_ptr<ObjectStore> store_;
  mutable std::mutex mu_;
  uint64_t next_id_ = 1;
  MediationCounter counters_;
};

}  // namespace appspear

#endif  // APPSPEAR_TOM_HPP_
