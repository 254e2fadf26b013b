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

#ifndef APPSPEAR_ENTITY_HPP_
#define APPSPEAR_ENTITY_HPP_

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <boost/container/small_vector.hpp>

namespace appspear {

/// Object kinds an application may register with its TOMs. The set is fixed
/// per application at TOM registration time; requests naming other kind tags
/// are rejected.
enum class EntityKind : uint8_t {
  user = 0,
  person = 1,
  patient = 2,
  emr_document = 3,
  os_object = 4,
};

inline const char* kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::user: return "user";
    case EntityKind::person: return "person";
    case EntityKind::patient: return "patient";
    case EntityKind::emr_document: return "emr-document";
    case EntityKind::os_object: return "os-object";
  }
  return "?";
}

inline std::optional<EntityKind> kind_from_name(std::string_view s) {
  if (s == "user") return EntityKind::user;
  if (s == "person") return EntityKind::person;
  if (s == "patient") return EntityKind::patient;
  if (s == "emr-document") return EntityKind::emr_document;
  if (s == "os-object") return EntityKind::os_object;
  return std::nullopt;
}

inline bool valid_kind_tag(uint8_t raw) { return raw <= 4; }

/// Identifier binding a policy entity to its runtime or persistent
/// application object. Unique within a policy lifetime; ids are never reused
/// after destroy, and the kind tag is immutable.
struct EntityId {
  uint64_t id = 0;
  EntityKind kind = EntityKind::user;

  friend auto operator<=>(const EntityId&, const EntityId&) = default;

  std::string str() const {
    return std::string(kind_name(kind)) + ":" + std::to_string(id);
  }
};

/// Symbolic operation plus its expected entity-vector length.
struct OperationId {
  std::string name;
  uint8_t arity = 2;

  friend bool operator==(const OperationId&, const OperationId&) = default;
};

// Entity vectors are short (subject plus a handful of targets); keep them
// off the heap on the mediation fast path.
using EntityVec = boost::container::small_vector<EntityId, 4>;

}  // namespace appspear

template <>
struct std::hash<appspear::EntityId> {
  size_t operator()(const appspear::EntityId& e) const noexcept {
    return std::hash<uint64_t>{}(e.id * 0x9e3779b97f4a7c15ULL ^
                                 static_cast<uint64_t>(e.kind));
  }
};

#endif  // APPSPEAR_ENTITY_HPP_
