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

// Brute-force relational oracle. Deliberately written as a direct join over
// the session/assignment relations, independent of the library's evaluation
// path, so the two can be compared property-style.

#ifndef APPSPEAR_TESTS_SUPPORT_ORACLE_HPP_
#define APPSPEAR_TESTS_SUPPORT_ORACLE_HPP_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "appspear/entity.hpp"
#include "appspear/policy.hpp"

namespace appspear::testgen {

/// Enumerates every (user, activated role, permission) triple and checks
/// whether one of them matches the request. No early lookup structure: the
/// whole cross product is walked.
inline bool oracle_verdict(const PolicyState& s, std::span<const EntityId> entities,
                           const OperationId& op) {
  if (s.allow_all) return entities.size() == op.arity;
  if (entities.size() != op.arity || entities.empty()) return false;
  const EntityId subject = entities[0];
  if (subject.kind != EntityKind::user) return false;
  bool subject_known = false;
  for (uint64_t u : s.users) {
    if (u == subject.id) subject_known = true;
  }
  if (!subject_known) return false;
  for (const EntityId& e : entities) {
    if (e.kind != EntityKind::user) continue;
    bool known = false;
    for (uint64_t u : s.users) {
      if (u == e.id) known = true;
    }
    if (!known) return false;
  }
  EntityKind target_kind = entities.size() >= 2 ? entities[1].kind : subject.kind;

  // user -> activated roles -> permissions join, fully enumerated.
  for (const auto& [uid, active_roles] : s.sessions) {
    if (uid != subject.id) continue;
    for (const std::string& role : active_roles) {
      bool assigned = false;
      for (const auto& [au, aroles] : s.user_roles) {
        if (au == uid && aroles.contains(role)) assigned = true;
      }
      if (!assigned) continue;  // would violate the state invariant
      for (const auto& [prole, perms] : s.role_perms) {
        if (prole != role) continue;
        for (const Permission& p : perms) {
          if (p.op == op.name && p.kind == target_kind) return true;
        }
      }
    }
  }
  return false;
}

/// Full verdict table over a population of subjects, targets and ops.
/// Used to diff states for invalidation-soundness and persistence checks.
struct VerdictTable {
  std::vector<uint8_t> verdicts;

  friend bool operator==(const VerdictTable&, const VerdictTable&) = default;
};

template <typename OpsMap>
inline VerdictTable oracle_table(const PolicyState& s,
                                 std::span<const EntityId> subjects,
                                 std::span<const EntityId> targets,
                                 const OpsMap& ops) {
  VerdictTable t;
  for (const EntityId& u : subjects) {
    for (const EntityId& o : targets) {
      for (const auto& [name, info] : ops) {
        std::vector<EntityId> es{u, o};
        t.verdicts.push_back(
            oracle_verdict(s, es, OperationId{name, info.arity}) ? 1 : 0);
      }
    }
  }
  return t;
}

}  // namespace appspear::testgen

#endif  // APPSPEAR_TESTS_SUPPORT_ORACLE_HPP_
