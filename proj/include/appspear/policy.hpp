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

#ifndef APPSPEAR_POLICY_HPP_
#define APPSPEAR_POLICY_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "appspear/common.hpp"
#include "appspear/entity.hpp"

namespace appspear {

/// Latest known value of one context variable (time, geolocation, ...).
/// Timestamps are monotonic per variable name.
struct ContextValue {
  std::string name;
  double value = 0.0;
  uint64_t timestamp = 0;

  friend bool operator==(const ContextValue&, const ContextValue&) = default;
};

/// Weighted-sum risk metric: a request is acceptable iff
/// sum(weights[name] * value) <= threshold.
struct RiskPolicy {
  std::map<std::string, double> weights;
  double threshold = 0.0;
};

/// A permission is an (operation, target entity kind) pair.
struct Permission {
  std::string op;
  EntityKind kind = EntityKind::user;

  friend auto operator<=>(const Permission&, const Permission&) = default;
};

/// RBAC policy state with sessions. Relations are kept in ordered containers
/// so serialization and digests are canonical.
///
/// Invariants:
///   - sessions[u] is a subset of user_roles[u] (only assigned roles can be
///     activated),
///   - every relation member references an existing user/role/permission,
///   - epoch increases by exactly 1 on every successful transition.
struct PolicyState {
  uint64_t epoch = 0;
  /// Synthetic always-allow policy used by the baseline benchmark: every
  /// well-formed request is granted without consulting the relations.
  bool allow_all = false;

  std::set<uint64_t> users;  // EntityIds of kind user
  std::set<std::string> roles;
  std::set<Permission> permissions;
  std::map<uint64_t, std::set<std::string>> user_roles;      // UA
  std::map<std::string, std::set<Permission>> role_perms;    // PA
  std::map<uint64_t, std::set<std::string>> sessions;

  friend bool operator==(const PolicyState&, const PolicyState&) = default;
};

/// Per-operation metadata the policy runtime needs beyond the name: the
/// expected arity and whether the operation is context-classified (decided
/// per application, loaded from the bootstrap file).
struct OpInfo {
  uint8_t arity = 2;
  bool context_required = false;

  friend bool operator==(const OpInfo&, const OpInfo&) = default;
};

using OperationRegistry = std::map<std::string, OpInfo>;

namespace detail {

inline EntityKind permission_target_kind(std::span<const EntityId> entities) {
  // Convention: entities[0] is the requesting subject; the permission is
  // checked against the kind of entities[1]. Arity-1 operations fall back to
  // the subject's own kind.
  return entities.size() >= 2 ? entities[1].kind : entities[0].kind;
}

}  // namespace detail

/// The access control function f_P: maps an entity vector and an operation
/// to allow/deny. Pure; never modifies state.
///
/// Returns true iff the requesting user (entities[0] by convention) has an
/// activated role to which the permission (op, kind(entities[1])) is
/// assigned.
inline Result<bool> evaluate_acf(const PolicyState& state,
                                 std::span<const EntityId> entities,
                                 const OperationId& op) {
  if (entities.size() != op.arity) {
    return {Err::arity_mismatch,
            op.name + " expects " + std::to_string(op.arity) + " entities, got " +
                std::to_string(entities.size())};
  }
  if (state.allow_all) return true;
  if (entities.empty()) return {Err::arity_mismatch, "empty entity vector"};

  // Entities of kind user must exist in the policy state; other kinds are
  // registered and authenticated by their owning TOM.
  for (const EntityId& e : entities) {
    if (e.kind == EntityKind::user && !state.users.contains(e.id)) {
      return {Err::unknown_entity, e.str()};
    }
  }
  const EntityId& subject = entities[0];
  if (subject.kind != EntityKind::user) {
    return {Err::unknown_entity, "subject must be a user: " + subject.str()};
  }

  auto sess = state.sessions.find(subject.id);
  if (sess == state.sessions.end() || sess->second.empty()) return false;

  const Permission wanted{op.name, detail::permission_target_kind(entities)};
  for (const std::string& role : sess->second) {
    auto pa = state.role_perms.find(role);
    if (pa != state.role_perms.end() && pa->second.contains(wanted)) return true;
  }
  return false;
}

/// Weighted-sum risk metric over context values.
inline Result<double> risk_score(std::span<const ContextValue> contexts,
                                 const RiskPolicy& risk) {
  double score = 0.0;
  for (const ContextValue& c : contexts) {
    auto w = risk.weights.find(c.name);
    if (w == risk.weights.end()) return {Err::unknown_context_variable, c.name};
    score += w->second * c.value;
  }
  return score;
}

/// The context-aware access control function f_P': the base ACF verdict
/// gated by the risk threshold.
inline Result<bool> evaluate_context_acf(const PolicyState& state,
                                         std::span<const EntityId> entities,
                                         std::span<const ContextValue> contexts,
                                         const OperationId& op,
                                         const RiskPolicy& risk) {
  auto base = evaluate_acf(state, entities, op);
  if (!base) return base;
  auto score = risk_score(contexts, risk);
  if (!score) return score.error();
  return *base && *score <= risk.threshold;
}

// ---------------------------------------------------------------------------
// State transitions
// ---------------------------------------------------------------------------

/// Cache-key pattern named in an invalidation notice: either everything or
/// every key whose subject (entities[0]) matches.
struct KeyPattern {
  enum class Match : uint8_t { all = 0, subject = 1 };
  Match match = Match::all;
  uint64_t subject_id = 0;

  static KeyPattern wildcard() { return {}; }
  static KeyPattern for_subject(uint64_t id) {
    return {Match::subject, id};
  }

  friend auto operator<=>(const KeyPattern&, const KeyPattern&) = default;
};

struct TransitionCmd {
  enum class Kind : uint8_t {
    add_user = 0,
    remove_user = 1,
    assign_role = 2,
    revoke_role = 3,
    activate_role = 4,
    deactivate_role = 5,
    grant_permission = 6,
    revoke_permission = 7,
  };

  Kind kind = Kind::add_user;
  EntityId user;          // add/remove/assign/revoke/activate/deactivate
  std::string role;       // all but add/remove_user
  Permission permission;  // grant/revoke_permission

  friend bool operator==(const TransitionCmd&, const TransitionCmd&) = default;

  static TransitionCmd add_user(EntityId u) { return {Kind::add_user, u, {}, {}}; }
  static TransitionCmd remove_user(EntityId u) { return {Kind::remove_user, u, {}, {}}; }
  static TransitionCmd assign_role(EntityId u, std::string r) {
    return {Kind::assign_role, u, std::move(r), {}};
  }
  static TransitionCmd revoke_role(EntityId u, std::string r) {
    return {Kind::revoke_role, u, std::move(r), {}};
  }
  static TransitionCmd activate_role(EntityId u, std::string r) {
    return {Kind::activate_role, u, std::move(r), {}};
  }
  static TransitionCmd deactivate_role(EntityId u, std::string r) {
    return {Kind::deactivate_role, u, std::move(r), {}};
  }
  static TransitionCmd grant_permission(std::string role, Permission p) {
    return {Kind::grant_permission, {}, std::move(role), std::move(p)};
  }
  static TransitionCmd revoke_permission(std::string role, Permission p) {
    return {Kind::revoke_permission, {}, std::move(role), std::move(p)};
  }
};

inline const char* transition_name(TransitionCmd::Kind k) {
  switch (k) {
    case TransitionCmd::Kind::add_user: return "add_user";
    case TransitionCmd::Kind::remove_user: return "remove_user";
    case TransitionCmd::Kind::assign_role: return "assign_role";
    case TransitionCmd::Kind::revoke_role: return "revoke_role";
    case TransitionCmd::Kind::activate_role: return "activate_role";
    case TransitionCmd::Kind::deactivate_role: return "deactivate_role";
    case TransitionCmd::Kind::grant_permission: return "grant_permission";
    case TransitionCmd::Kind::revoke_permission: return "revoke_permission";
  }
  return "?";
}

struct TransitionResult {
  PolicyState next;
  /// Every cached (entities, op) key whose verdict may have changed matches
  /// at least one of these patterns. Over-approximation is permitted,
  /// under-approximation is not.
  std::vector<KeyPattern> invalidated;
};

/// Applies one transition command, producing the successor state and the
/// set of cache-key patterns to invalidate. The input state is untouched;
/// on error no successor exists and the epoch is unchanged.
inline Result<TransitionResult> apply_transition(const PolicyState& state,
                                                 const TransitionCmd& cmd) {
  using Kind = TransitionCmd::Kind;
  TransitionResult out{state, {}};
  PolicyState& s = out.next;

  auto subjects_with_role = [&](const std::string& role) {
    // Conservative: verdicts can only change for users with the role
    // activated, but we invalidate per assigned user.
    std::vector<KeyPattern> pats;
    for (const auto& [uid, roles] : s.user_roles) {
      if (roles.contains(role)) pats.push_back(KeyPattern::for_subject(uid));
    }
    return pats;
  };

  switch (cmd.kind) {
    case Kind::add_user: {
      if (cmd.user.kind != EntityKind::user) {
        return {Err::invariant_violation, "add_user with non-user kind"};
      }
      if (s.users.contains(cmd.user.id)) {
        return {Err::invariant_violation, "user already exists: " + cmd.user.str()};
      }
      s.users.insert(cmd.user.id);
      // Fresh user: no sessions, no cached verdicts can change.
      break;
    }
    case Kind::remove_user: {
      if (!s.users.contains(cmd.user.id)) return {Err::unknown_referent, cmd.user.str()};
      s.users.erase(cmd.user.id);
      s.user_roles.erase(cmd.user.id);
      s.sessions.erase(cmd.user.id);
      out.invalidated.push_back(KeyPattern::for_subject(cmd.user.id));
      break;
    }
    case Kind::assign_role: {
      if (!s.users.contains(cmd.user.id)) return {Err::unknown_referent, cmd.user.str()};
      if (!s.roles.contains(cmd.role)) return {Err::unknown_referent, cmd.role};
      if (s.user_roles[cmd.user.id].contains(cmd.role)) {
        return {Err::invariant_violation, "role already assigned"};
      }
      s.user_roles[cmd.user.id].insert(cmd.role);
      out.invalidated.push_back(KeyPattern::for_subject(cmd.user.id));
      break;
    }
    case Kind::revoke_role: {
      auto ua = s.user_roles.find(cmd.user.id);
      if (ua == s.user_roles.end() || !ua->second.contains(cmd.role)) {
        return {Err::unknown_referent, "role not assigned"};
      }
      ua->second.erase(cmd.role);
      // Keep sessions within assigned roles.
      auto sess = s.sessions.find(cmd.user.id);
      if (sess != s.sessions.end()) sess->second.erase(cmd.role);
      out.invalidated.push_back(KeyPattern::for_subject(cmd.user.id));
      break;
    }
    case Kind::activate_role: {
      if (!s.users.contains(cmd.user.id)) return {Err::unknown_referent, cmd.user.str()};
      auto ua = s.user_roles.find(cmd.user.id);
      if (ua == s.user_roles.end() || !ua->second.contains(cmd.role)) {
        return {Err::invariant_violation, "activating unassigned role " + cmd.role};
      }
      s.sessions[cmd.user.id].insert(cmd.role);
      out.invalidated.push_back(KeyPattern::for_subject(cmd.user.id));
      break;
    }
    case Kind::deactivate_role: {
      auto sess = s.sessions.find(cmd.user.id);
      if (sess == s.sessions.end() || !sess->second.contains(cmd.role)) {
        return {Err::unknown_referent, "role not activated"};
      }
      sess->second.erase(cmd.role);
      out.invalidated.push_back(KeyPattern::for_subject(cmd.user.id));
      break;
    }
    case Kind::grant_permission: {
      if (!s.roles.contains(cmd.role)) return {Err::unknown_referent, cmd.role};
      if (s.role_perms[cmd.role].contains(cmd.permission)) {
        return {Err::invariant_violation, "permission already granted"};
      }
      s.permissions.insert(cmd.permission);
      s.role_perms[cmd.role].insert(cmd.permission);
      out.invalidated = subjects_with_role(cmd.role);
      break;
    }
    case Kind::revoke_permission: {
      auto pa = s.role_perms.find(cmd.role);
      if (pa == s.role_perms.end() || !pa->second.contains(cmd.permission)) {
        return {Err::unknown_referent, "permission not granted"};
      }
      pa->second.erase(cmd.permission);
      out.invalidated = subjects_with_role(cmd.role);
      break;
    }
  }

  s.epoch = state.epoch + 1;
  return out;
}

}  // namespace appspear

#endif  // APPSPEAR_POLICY_HPP_
