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

// Policy bootstrap files are line-oriented text:
//
//   # comment and blank lines are ignored
//   mode rbac|allow-all            (default rbac)
//   user <id> <name>               declares a user entity (kind user)
//   role <name>
//   op <name> <arity> [context]    registers an operation; "context" marks
//                                  the op context-classified (evaluated
//                                  through the risk metric)
//   grant <role> <op> <kind>       assigns permission (op, kind) to role
//   assign <user-name> <role>
//   risk-threshold <float>
//   risk-weight <ctx-name> <float>
//
// Sessions always start empty; roles are activated at runtime through the
// administrative channel.

#ifndef APPSPEAR_BOOTSTRAP_HPP_
#define APPSPEAR_BOOTSTRAP_HPP_

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "appspear/common.hpp"
#include "appspear/policy.hpp"

namespace appspear {

struct Bootstrap {
  PolicyState state;
  OperationRegistry ops;
  RiskPolicy risk;
  std::map<std::string, uint64_t> users_by_name;

  Result<EntityId> user_by_name(const std::string& name) const {
    auto it = users_by_name.find(name);
    if (it == users_by_name.end()) return {Err::unknown_user, name};
    return EntityId{it->second, EntityKind::user};
  }
};

inline Result<Bootstrap> parse_bootstrap(std::string_view text) {
  Bootstrap b;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;

  auto fail = [&lineno](const std::string& what) -> Error {
    return {Err::malformed_record, "line " + std::to_string(lineno) + ": " + what};
  };

  while (std::getline(in, line)) {
    lineno++;
    std::istringstream ls(line);
    std::string verb;
    if (!(ls >> verb) || verb[0] == '#') continue;

    if (verb == "mode") {
      std::string m;
      ls >> m;
      if (m == "allow-all") b.state.allow_all = true;
      else if (m != "rbac") return fail("unknown mode " + m);
    } else if (verb == "user") {
      uint64_t id = 0;
      std::string name;
      if (!(ls >> id >> name)) return fail("user <id> <name>");
      if (b.state.users.contains(id)) return fail("duplicate user id");
      if (b.users_by_name.contains(name)) return fail("duplicate user name");
      b.state.users.insert(id);
      b.users_by_name[name] = id;
    } else if (verb == "role") {
      std::string name;
      if (!(ls >> name)) return fail("role <name>");
      b.state.roles.insert(name);
    } else if (verb == "op") {
      std::string name, flag;
      int arity = 0;
      if (!(ls >> name >> arity) || arity < 1 || arity > 255) {
        return fail("op <name> <arity> [context]");
      }
      OpInfo info;
      info.arity = static_cast<uint8_t>(arity);
      if (ls >> flag) {
        if (flag != "context") return fail("unknown op flag " + flag);
        info.context_required = true;
      }
      b.ops[name] = info;
    } else if (verb == "grant") {
      std::string role, op, kind;
      if (!(ls >> role >> op >> kind)) return fail("grant <role> <op> <kind>");
      if (!b.state.roles.contains(role)) return fail("unknown role " + role);
      if (!b.ops.contains(op)) return fail("unknown op " + op);
      auto k = kind_from_name(kind);
      if (!k) return fail("unknown kind " + kind);
      Permission p{op, *k};
      b.state.permissions.insert(p);
      b.state.role_perms[role].insert(p);
    } else if (verb == "assign") {
      std::string user, role;
      if (!(ls >> user >> role)) return fail("assign <user> <role>");
      auto it = b.users_by_name.find(user);
      if (it == b.users_by_name.end()) return fail("unknown user " + user);
      if (!b.state.roles.contains(role)) return fail("unknown role " + role);
      b.state.user_roles[it->second].insert(role);
    } else if (verb == "risk-threshold") {
      if (!(ls >> b.risk.threshold)) return fail("risk-threshold <float>");
    } else if (verb == "risk-weight") {
      std::string name;
      double w = 0.0;
      if (!(ls >> name >> w)) return fail("risk-weight <name> <float>");
      b.risk.weights[name] = w;
    } else {
      return fail("unknown directive " + verb);
    }
  }
  return b;
}

inline Result<Bootstrap> load_bootstrap(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return {Err::io_failure, "cannot open " + path};
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_bootstrap(ss.str());
}

}  // namespace appspear

#endif  // APPSPEAR_BOOTSTRAP_HPP_
