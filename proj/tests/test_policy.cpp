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

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "appspear/bootstrap.hpp"
#include "appspear/policy.hpp"
#include "support/gen.hpp"
#include "support/oracle.hpp"

using namespace appspear;

namespace {

const EntityId kAlice{1, EntityKind::user};
const EntityId kEprBob{100, EntityKind::patient};
const OperationId kAppend{"append", 2};

PolicyState physician_state() {
  PolicyState s;
  s.users.insert(kAlice.id);
  s.roles.insert("physician");
  Permission p{"append", EntityKind::patient};
  s.permissions.insert(p);
  s.role_perms["physician"].insert(p);
  s.user_roles[kAlice.id].insert("physician");
  s.sessions[kAlice.id].insert("physician");
  return s;
}

}  // namespace

TEST_CASE("activated role with matching permission grants access") {
  PolicyState s = physician_state();
  std::vector<EntityId> es{kAlice, kEprBob};
  auto v = evaluate_acf(s, es, kAppend);
  REQUIRE(v.ok());
  CHECK(*v == true);
}

TEST_CASE("empty session authorizes nothing") {
  PolicyState s = physician_state();
  s.sessions.clear();
  std::vector<EntityId> es{kAlice, kEprBob};
  auto v = evaluate_acf(s, es, kAppend);
  REQUIRE(v.ok());
  CHECK(*v == false);
}

TEST_CASE("assigned but not activated role authorizes nothing") {
  PolicyState s = physician_state();
  s.sessions[kAlice.id].erase("physician");
  std::vector<EntityId> es{kAlice, kEprBob};
  REQUIRE(*evaluate_acf(s, es, kAppend) == false);
}

TEST_CASE("evaluate_acf error paths") {
  PolicyState s = physician_state();

  SECTION("unknown subject") {
    std::vector<EntityId> es{{99, EntityKind::user}, kEprBob};
    auto v = evaluate_acf(s, es, kAppend);
    REQUIRE_FALSE(v.ok());
    CHECK(v.code() == Err::unknown_entity);
  }
  SECTION("arity mismatch") {
    std::vector<EntityId> es{kAlice};
    auto v = evaluate_acf(s, es, kAppend);
    REQUIRE_FALSE(v.ok());
    CHECK(v.code() == Err::arity_mismatch);
  }
  SECTION("non-user subject") {
    std::vector<EntityId> es{kEprBob, kEprBob};
    auto v = evaluate_acf(s, es, kAppend);
    REQUIRE_FALSE(v.ok());
    CHECK(v.code() == Err::unknown_entity);
  }
}

TEST_CASE("evaluate_acf is pure") {
  PolicyState s = physician_state();
  PolicyState before = s;
  std::vector<EntityId> es{kAlice, kEprBob};
  (void)evaluate_acf(s, es, kAppend);
  (void)evaluate_acf(s, es, OperationId{"nonexistent", 2});
  CHECK(s == before);
  CHECK(s.epoch == before.epoch);
}

TEST_CASE("verdicts match the brute-force relational oracle") {
  std::mt19937_64 rng(20260809);
  for (int iter = 0; iter < 300; iter++) {
    auto w = testgen::random_world(rng);
    for (int q = 0; q < 50; q++) {
      auto req = testgen::random_request(rng, w, /*allow_unknown=*/true);
      std::span<const EntityId> es{req.entities.data(), req.entities.size()};
      auto got = evaluate_acf(w.state, es, req.op);
      bool want = testgen::oracle_verdict(w.state, es, req.op);
      // Errors deny; the oracle folds errors into false the same way.
      bool got_bool = got.ok() ? *got : false;
      REQUIRE(got_bool == want);
    }
  }
}

// ---------------------------------------------------------------------------
// risk_score / evaluate_context_acf
// ---------------------------------------------------------------------------

TEST_CASE("risk_score basics") {
  RiskPolicy risk;
  risk.weights["time"] = 0.0;
  risk.weights["geo"] = 0.0;

  SECTION("zero weights give zero score") {
    std::vector<ContextValue> ctx{{"time", 123.0, 1}, {"geo", -4.0, 1}};
    auto sc = risk_score(ctx, risk);
    REQUIRE(sc.ok());
    CHECK(*sc == 0.0);
  }
  SECTION("single-term product") {
    risk.weights["time"] = 3.0;
    std::vector<ContextValue> ctx{{"time", 2.0, 1}};
    CHECK(*risk_score(ctx, risk) == 6.0);
  }
  SECTION("unknown variable") {
    std::vector<ContextValue> ctx{{"altitude", 1.0, 1}};
    auto sc = risk_score(ctx, risk);
    REQUIRE_FALSE(sc.ok());
    CHECK(sc.code() == Err::unknown_context_variable);
  }
}

TEST_CASE("context ACF combines base verdict and risk threshold") {
  PolicyState s = physician_state();
  std::vector<EntityId> es{kAlice, kEprBob};

  SECTION("zero risk always acceptable") {
    RiskPolicy risk;
    risk.weights["time"] = 0.0;
    risk.threshold = 0.0;
    std::vector<ContextValue> ctx{{"time", 42.0, 1}};
    auto v = evaluate_context_acf(s, es, ctx, kAppend, risk);
    REQUIRE(v.ok());
    CHECK(*v == true);
  }
  SECTION("score above threshold denies even when base ACF allows") {
    RiskPolicy risk;
    risk.weights["time"] = 1.0;
    risk.threshold = 4.0;
    std::vector<ContextValue> ctx{{"time", 5.0, 1}};
    auto v = evaluate_context_acf(s, es, ctx, kAppend, risk);
    REQUIRE(v.ok());
    CHECK(*v == false);
  }
}

TEST_CASE("context ACF equals independently recomputed conjunction") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> val(-10.0, 10.0);
  for (int iter = 0; iter < 200; iter++) {
    auto w = testgen::random_world(rng);
    RiskPolicy risk;
    risk.threshold = val(rng);
    int n_ctx = std::uniform_int_distribution<int>(1, 4)(rng);
    std::vector<ContextValue> ctx;
    for (int i = 0; i < n_ctx; i++) {
      std::string name = "c" + std::to_string(i);
      risk.weights[name] = val(rng);
      ctx.push_back({name, val(rng), 1});
    }
    auto req = testgen::random_request(rng, w);
    std::span<const EntityId> es{req.entities.data(), req.entities.size()};

    double score = 0.0;
    for (const auto& c : ctx) score += risk.weights[c.name] * c.value;
    bool want = testgen::oracle_verdict(w.state, es, req.op) && score <= risk.threshold;

    auto got = evaluate_context_acf(w.state, es, ctx, req.op, risk);
    bool got_bool = got.ok() ? *got : false;
    REQUIRE(got_bool == want);
  }
}

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

TEST_CASE("transition examples") {
  PolicyState s = physician_state();

  SECTION("revoke_role invalidates the subject's keys and removes access") {
    auto r = apply_transition(s, TransitionCmd::revoke_role(kAlice, "physician"));
    REQUIRE(r.ok());
    CHECK(r->next.epoch == s.epoch + 1);
    bool covers_alice = false;
    for (const auto& p : r->invalidated) {
      if (p.match == KeyPattern::Match::all ||
          (p.match == KeyPattern::Match::subject && p.subject_id == kAlice.id)) {
        covers_alice = true;
      }
    }
    CHECK(covers_alice);
    std::vector<EntityId> es{kAlice, kEprBob};
    CHECK(*evaluate_acf(r->next, es, kAppend) == false);
    // Session invariant maintained: the revoked role left the session too.
    CHECK_FALSE(r->next.sessions[kAlice.id].contains("physician"));
  }

  SECTION("assign without activation changes no verdicts") {
    auto r0 = apply_transition(s, TransitionCmd{TransitionCmd::Kind::add_user,
                                                {2, EntityKind::user}, {}, {}});
    REQUIRE(r0.ok());
    PolicyState s1 = r0->next;
    s1.roles.insert("nurse");
    auto r = apply_transition(s1, TransitionCmd::assign_role({2, EntityKind::user}, "nurse"));
    REQUIRE(r.ok());
    std::vector<EntityId> subjects{kAlice, {2, EntityKind::user}};
    std::vector<EntityId> targets{kEprBob};
    std::map<std::string, OpInfo> ops{{"append", {2, false}}};
    auto before = testgen::oracle_table(s1, subjects, targets, ops);
    auto after = testgen::oracle_table(r->next, subjects, targets, ops);
    CHECK(before == after);
  }

  SECTION("add_user bumps the epoch and changes nothing else") {
    auto r = apply_transition(s, TransitionCmd::add_user({7, EntityKind::user}));
    REQUIRE(r.ok());
    CHECK(r->next.epoch == s.epoch + 1);
    std::vector<EntityId> es{kAlice, kEprBob};
    CHECK(*evaluate_acf(r->next, es, kAppend) == true);
  }

  SECTION("activating an unassigned role is an invariant violation") {
    s.roles.insert("nurse");
    auto r = apply_transition(s, TransitionCmd::activate_role(kAlice, "nurse"));
    REQUIRE_FALSE(r.ok());
    CHECK(r.code() == Err::invariant_violation);
  }

  SECTION("unknown referent") {
    auto r = apply_transition(s, TransitionCmd::revoke_role({99, EntityKind::user}, "physician"));
    REQUIRE_FALSE(r.ok());
    CHECK(r.code() == Err::unknown_referent);
  }
}

TEST_CASE("epoch is monotone, +1 per successful transition, unchanged on error") {
  std::mt19937_64 rng(99);
  auto w = testgen::random_world(rng);
  uint64_t epoch = w.state.epoch;
  int applied = 0;
  for (int i = 0; i < 200; i++) {
    TransitionCmd cmd;
    testgen::World scratch = w;
    if (!testgen::random_transition(rng, scratch, cmd)) continue;
    auto r = apply_transition(w.state, cmd);
    REQUIRE(r.ok());
    REQUIRE(r->next.epoch == epoch + 1);
    w.state = r->next;
    epoch = r->next.epoch;
    applied++;
  }
  REQUIRE(applied > 10);

  // Failed transitions leave no trace.
  PolicyState before = w.state;
  auto bad = apply_transition(w.state, TransitionCmd::add_user(w.users[0]));
  REQUIRE_FALSE(bad.ok());
  CHECK(w.state == before);
}

TEST_CASE("invalidation soundness: every changed verdict is covered") {
  std::mt19937_64 rng(31337);
  for (int iter = 0; iter < 200; iter++) {
    auto w = testgen::random_world(rng);
    TransitionCmd cmd;
    testgen::World scratch = w;  // random_transition mutates; keep original
    if (!testgen::random_transition(rng, scratch, cmd)) continue;
    auto r = apply_transition(w.state, cmd);
    if (!r.ok()) continue;

    auto covered = [&](const EntityId& subject) {
      for (const auto& p : r->invalidated) {
        if (p.match == KeyPattern::Match::all) return true;
        if (p.match == KeyPattern::Match::subject && p.subject_id == subject.id) {
          return true;
        }
      }
      return false;
    };

    for (const EntityId& u : w.users) {
      for (const EntityId& o : w.objects) {
        for (const auto& [name, info] : w.ops) {
          std::vector<EntityId> es{u, o};
          OperationId op{name, info.arity};
          bool before = testgen::oracle_verdict(w.state, es, op);
          bool after = testgen::oracle_verdict(r->next, es, op);
          if (before != after) {
            INFO("transition " << transition_name(cmd.kind) << " subject "
                               << u.str() << " op " << name);
            REQUIRE(covered(u));
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Bootstrap grammar
// ---------------------------------------------------------------------------

TEST_CASE("bootstrap parse") {
  const char* text = R"(
# demo policy
user 1 alice
user 2 bob
role physician
role nurse
op append 2
op read_diag 2 context
grant physician append patient
assign alice physician
risk-threshold 4.5
risk-weight time 1.25
)";
  auto b = parse_bootstrap(text);
  REQUIRE(b.ok());
  CHECK(b->state.users.size() == 2);
  CHECK(b->state.roles.contains("physician"));
  CHECK(b->ops.at("read_diag").context_required);
  CHECK(b->ops.at("append").arity == 2);
  CHECK(b->state.role_perms.at("physician").contains({"append", EntityKind::patient}));
  CHECK(b->state.user_roles.at(1).contains("physician"));
  CHECK(b->risk.threshold == 4.5);
  CHECK(b->risk.weights.at("time") == 1.25);
  CHECK(b->user_by_name("alice")->id == 1);
  CHECK(b->user_by_name("mallory").code() == Err::unknown_user);
  // Sessions start empty.
  CHECK(b->state.sessions.empty());
}

TEST_CASE("bootstrap rejects malformed input") {
  CHECK(parse_bootstrap("user 1 alice\nuser 1 bob\n").code() == Err::malformed_record);
  CHECK(parse_bootstrap("grant ghost op patient\n").code() == Err::malformed_record);
  CHECK(parse_bootstrap("op x 0\n").code() == Err::malformed_record);
  CHECK(parse_bootstrap("frobnicate\n").code() == Err::malformed_record);
  CHECK(parse_bootstrap("mode sideways\n").code() == Err::malformed_record);
}

TEST_CASE("allow-all mode grants any well-formed request") {
  auto b = parse_bootstrap("mode allow-all\nop synth 2\n");
  REQUIRE(b.ok());
  std::vector<EntityId> es{{1, EntityKind::user}, {2, EntityKind::emr_document}};
  CHECK(*evaluate_acf(b->state, es, {"synth", 2}) == true);
  // Arity is still enforced.
  std::vector<EntityId> short_es{{1, EntityKind::user}};
  CHECK_FALSE(evaluate_acf(b->state, short_es, {"synth", 2}).ok());
}
