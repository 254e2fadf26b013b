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

#include <filesystem>
#include <set>

#include "appspear/os_tom.hpp"
#include "appspear/tom.hpp"
#include "appspear/tps.hpp"

using namespace appspear;

namespace {

const char* kTomPolicy = R"(
user 1 alice
user 2 bob
role clerk
role admin
op create 2
op read 2
op write 2
op destroy 2
op file_read 2
op file_write 2
op file_create 2
op file_delete 2
grant clerk create emr-document
grant clerk read emr-document
grant clerk write emr-document
grant clerk destroy emr-document
grant admin file_read os-object
grant admin file_write os-object
grant admin file_create os-object
grant admin file_delete os-object
assign alice clerk
assign alice admin
)";

const EntityId kAlice{1, EntityKind::user};
const EntityId kBob{2, EntityKind::user};

struct Rig {
  Bootstrap boot;
  TrustedPolicyServer tps;
  LpcHub hub;
  TpsClient client;
  Tom docs;

  explicit Rig(bool cache_on = true)
      : boot(*parse_bootstrap(kTomPolicy)),
        tps(boot),
        client(std::make_unique<LocalTpsTransport>(tps, hub), cache_on),
        docs("doc-service", EntityKind::emr_document, client) {
    tps.add_broadcaster(&hub);
    REQUIRE(client.admin(TransitionCmd::activate_role(kAlice, "clerk")).ok());
    REQUIRE(client.admin(TransitionCmd::activate_role(kAlice, "admin")).ok());
  }
};

Bytes ascii(const std::string& s) { return Bytes(s.begin(), s.end()); }

}  // namespace

// The object store is reachable only through the TOM: its accessor is not
// part of the public surface.
template <typename T>
concept ExposesStore = requires(T t) { t.store_unlocked(); } ||
                       requires(T t) { t.table_mutex(); };
static_assert(!ExposesStore<Tom>, "object store must not be publicly reachable");

TEST_CASE("registrations assign fresh unique ids, never reused") {
  Rig rig;
  EntityId a = rig.docs.register_object(ascii("a"));
  EntityId b = rig.docs.register_object(ascii("b"));
  CHECK(a.id != b.id);
  CHECK(a.kind == EntityKind::emr_document);

  REQUIRE(rig.docs.destroy(kAlice, b).ok());
  EntityId c = rig.docs.register_object(ascii("c"));
  CHECK(c.id != b.id);
  CHECK(c.id > b.id);

  SECTION("10k registrations stay unique") {
    std::set<uint64_t> ids{a.id, b.id, c.id};
    for (int i = 0; i < 10000; i++) {
      ids.insert(rig.docs.register_object(ascii("x")).id);
    }
    CHECK(ids.size() == 3 + 10000);
  }
}

TEST_CASE("adopt_object binds ids irrevocably") {
  Rig rig;
  REQUIRE(rig.docs.adopt_object({10, EntityKind::emr_document}, ascii("ten")).ok());
  CHECK(rig.docs.exists({10, EntityKind::emr_document}));
  // Lower or equal ids can no longer be taken.
  CHECK(rig.docs.adopt_object({10, EntityKind::emr_document}, ascii("again")).code() ==
        Err::invariant_violation);
  CHECK(rig.docs.adopt_object({3, EntityKind::emr_document}, ascii("low")).code() ==
        Err::invariant_violation);
  CHECK(rig.docs.adopt_object({11, EntityKind::person}, ascii("wrong")).code() ==
        Err::unknown_kind);
  // Fresh registrations continue above.
  CHECK(rig.docs.register_object(ascii("x")).id == 11);
}

TEST_CASE("mediate enforces the verdict") {
  Rig rig;
  EntityId doc = rig.docs.register_object(ascii("v1"));

  SECTION("allowed op executes the action and returns its result") {
    auto r = rig.docs.read(kAlice, doc);
    REQUIRE(r.ok());
    CHECK(*r == ascii("v1"));
  }
  SECTION("denied op returns PermissionDenied and leaves the object alone") {
    auto r = rig.docs.write(kBob, doc, ascii("evil"));
    REQUIRE_FALSE(r.ok());
    CHECK(r.code() == Err::permission_denied);
    CHECK(*rig.docs.read(kAlice, doc) == ascii("v1"));
    CHECK(*rig.docs.version_of(doc) == 1);
  }
  SECTION("unregistered target is rejected before consulting the policy") {
    uint64_t sent = rig.docs.counters().requests_sent.load();
    auto r = rig.docs.read(kAlice, {999, EntityKind::emr_document});
    CHECK(r.code() == Err::unknown_entity);
    CHECK(rig.docs.counters().requests_sent.load() == sent);
  }
}

TEST_CASE("generic CRUD semantics") {
  Rig rig;
  auto created = rig.docs.create(kAlice, ascii("body"));
  REQUIRE(created.ok());

  SECTION("read after create returns the stored body") {
    CHECK(*rig.docs.read(kAlice, *created) == ascii("body"));
  }
  SECTION("write bumps the version by one") {
    CHECK(*rig.docs.version_of(*created) == 1);
    auto v = rig.docs.write(kAlice, *created, ascii("body2"));
    REQUIRE(v.ok());
    CHECK(*v == 2);
    CHECK(*rig.docs.read(kAlice, *created) == ascii("body2"));
  }
  SECTION("destroy then read reports UnknownEntity") {
    REQUIRE(rig.docs.destroy(kAlice, *created).ok());
    CHECK(rig.docs.read(kAlice, *created).code() == Err::unknown_entity);
  }
  SECTION("create denied for a sessionless subject") {
    auto r = rig.docs.create(kBob, ascii("nope"));
    CHECK(r.code() == Err::permission_denied);
  }
}

TEST_CASE("mediation counters account for every consultation") {
  SECTION("cache off: one request per mediated call") {
    Rig rig(/*cache_on=*/false);
    EntityId doc = rig.docs.register_object(ascii("x"));
    const int n = 500;
    for (int i = 0; i < n; i++) (void)rig.docs.read(kAlice, doc);
    auto& c = rig.docs.counters();
    CHECK(c.operations_executed.load() == n);
    CHECK(c.requests_sent.load() == n);
    CHECK(c.cache_hits.load() == 0);
    CHECK(rig.tps.requests_received() == static_cast<uint64_t>(n));
  }
  SECTION("cache on: executed == sent + hits, hits send nothing") {
    Rig rig(/*cache_on=*/true);
    EntityId doc = rig.docs.register_object(ascii("x"));
    const int n = 500;
    for (int i = 0; i < n; i++) (void)rig.docs.read(kAlice, doc);
    auto& c = rig.docs.counters();
    CHECK(c.operations_executed.load() == n);
    CHECK(c.requests_sent.load() == 1);
    CHECK(c.cache_hits.load() == n - 1);
    CHECK(rig.tps.requests_received() == 1);
  }
}

TEST_CASE("cache hits and misses are externally indistinguishable") {
  Rig rig(/*cache_on=*/true);
  EntityId doc = rig.docs.register_object(ascii("same"));
  auto first = rig.docs.read(kAlice, doc);   // miss
  auto second = rig.docs.read(kAlice, doc);  // hit
  REQUIRE(first.ok());
  REQUIRE(second.ok());
  CHECK(*first == *second);
  auto denied1 = rig.docs.write(kBob, doc, ascii("no"));
  auto denied2 = rig.docs.write(kBob, doc, ascii("no"));
  CHECK(denied1.code() == denied2.code());
}

// ---------------------------------------------------------------------------
// OS-object wrapper TOM
// ---------------------------------------------------------------------------

struct OsRig : Rig {
  OsObjectTom os;
  std::string root;

  OsRig() : Rig(), os(make_root(), client), root(current_root) {}

  static std::string make_root() {
    char dir[] = "/tmp/appspear-os-XXXXXX";
    REQUIRE(mkdtemp(dir) != nullptr);
    current_root = dir;
    return dir;
  }
  ~OsRig() { std::filesystem::remove_all(root); }

  static inline std::string current_root;
};

TEST_CASE("os wrapper mediates real file operations") {
  OsRig rig;
  REQUIRE(rig.os.register_path("notes.txt").ok());

  SECTION("allowed create then read roundtrips the content") {
    REQUIRE(rig.os.call(kAlice, OsCall::file_create, "notes.txt", ascii("hello")).ok());
    auto r = rig.os.call(kAlice, OsCall::file_read, "notes.txt");
    REQUIRE(r.ok());
    CHECK(*r == ascii("hello"));
    REQUIRE(rig.os.call(kAlice, OsCall::file_delete, "notes.txt").ok());
    CHECK(rig.os.call(kAlice, OsCall::file_read, "notes.txt").code() == Err::io_failure);
  }
  SECTION("denied write leaves the file unchanged") {
    REQUIRE(rig.os.call(kAlice, OsCall::file_create, "notes.txt", ascii("original")).ok());
    auto r = rig.os.call(kBob, OsCall::file_write, "notes.txt", ascii("tampered"));
    CHECK(r.code() == Err::permission_denied);
    CHECK(*rig.os.call(kAlice, OsCall::file_read, "notes.txt") == ascii("original"));
  }
  SECTION("unregistered path never reaches the policy") {
    uint64_t sent = rig.os.counters().requests_sent.load();
    CHECK(rig.os.call(kAlice, OsCall::file_read, "other.txt").code() == Err::unknown_entity);
    CHECK(rig.os.counters().requests_sent.load() == sent);
  }
  SECTION("exactly one policy consultation per wrapper call") {
    Rig fresh(false);
    OsObjectTom os2(rig.root + "/sub", fresh.client);
    REQUIRE(os2.register_path("f").ok());
    uint64_t before = os2.counters().requests_sent.load();
    (void)os2.call(kAlice, OsCall::file_create, "f", ascii("z"));
    (void)os2.call(kAlice, OsCall::file_read, "f");
    (void)os2.call(kBob, OsCall::file_read, "f");
    CHECK(os2.counters().requests_sent.load() == before + 3);
    CHECK(os2.counters().operations_executed.load() == 3);
  }
  SECTION("paths cannot escape the sandbox root") {
    CHECK(rig.os.register_path("../escape").code() == Err::io_failure);
    CHECK(rig.os.register_path("/etc/passwd").code() == Err::io_failure);
    CHECK(rig.os.register_path("a/../../b").code() == Err::io_failure);
  }
  SECTION("I/O errors are surfaced distinctly from denials") {
    REQUIRE(rig.os.register_path("missing.txt").ok());
    auto r = rig.os.call(kAlice, OsCall::file_read, "missing.txt");
    CHECK(r.code() == Err::io_failure);
  }
}
