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
#include <fstream>
#include <random>
#include <thread>

#include "appspear/channel.hpp"
#include "appspear/ipc_channel.hpp"
#include "appspear/tee_channel.hpp"

using namespace appspear;

namespace {

/// Responder that echoes the request body back as a decision frame.
struct EchoHandler : FrameHandler {
  wire::Frame handle_frame(const wire::Frame& f) override {
    return {wire::MsgType::decision, f.body};
  }
};

Bytes with_id(uint64_t id, ByteSpan payload) {
  wire::Writer w;
  w.u64(id);
  w.raw(payload);
  return w.take();
}

Bytes random_payload(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Bytes b(n);
  for (auto& x : b) x = static_cast<uint8_t>(rng());
  return b;
}

struct TmpDir {
  std::string path;
  TmpDir() {
    char d[] = "/tmp/appspear-tr-XXXXXX";
    REQUIRE(mkdtemp(d) != nullptr);
    path = d;
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
};

struct TeeRig {
  TmpDir dir;
  std::string exe, policy, sock;
  Measurement measurement;
  EchoHandler echo;
  std::unique_ptr<SocketResponderHost> host;

  TeeRig() {
    exe = dir.path + "/worker-image";
    policy = dir.path + "/policy.txt";
    sock = dir.path + "/appspear-tee.sock";
    std::ofstream(exe) << "trusted worker image bytes";
    std::ofstream(policy) << "user 1 alice\nrole r\n";
    auto m = measure_trusted_image(exe, policy);
    REQUIRE(m.ok());
    measurement = *m;
    host = std::make_unique<SocketResponderHost>(sock, echo,
                                                 tee_conn_setup(measurement, echo));
    REQUIRE(host->start().ok());
  }

  TeeConnectOptions opts(uint32_t depth = 0) {
    TeeConnectOptions o;
    o.expected_measurement = measurement;
    o.queue_depth = depth;
    o.runtime_dir = dir.path;
    return o;
  }
};

}  // namespace

TEST_CASE("LPC channel is a direct dispatch") {
  EchoHandler echo;
  LpcChannel ch(echo);
  Bytes payload = with_id(5, random_payload(64, 1));
  auto resp = ch.call({wire::MsgType::request, payload});
  REQUIRE(resp.ok());
  CHECK(resp->body == payload);
}

TEST_CASE("IPC echo roundtrips a 1 KiB payload byte-identically") {
  TmpDir dir;
  EchoHandler echo;
  SocketResponderHost host(dir.path + "/appspear-tps.sock", echo, plain_conn_setup());
  REQUIRE(host.start().ok());

  auto ch = connect_ipc(host.path());
  REQUIRE(ch.ok());
  Bytes payload = with_id(42, random_payload(1024, 2));
  auto resp = (*ch)->call({wire::MsgType::request, payload});
  REQUIRE(resp.ok());
  CHECK(resp->type == wire::MsgType::decision);
  CHECK(resp->body == payload);
}

TEST_CASE("pipelined requests are answered with matching correlation ids") {
  TmpDir dir;
  EchoHandler echo;
  SocketResponderHost host(dir.path + "/appspear-tps.sock", echo, plain_conn_setup());
  REQUIRE(host.start().ok());
  auto ch = connect_ipc(host.path());
  REQUIRE(ch.ok());

  constexpr int kThreads = 4, kCalls = 200;
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int t = 0; t < kThreads; t++) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < kCalls; i++) {
        uint64_t id = static_cast<uint64_t>(t) * 1000000 + static_cast<uint64_t>(i);
        Bytes payload = with_id(id, random_payload(32, id));
        auto resp = (*ch)->call({wire::MsgType::request, payload});
        if (!resp || resp->body != payload) failures++;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(failures.load() == 0);
}

TEST_CASE("connect to a missing responder reports BackendUnavailable") {
  auto fd = unix_connect("/tmp/appspear-definitely-absent.sock",
                         std::chrono::milliseconds(50));
  REQUIRE_FALSE(fd.ok());
  CHECK(fd.code() == Err::backend_unavailable);
}

TEST_CASE("peer death fails calls closed, never hangs") {
  TmpDir dir;
  EchoHandler echo;
  auto host = std::make_unique<SocketResponderHost>(dir.path + "/s.sock", echo,
                                                    plain_conn_setup());
  REQUIRE(host->start().ok());
  auto ch = connect_ipc(host->path());
  REQUIRE(ch.ok());
  REQUIRE((*ch)->call({wire::MsgType::request, with_id(1, {})}).ok());

  host.reset();  // responder dies
  auto r = (*ch)->call({wire::MsgType::request, with_id(2, {})});
  REQUIRE_FALSE(r.ok());
  CHECK(r.code() == Err::transport_failure);
}

// ---------------------------------------------------------------------------
// TEE-sim
// ---------------------------------------------------------------------------

TEST_CASE("TEE handshake attests the worker and encrypts the channel") {
  TeeRig rig;
  auto ch = connect_tee(rig.sock, rig.opts());
  REQUIRE(ch.ok());
  Bytes payload = with_id(9, random_payload(256, 3));
  auto resp = (*ch)->call({wire::MsgType::request, payload});
  REQUIRE(resp.ok());
  CHECK(resp->body == payload);
}

TEST_CASE("tampered policy file is rejected at attestation") {
  TeeRig rig;
  // The worker was launched (and measured) before the tampering.
  std::ofstream(rig.policy, std::ios::app) << "user 666 mallory\n";
  auto expected = measure_trusted_image(rig.exe, rig.policy);
  REQUIRE(expected.ok());
  auto o = rig.opts();
  o.expected_measurement = *expected;
  auto ch = connect_tee(rig.sock, o);
  REQUIRE_FALSE(ch.ok());
  CHECK(ch.code() == Err::attestation_mismatch);
}

TEST_CASE("tampered worker image digest is rejected at attestation") {
  TeeRig rig;
  auto o = rig.opts();
  o.expected_measurement.digest[0] ^= 1;
  auto ch = connect_tee(rig.sock, o);
  REQUIRE_FALSE(ch.ok());
  CHECK(ch.code() == Err::attestation_mismatch);
}

TEST_CASE("queued calls return results identical to synchronous calls") {
  TeeRig rig;
  auto sync_ch = connect_tee(rig.sock, rig.opts(0));
  auto queued_ch = connect_tee(rig.sock, rig.opts(16));
  REQUIRE(sync_ch.ok());
  REQUIRE(queued_ch.ok());

  for (uint64_t i = 0; i < 200; i++) {
    Bytes payload = with_id(i, random_payload(100 + i % 300, i));
    auto a = (*sync_ch)->call({wire::MsgType::request, payload});
    auto b = (*queued_ch)->call({wire::MsgType::request, payload});
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(a->body == b->body);
  }
  CHECK((*queued_ch)->queue_saturated_count() == 0);
}

TEST_CASE("oversized queued payloads fall back to the synchronous path") {
  TeeRig rig;
  TeeConnectOptions o = rig.opts(4);
  o.queue_slot_bytes = 256;
  auto ch = connect_tee(rig.sock, o);
  REQUIRE(ch.ok());
  Bytes payload = with_id(1, random_payload(4096, 7));  // larger than a slot
  auto resp = (*ch)->call({wire::MsgType::request, payload});
  REQUIRE(resp.ok());
  CHECK(resp->body == payload);
  CHECK((*ch)->queue_saturated_count() >= 1);
}

TEST_CASE("queued concurrent callers all get their own answers") {
  TeeRig rig;
  auto ch = connect_tee(rig.sock, rig.opts(8));
  REQUIRE(ch.ok());
  std::atomic<int> failures{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; t++) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 100; i++) {
        uint64_t id = static_cast<uint64_t>(t) * 77777 + static_cast<uint64_t>(i);
        Bytes payload = with_id(id, random_payload(64, id));
        auto resp = (*ch)->call({wire::MsgType::request, payload});
        if (!resp || resp->body != payload) failures++;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(failures.load() == 0);
}

TEST_CASE("no plaintext payload residue on the untrusted side after a call") {
  TeeRig rig;
  for (uint32_t depth : {0u, 8u}) {
    auto ch = connect_tee(rig.sock, rig.opts(depth));
    REQUIRE(ch.ok());
    // A sentinel that appears in both the request and the echoed response.
    Bytes sentinel = random_payload(64, 0xfeedface);
    auto resp = (*ch)->call({wire::MsgType::request, with_id(3, sentinel)});
    REQUIRE(resp.ok());

    for (const Bytes& buf : (*ch)->inspect_buffers()) {
      for (size_t i = 0; i + 16 <= sentinel.size(); i += 8) {
        for (size_t j = 0; j + 16 <= buf.size(); j++) {
          REQUIRE(std::memcmp(sentinel.data() + i, buf.data() + j, 16) != 0);
        }
      }
    }
  }
}

TEST_CASE("plain IPC channel does retain plaintext (control for the residue test)") {
  TmpDir dir;
  EchoHandler echo;
  SocketResponderHost host(dir.path + "/s.sock", echo, plain_conn_setup());
  REQUIRE(host.start().ok());
  auto ch = connect_ipc(host.path());
  REQUIRE(ch.ok());
  Bytes sentinel = random_payload(64, 0xfeedface);
  REQUIRE((*ch)->call({wire::MsgType::request, with_id(3, sentinel)}).ok());
  bool found = false;
  for (const Bytes& buf : (*ch)->inspect_buffers()) {
    for (size_t j = 0; j + 16 <= buf.size(); j++) {
      if (std::memcmp(sentinel.data(), buf.data() + j, 16) == 0) found = true;
    }
  }
  CHECK(found);
}
