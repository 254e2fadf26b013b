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

#include <cstdio>
#include <fstream>
#include <random>

#include "appspear/sealing.hpp"

using namespace appspear;

namespace {

Measurement fake_measurement(uint8_t fill) {
  Measurement m;
  m.digest.fill(fill);
  return m;
}

Bytes ascii(const std::string& s) { return Bytes(s.begin(), s.end()); }

}  // namespace

TEST_CASE("seal/unseal roundtrip is the identity") {
  Sealer sealer(fake_measurement(7));
  Bytes msg = ascii("policy state bytes, epoch 42");
  SealedBlob blob = sealer.seal(msg);
  auto back = sealer.unseal(blob);
  REQUIRE(back.ok());
  CHECK(*back == msg);

  // Encoded form roundtrips too.
  auto decoded = SealedBlob::decode(blob.encode());
  REQUIRE(decoded.ok());
  auto back2 = sealer.unseal(*decoded);
  REQUIRE(back2.ok());
  CHECK(*back2 == msg);
}

TEST_CASE("any single flipped bit is detected") {
  Sealer sealer(fake_measurement(7));
  Bytes msg = ascii("seal me");
  Bytes enc = sealer.seal(msg).encode();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 300; i++) {
    Bytes t = enc;
    size_t bit = rng() % (t.size() * 8);
    t[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));
    auto blob = SealedBlob::decode(t);
    if (!blob.ok()) continue;  // structural damage also counts as detection
    auto r = sealer.unseal(*blob);
    REQUIRE_FALSE(r.ok());
    CHECK(r.code() == Err::tamper_detected);
  }
}

TEST_CASE("unseal under a different measurement fails") {
  Sealer a(fake_measurement(1));
  Sealer b(fake_measurement(2));
  SealedBlob blob = a.seal(ascii("x"));
  CHECK(b.unseal(blob).code() == Err::tamper_detected);
}

TEST_CASE("ciphertext shares no 16-byte window with the plaintext") {
  Sealer sealer(fake_measurement(9));
  Bytes msg;
  for (int i = 0; i < 512; i++) msg.push_back(static_cast<uint8_t>(i * 31 + 7));
  Bytes enc = sealer.seal(msg).encode();
  for (size_t i = 0; i + 16 <= msg.size(); i++) {
    for (size_t j = 0; j + 16 <= enc.size(); j++) {
      CHECK(std::memcmp(msg.data() + i, enc.data() + j, 16) != 0);
    }
  }
}

TEST_CASE("measurement covers executable and policy file") {
  char dir[] = "/tmp/appspear-seal-XXXXXX";
  REQUIRE(mkdtemp(dir) != nullptr);
  std::string exe = std::string(dir) + "/worker";
  std::string pol = std::string(dir) + "/policy.txt";
  std::ofstream(exe) << "binary image v1";
  std::ofstream(pol) << "user 1 alice\n";

  auto m1 = measure_trusted_image(exe, pol);
  REQUIRE(m1.ok());
  auto m1again = measure_trusted_image(exe, pol);
  REQUIRE(m1again.ok());
  CHECK(m1->digest == m1again->digest);

  std::ofstream(pol) << "user 1 alice\nuser 2 mallory\n";
  auto m2 = measure_trusted_image(exe, pol);
  REQUIRE(m2.ok());
  CHECK_FALSE(m1->digest == m2->digest);

  CHECK_FALSE(measure_trusted_image(exe + ".missing", pol).ok());
  std::remove(exe.c_str());
  std::remove(pol.c_str());
  rmdir(dir);
}

TEST_CASE("channel session crypto") {
  auto server = KxKeyPair::generate();
  auto client = KxKeyPair::generate();
  auto cs = client_session(client, {server.pk.data(), server.pk.size()});
  auto ss = server_session(server, {client.pk.data(), client.pk.size()});
  REQUIRE(cs.ok());
  REQUIRE(ss.ok());

  Bytes msg = ascii("request payload");
  Bytes sealed = channel_encrypt(cs->tx, msg);
  auto opened = channel_decrypt(ss->rx, sealed);
  REQUIRE(opened.ok());
  CHECK(*opened == msg);

  // Tampered channel message is rejected.
  sealed[sealed.size() / 2] ^= 1;
  CHECK(channel_decrypt(ss->rx, sealed).code() == Err::tamper_detected);

  // Wrong direction key fails.
  Bytes sealed2 = channel_encrypt(cs->tx, msg);
  CHECK_FALSE(channel_decrypt(ss->tx, sealed2).ok());
}
