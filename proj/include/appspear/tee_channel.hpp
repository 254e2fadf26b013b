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

// TEE-sim isolation backend. The trusted component runs as a separate
// worker process reachable only through this channel; at connect time the
// worker reports its launch measurement (digest over executable image and
// policy file), the requester verifies it against the expected value, and
// both sides derive session keys. Every frame then crosses the boundary as
// an authenticated ciphertext: payload bytes are copied explicitly in and
// out of the trusted worker, never shared. The queued call mode adds a
// shared submission/completion ring polled by a persistent trusted worker
// thread, avoiding the per-call boundary transition.
//
// Handshake, framed over the raw socket:
//   HS1  worker -> requester: measurement(32) || worker_kx_pk(32)
//   HS2  requester -> worker: client_kx_pk(32) || u32 ring_path_len || path
//   HS3  worker -> requester: AEAD("appspear-hs-ok" || measurement)

#ifndef APPSPEAR_TEE_CHANNEL_HPP_
#define APPSPEAR_TEE_CHANNEL_HPP_

#include <unistd.h>

#include <atomic>
#include <memory>
#include <string>

#include "appspear/ipc_channel.hpp"
#include "appspear/sealing.hpp"
#include "appspear/shm_queue.hpp"

namespace appspear {

constexpr char kHandshakeOk[] = "appspear-hs-ok";

struct TeeConnectOptions {
  Measurement expected_measurement;
  /// 0 disables the rings entirely: calls stay synchronous.
  uint32_t queue_depth = 0;
  uint32_t queue_slot_bytes = 4096;
  std::string runtime_dir = "/tmp";
};

/// Requester side of the TEE-sim proxy pair.
inline Result<std::unique_ptr<SocketChannel>> connect_tee(
    const std::string& socket_path, const TeeConnectOptions& opts) {
  crypto_init();
  auto fd = unix_connect(socket_path);
  if (!fd) return fd.error();

  auto hs1 = recv_packet(fd->get());
  if (!hs1) return Error{Err::backend_unavailable, "no handshake from worker"};
  if (hs1->size() != 32 + crypto_kx_PUBLICKEYBYTES) {
    return Error{Err::attestation_mismatch, "malformed handshake"};
  }
  Measurement reported;
  std::memcpy(reported.digest.data(), hs1->data(), 32);
  if (reported != opts.expected_measurement) {
    return Error{Err::attestation_mismatch,
                 "measurement " + reported.hex() + " != expected " +
                     opts.expected_measurement.hex()};
  }

  auto kx = KxKeyPair::generate();
  ShmRingPair rings;
  std::string ring_path;
  if (opts.queue_depth > 0) {
    ring_path = opts.runtime_dir + "/appspear-ring-" + std::to_string(::getpid()) +
                "-" + std::to_string(reinterpret_cast<uintptr_t>(&kx) & 0xffff);
    auto r = ShmRingPair::create(ring_path, opts.queue_slot_bytes, opts.queue_depth);
    if (!r) return r.error();
    rings = std::move(*r);
  }

  wire::Writer hs2;
  hs2.raw({kx.pk.data(), kx.pk.size()});
  hs2.str(ring_path);
  if (auto r = send_packet(fd->get(), hs2.data()); !r) return r.error();

  auto keys = client_session(kx, {hs1->data() + 32, crypto_kx_PUBLICKEYBYTES});
  if (!keys) return keys.error();

  auto hs3 = recv_packet(fd->get());
  if (!hs3) return Error{Err::attestation_mismatch, "handshake aborted"};
  auto proof = channel_decrypt(keys->rx, *hs3);
  if (!proof) return Error{Err::attestation_mismatch, "handshake proof invalid"};
  Bytes expected_proof(kHandshakeOk, kHandshakeOk + sizeof(kHandshakeOk) - 1);
  expected_proof.insert(expected_proof.end(), reported.digest.begin(),
                        reported.digest.end());
  if (*proof != expected_proof) {
    return Error{Err::attestation_mismatch, "handshake proof mismatch"};
  }

  auto ch = std::make_unique<SocketChannel>(std::move(*fd),
                                            std::make_unique<AeadCodec>(*keys),
                                            /*scrub_plaintext=*/true);
  if (rings.valid()) {
    ch->attach_rings(std::move(rings));
    ::unlink(ring_path.c_str());  // both sides keep their mappings
  }
  ch->start();
  return ch;
}

/// Worker-side ring poller: the persistent trusted thread draining the
/// shared submission queue.
inline void tee_ring_worker(std::shared_ptr<ShmRingPair> rings, SessionKeys keys,
                            FrameHandler& handler, std::atomic<bool>& stop) {
  AeadCodec codec(keys);
  Backoff backoff;
  Bytes packet;
  while (!stop.load(std::memory_order_relaxed)) {
    if (!rings->submission().try_pop(packet)) {
      backoff.pause();
      continue;
    }
    backoff.reset();
    auto fb = codec.unwrap(packet);
    if (!fb) continue;  // tampered entry: drop
    auto fr = parse_frame_payload(std::move(*fb));
    if (!fr) continue;
    wire::Frame resp = handler.handle_frame(*fr);
    Bytes out = codec.wrap(frame_payload(resp));
    while (!rings->completion().try_push(out)) {
      if (stop.load(std::memory_order_relaxed)) return;
      backoff.pause();
    }
  }
}

/// Responder-side connection setup for a TEE-sim worker: reports the launch
/// measurement, answers the key exchange and attaches the ring poller when
/// the requester asked for queued calls.
inline ConnSetup tee_conn_setup(Measurement launch_measurement,
                                FrameHandler& handler) {
  return [meas = launch_measurement, &handler](int fd) -> Result<ConnSetupResult> {
    crypto_init();
    auto kx = KxKeyPair::generate();
    wire::Writer hs1;
    hs1.raw({meas.digest.data(), meas.digest.size()});
    hs1.raw({kx.pk.data(), kx.pk.size()});
    if (auto r = send_packet(fd, hs1.data()); !r) return r.error();

    auto hs2 = recv_packet(fd);
    if (!hs2) return Error{Err::transport_failure, "handshake aborted"};
    if (hs2->size() < crypto_kx_PUBLICKEYBYTES + 4) {
      return Error{Err::attestation_mismatch, "malformed handshake"};
    }
    auto keys = server_session(kx, {hs2->data(), crypto_kx_PUBLICKEYBYTES});
    if (!keys) return keys.error();
    wire::Reader r(ByteSpan{hs2->data() + crypto_kx_PUBLICKEYBYTES,
                            hs2->size() - crypto_kx_PUBLICKEYBYTES});
    std::string ring_path = r.str();
    if (!r.done()) return Error{Err::attestation_mismatch, "malformed handshake"};

    Bytes proof(kHandshakeOk, kHandshakeOk + sizeof(kHandshakeOk) - 1);
    proof.insert(proof.end(), meas.digest.begin(), meas.digest.end());
    Bytes hs3 = channel_encrypt(keys->tx, proof);
    if (auto s = send_packet(fd, hs3); !s) return s.error();

    ConnSetupResult out;
    out.codec = std::make_unique<AeadCodec>(*keys);
    if (!ring_path.empty()) {
      auto rings = ShmRingPair::open(ring_path);
      if (!rings) return rings.error();
      auto shared = std::make_shared<ShmRingPair>(std::move(*rings));
      SessionKeys k = *keys;
      out.aux_loop = [shared, k, &handler](std::atomic<bool>& stop) {
        tee_ring_worker(shared, k, handler, stop);
      };
    }
    return out;
  };
}

}  // namespace appspear

#endif  // APPSPEAR_TEE_CHANNEL_HPP_
