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

// Measurement, sealing and channel crypto for the TEE-sim isolation
// backend. The trusted-domain worker is measured at launch (digest over its
// executable image and the policy bootstrap file); the sealing key is
// derived from that measurement, so state sealed by one trusted image
// cannot be unsealed after the image or its policy configuration changed.

#ifndef APPSPEAR_SEALING_HPP_
#define APPSPEAR_SEALING_HPP_

#include <sodium.h>

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "appspear/common.hpp"
#include "appspear/wire.hpp"

namespace appspear {

inline void crypto_init() {
  static const int rc = sodium_init();
  if (rc < 0) std::abort();
}

inline void scrub(Bytes& b) {
  if (!b.empty()) sodium_memzero(b.data(), b.size());
  b.clear();
}

struct Measurement {
  std::array<uint8_t, crypto_generichash_BYTES> digest{};

  friend bool operator==(const Measurement&, const Measurement&) = default;

  std::string hex() const {
    std::string out(digest.size() * 2 + 1, '\0');
    sodium_bin2hex(out.data(), out.size(), digest.data(), digest.size());
    out.resize(digest.size() * 2);
    return out;
  }
};

inline Result<Bytes> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return {Err::io_failure, "cannot open " + path};
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string& s = ss.str();
  return Bytes(s.begin(), s.end());
}

/// Launch-time measurement: digest over the trusted-component executable
/// image plus the policy bootstrap (or snapshot) file it will load.
inline Result<Measurement> measure_trusted_image(const std::string& exe_path,
                                                 const std::string& policy_path) {
  crypto_init();
  auto exe = read_file_bytes(exe_path);
  if (!exe) return exe.error();
  auto pol = read_file_bytes(policy_path);
  if (!pol) return pol.error();

  Measurement m;
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, m.digest.size());
  crypto_generichash_update(&st, exe->data(), exe->size());
  const uint8_t sep = 0;
  crypto_generichash_update(&st, &sep, 1);
  crypto_generichash_update(&st, pol->data(), pol->size());
  crypto_generichash_final(&st, m.digest.data(), m.digest.size());
  return m;
}

// ---------------------------------------------------------------------------
// Sealed storage
// ---------------------------------------------------------------------------

constexpr size_t kSealNonceBytes = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;

struct SealedBlob {
  Measurement measurement;
  std::array<uint8_t, kSealNonceBytes> nonce{};
  Bytes ciphertext;

  Bytes encode() const {
    wire::Writer w;
    w.raw({measurement.digest.data(), measurement.digest.size()});
    w.raw({nonce.data(), nonce.size()});
    w.bytes(ciphertext);
    return w.take();
  }

  static Result<SealedBlob> decode(ByteSpan b) {
    SealedBlob out;
    if (b.size() < out.measurement.digest.size() + out.nonce.size() + 4) {
      return {Err::malformed_record, "sealed blob too short"};
    }
    std::memcpy(out.measurement.digest.data(), b.data(), out.measurement.digest.size());
    std::memcpy(out.nonce.data(), b.data() + out.measurement.digest.size(), out.nonce.size());
    wire::Reader r(b.subspan(out.measurement.digest.size() + out.nonce.size()));
    out.ciphertext = r.bytes();
    if (!r.done()) return {Err::malformed_record, "sealed blob trailing bytes"};
    return out;
  }
};

/// Authenticated encryption of trusted state at rest, keyed by the launch
/// measurement.
class Sealer {
 public:
  explicit Sealer(const Measurement& m) : measurement_(m) {
    crypto_init();
    crypto_generichash(key_.data(), key_.size(), m.digest.data(), m.digest.size(),
                       reinterpret_cast<const unsigned char*>(kSealContext),
                       sizeof(kSealContext) - 1);
  }

  SealedBlob seal(ByteSpan plaintext) const {
    SealedBlob blob;
    blob.measurement = measurement_;
    randombytes_buf(blob.nonce.data(), blob.nonce.size());
    blob.ciphertext.resize(plaintext.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long clen = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(
        blob.ciphertext.data(), &clen, plaintext.data(), plaintext.size(),
        measurement_.digest.data(), measurement_.digest.size(), nullptr,
        blob.nonce.data(), key_.data());
    blob.ciphertext.resize(clen);
    return blob;
  }

  Result<Bytes> unseal(const SealedBlob& blob) const {
    if (blob.measurement != measurement_) {
      return {Err::tamper_detected, "measurement mismatch"};
    }
    if (blob.ciphertext.size() < crypto_aead_xchacha20poly1305_ietf_ABYTES) {
      return {Err::tamper_detected, "truncated ciphertext"};
    }
    Bytes out(blob.ciphertext.size() - crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long mlen = 0;
    int rc = crypto_aead_xchacha20poly1305_ietf_decrypt(
        out.data(), &mlen, nullptr, blob.ciphertext.data(), blob.ciphertext.size(),
        blob.measurement.digest.data(), blob.measurement.digest.size(),
        blob.nonce.data(), key_.data());
    if (rc != 0) return {Err::tamper_detected, "authentication failed"};
    out.resize(mlen);
    return out;
  }

 private:
  static constexpr char kSealContext[] = "appspear-seal-v1";
  Measurement measurement_;
  std::array<uint8_t, crypto_aead_xchacha20poly1305_ietf_KEYBYTES> key_{};
};

// ---------------------------------------------------------------------------
// Channel session crypto (TEE-sim proxy pairs)
// ---------------------------------------------------------------------------

struct KxKeyPair {
  std::array<uint8_t, crypto_kx_PUBLICKEYBYTES> pk{};
  std::array<uint8_t, crypto_kx_SECRETKEYBYTES> sk{};

  static KxKeyPair generate() {
    crypto_init();
    KxKeyPair kp;
    crypto_kx_keypair(kp.pk.data(), kp.sk.data());
    return kp;
  }
};

struct SessionKeys {
  std::array<uint8_t, crypto_kx_SESSIONKEYBYTES> rx{};
  std::array<uint8_t, crypto_kx_SESSIONKEYBYTES> tx{};
};

inline Result<SessionKeys> client_session(const KxKeyPair& mine, ByteSpan server_pk) {
  SessionKeys s;
  if (server_pk.size() != crypto_kx_PUBLICKEYBYTES ||
      crypto_kx_client_session_keys(s.rx.data(), s.tx.data(), mine.pk.data(),
                                    mine.sk.data(), server_pk.data()) != 0) {
    return {Err::attestation_mismatch, "key exchange failed"};
  }
  return s;
}

inline Result<SessionKeys> server_session(const KxKeyPair& mine, ByteSpan client_pk) {
  SessionKeys s;
  if (client_pk.size() != crypto_kx_PUBLICKEYBYTES ||
      crypto_kx_server_session_keys(s.rx.data(), s.tx.data(), mine.pk.data(),
                                    mine.sk.data(), client_pk.data()) != 0) {
    return {Err::attestation_mismatch, "key exchange failed"};
  }
  return s;
}

/// Per-message AEAD: output is nonce || ciphertext.
inline Bytes channel_encrypt(const std::array<uint8_t, crypto_kx_SESSIONKEYBYTES>& key,
                             ByteSpan plaintext) {
  Bytes out(kSealNonceBytes + plaintext.size() +
            crypto_aead_xchacha20poly1305_ietf_ABYTES);
  randombytes_buf(out.data(), kSealNonceBytes);
  unsigned long long clen = 0;
  crypto_aead_xchacha20poly1305_ietf_encrypt(out.data() + kSealNonceBytes, &clen,
                                             plaintext.data(), plaintext.size(),
                                             nullptr, 0, nullptr, out.data(),
                                             key.data());
  out.resize(kSealNonceBytes + clen);
  return out;
}

inline Result<Bytes> channel_decrypt(
    const std::array<uint8_t, crypto_kx_SESSIONKEYBYTES>& key, ByteSpan blob) {
  if (blob.size() < kSealNonceBytes + crypto_aead_xchacha20poly1305_ietf_ABYTES) {
    return {Err::tamper_detected, "short channel message"};
  }
  Bytes out(blob.size() - kSealNonceBytes - crypto_aead_xchacha20poly1305_ietf_ABYTES);
  unsigned long long mlen = 0;
  int rc = crypto_aead_xchacha20poly1305_ietf_decrypt(
      out.data(), &mlen, nullptr, blob.data() + kSealNonceBytes,
      blob.size() - kSealNonceBytes, nullptr, 0, blob.data(), key.data());
  if (rc != 0) return {Err::tamper_detected, "channel authentication failed"};
  out.resize(mlen);
  return out;
}

}  // namespace appspear

#endif  // APPSPEAR_SEALING_HPP_
