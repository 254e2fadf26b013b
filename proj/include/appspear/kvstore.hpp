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

// Embedded key-value store with file-backed persistence: an in-memory map,
// a write-ahead log replayed on open, and checksummed snapshots written on
// compaction. Small and dependency-free so the whole storage layer can live
// inside the trusted component.

#ifndef APPSPEAR_KVSTORE_HPP_
#define APPSPEAR_KVSTORE_HPP_

#include <sodium.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "appspear/common.hpp"
#include "appspear/tom.hpp"
#include "appspear/wire.hpp"

namespace appspear {

namespace detail {

inline uint64_t fnv64(ByteSpan data, uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

class KvStore {
 public:
  /// In-memory only when dir is empty.
  explicit KvStore(std::string dir = {}) : dir_(std::move(dir)) {
    if (!dir_.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(dir_, ec);
      load();
      wal_.open(wal_path(), std::ios::binary | std::ios::app);
    }
  }

  void set(const std::string& key, ByteSpan value) {
    std::lock_guard lk(mu_);
    map_[key] = Bytes(value.begin(), value.end());
    log_record(OpSet, key, value);
  }

  std::optional<Bytes> get(const std::string& key) const {
    std::lock_guard lk(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  bool del(const std::string& key) {
    std::lock_guard lk(mu_);
    if (map_.erase(key) == 0) return false;
    log_record(OpDel, key, {});
    return true;
  }

  bool contains(const std::string& key) const {
    std::lock_guard lk(mu_);
    return map_.contains(key);
  }

  size_t size() const {
    std::lock_guard lk(mu_);
    return map_.size();
  }

  template <typename Fn>
  void scan(const std::string& prefix, Fn fn) const {
    std::lock_guard lk(mu_);
    for (auto it = map_.lower_bound(prefix); it != map_.end(); ++it) {
      if (it->first.compare(0, prefix.size(), prefix) != 0) break;
      fn(it->first, it->second);
    }
  }

  /// Canonical digest over all pairs (keys are ordered).
  std::array<uint8_t, 32> digest() const {
    std::lock_guard lk(mu_);
    crypto_generichash_state st;
    std::array<uint8_t, 32> out{};
    crypto_generichash_init(&st, nullptr, 0, out.size());
    for (const auto& [k, v] : map_) {
      uint32_t kn = static_cast<uint32_t>(k.size()), vn = static_cast<uint32_t>(v.size());
      crypto_generichash_update(&st, reinterpret_cast<const uint8_t*>(&kn), 4);
      crypto_generichash_update(&st, reinterpret_cast<const uint8_t*>(k.data()), k.size());
      crypto_generichash_update(&st, reinterpret_cast<const uint8_t*>(&vn), 4);
      crypto_generichash_update(&st, v.data(), v.size());
    }
    crypto_generichash_final(&st, out.data(), out.size());
    return out;
  }

  /// Writes a checksummed snapshot and truncates the log.
  Result<void> compact() {
    std::lock_guard lk(mu_);
    if (dir_.empty()) return {};
    wire::Writer w;
    w.u32(kSnapMagic);
    w.u32(static_cast<uint32_t>(map_.size()));
    for (const auto& [k, v] : map_) {
      w.str(k);
      w.bytes(v);
    }
    Bytes body = w.take();
    std::array<uint8_t, 32> sum{};
    crypto_generichash(sum.data(), sum.size(), body.data(), body.size(), nullptr, 0);
    std::ofstream f(snap_path(), std::ios::binary | std::ios::trunc);
    if (!f) return {Err::io_failure, snap_path()};
    f.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
    f.write(reinterpret_cast<const char*>(sum.data()),
            static_cast<std::streamsize>(sum.size()));
    f.close();
    wal_.close();
    std::filesystem::remove(wal_path());
    wal_.open(wal_path(), std::ios::binary | std::ios::app);
    return {};
  }

  const std::string& dir() const { return dir_; }

 private:
  static constexpr uint32_t kSnapMagic = 0x4b565331;  // "1SVK"
  static constexpr uint8_t OpSet = 1, OpDel = 2;

  std::string snap_path() const { return dir_ + "/store.snap"; }
  std::string wal_path() const { return dir_ + "/store.wal"; }

  void log_record(uint8_t op, const std::string& key, ByteSpan value) {
    if (dir_.empty() || !wal_) return;
    wire::Writer w;
    w.u8(op);
    w.str(key);
    w.bytes(value);
    Bytes rec = w.take();
    uint64_t sum = detail::fnv64(rec);
    wire::Writer framed;
    framed.u32(static_cast<uint32_t>(rec.size()));
    framed.raw(rec);
    framed.u64(sum);
    const Bytes& out = framed.data();
    wal_.write(reinterpret_cast<const char*>(out.data()),
               static_cast<std::streamsize>(out.size()));
    wal_.flush();
  }

  void load() {
    // Snapshot first.
    std::ifstream f(snap_path(), std::ios::binary);
    if (f) {
      std::ostringstream ss;
      ss << f.rdbuf();
      const std::string& s = ss.str();
      if (s.size() > 32) {
        ByteSpan body{reinterpret_cast<const uint8_t*>(s.data()), s.size() - 32};
        std::array<uint8_t, 32> want{}, got{};
        std::memcpy(want.data(), s.data() + s.size() - 32, 32);
        crypto_generichash(got.data(), got.size(), body.data(), body.size(), nullptr, 0);
        if (want == got) {
          wire::Reader r(body);
          if (r.u32() == kSnapMagic) {
            uint32_t n = r.u32();
            for (uint32_t i = 0; i < n && r.ok(); i++) {
              std::string k = r.str();
              Bytes v = r.bytes();
              if (r.ok()) map_[std::move(k)] = std::move(v);
            }
          }
        }
      }
    }
    // Then replay the log; stop at the first torn or corrupt record.
    std::ifstream wal(wal_path(), std::ios::binary);
    if (!wal) return;
    for (;;) {
      uint8_t hdr[4];
      if (!wal.read(reinterpret_cast<char*>(hdr), 4)) break;
      uint32_t n = static_cast<uint32_t>(hdr[0]) | (static_cast<uint32_t>(hdr[1]) << 8) |
                   (static_cast<uint32_t>(hdr[2]) << 16) |
                   (static_cast<uint32_t>(hdr[3]) << 24);
      if (n == 0 || n > (16u << 20)) break;
      Bytes rec(n);
      if (!wal.read(reinterpret_cast<char*>(rec.data()), n)) break;
      uint8_t sumbuf[8];
      if (!wal.read(reinterpret_cast<char*>(sumbuf), 8)) break;
      uint64_t want = 0;
      for (int i = 0; i < 8; i++) want |= static_cast<uint64_t>(sumbuf[i]) << (8 * i);
      if (detail::fnv64(rec) != want) break;
      wire::Reader r(rec);
      uint8_t op = r.u8();
      std::string key = r.str();
      Bytes val = r.bytes();
      if (!r.done()) break;
      if (op == OpSet) map_[std::move(key)] = std::move(val);
      else if (op == OpDel) map_.erase(key);
      else break;
    }
  }

  std::string dir_;
  mutable std::mutex mu_;
  std::map<std::string, Bytes> map_;
  std::ofstream wal_;
};

/// ObjectStore over a KvStore key prefix; values carry the version in front
/// of the body.
class KvObjectStore : public ObjectStore {
 public:
  KvObjectStore(KvStore& kv, std::string prefix)
      : kv_(kv), prefix_(std::move(prefix) + "/") {}

  void put(uint64_t id, ByteSpan body, uint64_t version) override {
    wire::Writer w;
    w.u64(version);
    w.raw(body);
    kv_.set(key(id), w.data());
  }

  std::optional<StoredObject> get(uint64_t id) const override {
    auto v = kv_.get(key(id));
    if (!v || v->size() < 8) return std::nullopt;
    StoredObject obj;
    wire::Reader r(*v);
    obj.version = r.u64();
    obj.body.assign(v->begin() + 8, v->end());
    return obj;
  }

  bool erase(uint64_t id) override { return kv_.del(key(id)); }
  bool contains(uint64_t id) const override { return kv_.contains(key(id)); }

  size_t size() const override {
    size_t n = 0;
    kv_.scan(prefix_, [&n](const std::string&, const Bytes&) { n++; });
    return n;
  }

  uint64_t max_id() const override {
    uint64_t top = 0;
    kv_.scan(prefix_, [&](const std::string& k, const Bytes&) {
      top = std::max(top, std::strtoull(k.c_str() + prefix_.size(), nullptr, 10));
    });
    return top;
  }

  void for_each(const std::function<void(uint64_t, const StoredObject&)>& fn)
      const override {
    kv_.scan(prefix_, [&](const std::string& k, const Bytes& v) {
      if (v.size() < 8) return;
      StoredObject obj;
      wire::Reader r(v);
      obj.version = r.u64();
      obj.body.assign(v.begin() + 8, v.end());
      fn(std::strtoull(k.c_str() + prefix_.size(), nullptr, 10), obj);
    });
  }

 private:
  std::string key(uint64_t id) const {
    // Zero-padded so lexicographic order equals numeric order.
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%020llu", prefix_.c_str(),
                  static_cast<unsigned long long>(id));
    return buf;
  }

  KvStore& kv_;
  std::string prefix_;
};

}  // namespace appspear

#endif  // APPSPEAR_KVSTORE_HPP_
