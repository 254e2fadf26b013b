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

#ifndef APPSPEAR_CACHE_HPP_
#define APPSPEAR_CACHE_HPP_

#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "appspear/entity.hpp"
#include "appspear/policy.hpp"
#include "appspear/wire.hpp"

namespace appspear {

/// Cache key: the full entity vector plus the operation name.
struct CacheKey {
  EntityVec entities;
  std::string op;

  uint64_t subject_id() const { return entities.empty() ? 0 : entities[0].id; }

  friend bool operator==(const CacheKey& a, const CacheKey& b) {
    if (a.op != b.op || a.entities.size() != b.entities.size()) return false;
    for (size_t i = 0; i < a.entities.size(); i++) {
      if (a.entities[i] != b.entities[i]) return false;
    }
    return true;
  }
};

struct CacheKeyHash {
  size_t operator()(const CacheKey& k) const noexcept {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](uint64_t v) {
      h ^= v;
      h *= 0x100000001b3ULL;
    };
    for (const auto& e : k.entities) {
      mix(e.id);
      mix(static_cast<uint64_t>(e.kind));
    }
    mix(std::hash<std::string_view>{}(k.op));
    return static_cast<size_t>(h);
  }
};

/// In-proxy decision cache, hash-table organized, with a per-subject
/// secondary index so invalidation notices can purge by key pattern without
/// a full sweep. Internally synchronized; an invalidation that has been
/// received is visible to every later lookup.
class DecisionCache {
 public:
  /// capacity 0 means unbounded (the desk-scale default); otherwise entries
  /// are evicted LRU.
  explicit DecisionCache(size_t capacity = 0) : capacity_(capacity) {}

  std::optional<bool> lookup(const CacheKey& key) {
    std::lock_guard lk(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) {
      misses_++;
      return std::nullopt;
    }
    if (capacity_ > 0) lru_.splice(lru_.begin(), lru_, it->second.lru_pos);
    hits_++;
    return it->second.verdict;
  }

  /// Non-cacheable decisions are silently skipped.
  void insert(const CacheKey& key, const wire::AccessDecision& decision) {
    if (!decision.cacheable) return;
    std::lock_guard lk(mu_);
    // A decision computed under an older epoch than an invalidation we have
    // already applied must not enter the cache: it may be stale.
    if (decision.epoch < last_seen_epoch_) return;
    auto it = map_.find(key);
    if (it != map_.end()) {
      it->second.verdict = decision.verdict;
      it->second.epoch = decision.epoch;
      if (capacity_ > 0) lru_.splice(lru_.begin(), lru_, it->second.lru_pos);
      return;
    }
    Entry e;
    e.verdict = decision.verdict;
    e.epoch = decision.epoch;
    if (capacity_ > 0) {
      lru_.push_front(key);
      e.lru_pos = lru_.begin();
    }
    auto [pos, inserted] = map_.emplace(key, std::move(e));
    (void)inserted;
    by_subject_[key.subject_id()].insert(&pos->first);
    if (capacity_ > 0 && map_.size() > capacity_) evict_lru_locked();
  }

  /// Applies an invalidation notice: removes every entry matching one of the
  /// patterns and advances the last-seen epoch. Notices with an epoch not
  /// newer than the last seen one are ignored (counted, not applied).
  Result<void> invalidate(uint64_t epoch, std::span<const KeyPattern> patterns) {
    std::lock_guard lk(mu_);
    if (epoch <= last_seen_epoch_) {
      stale_notices_++;
      return {Err::stale_notice,
              "epoch " + std::to_string(epoch) + " <= " + std::to_string(last_seen_epoch_)};
    }
    last_seen_epoch_ = epoch;
    for (const KeyPattern& p : patterns) {
      if (p.match == KeyPattern::Match::all) {
        clear_locked();
        break;
      }
      auto idx = by_subject_.find(p.subject_id);
      if (idx == by_subject_.end()) continue;
      std::vector<CacheKey> victims;
      victims.reserve(idx->second.size());
      for (const CacheKey* k : idx->second) victims.push_back(*k);
      for (const CacheKey& k : victims) erase_locked(k);
    }
    return {};
  }

  void clear() {
    std::lock_guard lk(mu_);
    clear_locked();
  }

  size_t size() const {
    std::lock_guard lk(mu_);
    return map_.size();
  }
  uint64_t last_seen_epoch() const {
    std::lock_guard lk(mu_);
    return last_seen_epoch_;
  }
  uint64_t hits() const { return hits_; }
  uint64_t misses() const { return misses_; }
  uint64_t stale_notices() const { return stale_notices_; }

 private:
  struct Entry {
    bool verdict = false;
    uint64_t epoch = 0;
    std::list<CacheKey>::iterator lru_pos;
  };

  void erase_locked(const CacheKey& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return;
    auto idx = by_subject_.find(key.subject_id());
    if (idx != by_subject_.end()) {
      idx->second.erase(&it->first);
      if (idx->second.empty()) by_subject_.erase(idx);
    }
    if (capacity_ > 0) lru_.erase(it->second.lru_pos);
    map_.erase(it);
  }

  void evict_lru_locked() {
    if (lru_.empty()) return;
    CacheKey victim = lru_.back();
    erase_locked(victim);
  }

  void clear_locked() {
    map_.clear();
    by_subject_.clear();
    lru_.clear();
  }

  mutable std::mutex mu_;
  size_t capacity_;
  uint64_t last_seen_epoch_ = 0;
  std::unordered_map<CacheKey, Entry, CacheKeyHash> map_;
  std::unordered_map<uint64_t, std::unordered_set<const CacheKey*>> by_subject_;
  std::list<CacheKey> lru_;
  std::atomic<uint64_t> hits_{0}, misses_{0}, stale_notices_{0};
};

}  // namespace appspear

#endif  // APPSPEAR_CACHE_HPP_
