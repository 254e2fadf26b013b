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

// Shared submission/completion queues for switchless-style calls: a pair of
// single-producer single-consumer rings in a file mapping shared between the
// untrusted requester and the persistent trusted worker. Entries carry
// opaque (encrypted) packets; nothing in the ring is interpreted here.

#ifndef APPSPEAR_SHM_QUEUE_HPP_
#define APPSPEAR_SHM_QUEUE_HPP_

#include <fcntl.h>
#include <sched.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <string>
#include <thread>

#include "appspear/common.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#endif

namespace appspear {

inline void cpu_relax() {
#if defined(__x86_64__) || defined(__i386__)
  _mm_pause();
#else
  std::this_thread::yield();
#endif
}

/// Spin, then yield, then sleep. Pollers stay hot under load without
/// starving a small machine when idle.
class Backoff {
 public:
  void pause() {
    if (count_ < 1024) {
      cpu_relax();
    } else if (count_ < 4096) {
      sched_yield();
    } else {
      std::this_thread::sleep_for(std::chrono::microseconds(100));
    }
    count_++;
  }
  void reset() { count_ = 0; }

 private:
  unsigned count_ = 0;
};

namespace detail {

struct alignas(64) RingHeader {
  std::atomic<uint64_t> head;  // next slot the consumer reads
  char pad0[56];
  std::atomic<uint64_t> tail;  // next slot the producer writes
  char pad1[56];
  uint32_t slot_size;
  uint32_t capacity;
  uint32_t magic;
};
static_assert(std::atomic<uint64_t>::is_always_lock_free,
              "cross-process rings need lock-free u64 atomics");

constexpr uint32_t kRingMagic = 0x41535052;  // "RPSA"

}  // namespace detail

/// One SPSC ring view over mapped memory.
class RingView {
 public:
  RingView() = default;
  RingView(detail::RingHeader* hdr, uint8_t* slots) : hdr_(hdr), slots_(slots) {}

  size_t max_payload() const { return hdr_->slot_size - 4; }

  bool try_push(ByteSpan payload) {
    if (payload.size() > max_payload()) return false;
    uint64_t head = hdr_->head.load(std::memory_order_acquire);
    uint64_t tail = hdr_->tail.load(std::memory_order_relaxed);
    if (tail - head >= hdr_->capacity) return false;
    uint8_t* slot = slots_ + (tail % hdr_->capacity) * hdr_->slot_size;
    uint32_t n = static_cast<uint32_t>(payload.size());
    std::memcpy(slot, &n, 4);
    std::memcpy(slot + 4, payload.data(), payload.size());
    hdr_->tail.store(tail + 1, std::memory_order_release);
    return true;
  }

  bool try_pop(Bytes& out) {
    uint64_t head = hdr_->head.load(std::memory_order_relaxed);
    uint64_t tail = hdr_->tail.load(std::memory_order_acquire);
    if (head == tail) return false;
    const uint8_t* slot = slots_ + (head % hdr_->capacity) * hdr_->slot_size;
    uint32_t n = 0;
    std::memcpy(&n, slot, 4);
    if (n > max_payload()) n = 0;  // corrupted slot; drop content
    out.assign(slot + 4, slot + 4 + n);
    hdr_->head.store(head + 1, std::memory_order_release);
    return true;
  }

  bool valid() const { return hdr_ != nullptr; }

 private:
  detail::RingHeader* hdr_ = nullptr;
  uint8_t* slots_ = nullptr;
};

/// The submission/completion ring pair backing queued calls on one channel.
class ShmRingPair {
 public:
  ShmRingPair() = default;
  ~ShmRingPair() { unmap(); }

  ShmRingPair(ShmRingPair&& o) noexcept { *this = std::move(o); }
  ShmRingPair& operator=(ShmRingPair&& o) noexcept {
    if (this != &o) {
      unmap();
      mem_ = o.mem_;
      bytes_ = o.bytes_;
      submission_ = o.submission_;
      completion_ = o.completion_;
      o.mem_ = nullptr;
      o.bytes_ = 0;
    }
    return *this;
  }
  ShmRingPair(const ShmRingPair&) = delete;
  ShmRingPair& operator=(const ShmRingPair&) = delete;

  static size_t region_bytes(uint32_t slot_size, uint32_t capacity) {
    return sizeof(detail::RingHeader) + static_cast<size_t>(slot_size) * capacity;
  }

  /// Creates and initializes the backing file (requester side).
  static Result<ShmRingPair> create(const std::string& path, uint32_t slot_size,
                                    uint32_t capacity) {
    if (capacity == 0 || slot_size < 64) {
      return {Err::config_unsupported, "ring capacity/slot size"};
    }
    size_t total = 2 * region_bytes(slot_size, capacity);
    int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) return {Err::backend_unavailable, "ring open: " + std::string(strerror(errno))};
    if (::ftruncate(fd, static_cast<off_t>(total)) != 0) {
      ::close(fd);
      return {Err::backend_unavailable, "ring truncate"};
    }
    ShmRingPair p;
    auto r = p.map(fd, total);
    ::close(fd);
    if (!r) return r.error();
    for (int i = 0; i < 2; i++) {
      auto* hdr = p.header(i, slot_size, capacity);
      new (&hdr->head) std::atomic<uint64_t>(0);
      new (&hdr->tail) std::atomic<uint64_t>(0);
      hdr->slot_size = slot_size;
      hdr->capacity = capacity;
      hdr->magic = detail::kRingMagic;
    }
    p.bind_views();
    return p;
  }

  /// Maps an existing ring file (worker side).
  static Result<ShmRingPair> open(const std::string& path) {
    int fd = ::open(path.c_str(), O_RDWR | O_CLOEXEC);
    if (fd < 0) return {Err::backend_unavailable, "ring open: " + std::string(strerror(errno))};
    struct stat st{};
    if (::fstat(fd, &st) != 0 || st.st_size < static_cast<off_t>(sizeof(detail::RingHeader))) {
      ::close(fd);
      return {Err::backend_unavailable, "ring stat"};
    }
    ShmRingPair p;
    auto r = p.map(fd, static_cast<size_t>(st.st_size));
    ::close(fd);
    if (!r) return r.error();
    auto* first = reinterpret_cast<detail::RingHeader*>(p.mem_);
    if (first->magic != detail::kRingMagic ||
        2 * region_bytes(first->slot_size, first->capacity) != p.bytes_) {
      return {Err::backend_unavailable, "ring layout mismatch"};
    }
    p.bind_views();
    return p;
  }

  RingView& submission() { return submission_; }
  RingView& completion() { return completion_; }
  bool valid() const { return mem_ != nullptr; }

  /// Raw view of the shared (untrusted-visible) memory, for residue checks.
  ByteSpan memory() const {
    return {reinterpret_cast<const uint8_t*>(mem_), bytes_};
  }

 private:
  Result<void> map(int fd, size_t total) {
    mem_ = ::mmap(nullptr, total, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
    if (mem_ == MAP_FAILED) {
      mem_ = nullptr;
      return {Err::backend_unavailable, "ring mmap"};
    }
    bytes_ = total;
    return {};
  }

  void unmap() {
    if (mem_ != nullptr) {
      ::munmap(mem_, bytes_);
      mem_ = nullptr;
    }
  }

  detail::RingHeader* header(int i, uint32_t slot_size, uint32_t capacity) {
    return reinterpret_cast<detail::RingHeader*>(
        static_cast<uint8_t*>(mem_) + static_cast<size_t>(i) * region_bytes(slot_size, capacity));
  }

  void bind_views() {
    auto* h0 = reinterpret_cast<detail::RingHeader*>(mem_);
    uint8_t* s0 = reinterpret_cast<uint8_t*>(h0 + 1);
    auto* h1 = reinterpret_cast<detail::RingHeader*>(
        static_cast<uint8_t*>(mem_) + region_bytes(h0->slot_size, h0->capacity));
    uint8_t* s1 = reinterpret_cast<uint8_t*>(h1 + 1);
    submission_ = RingView(h0, s0);
    completion_ = RingView(h1, s1);
  }

  void* mem_ = nullptr;
  size_t bytes_ = 0;
  RingView submission_;
  RingView completion_;
};

}  // namespace appspear

#endif  // APPSPEAR_SHM_QUEUE_HPP_
