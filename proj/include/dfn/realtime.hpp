#pragma once

#include <array>
#include <atomic>
#include <bit>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <type_traits>

namespace dfn {

// Lock-free single-writer/single-reader snapshot channel. The writer
// publishes whole values; the reader always sees a complete one.
template <class T>
class TripleBuffer {
  static_assert(std::is_trivially_copyable_v<T>);

 public:
  explicit TripleBuffer(const T& initial = T{}) : slots_{initial, initial, initial} {}

  // Writer side.
  void publish(const T& v) {
    slots_[write_] = v;
    const int prev = middle_.exchange(write_ | kFresh, std::memory_order_acq_rel);
    write_ = prev & kIndexMask;
  }

  // Reader side. Picks up the latest published value, if any.
  const T& read() {
    if (middle_.load(std::memory_order_relaxed) & kFresh) {
      const int prev = middle_.exchange(read_, std::memory_order_acq_rel);
      read_ = prev & kIndexMask;
    }
    return slots_[read_];
  }

 private:
  static constexpr int kFresh = 4;
  static constexpr int kIndexMask = 3;

  std::array<T, 3> slots_;
  int write_ = 0;
  int read_ = 1;
  std::atomic<int> middle_{2};
};

// Bounded single-producer/single-consumer ring that never blocks the
// producer: when full, the oldest entries are overwritten and the consumer
// skips ahead. Slots are guarded by per-slot sequence numbers.
template <class T, std::size_t Capacity = 256>
class DropOldestRing {
  static_assert(std::is_trivially_copyable_v<T>);
  static_assert(std::has_single_bit(Capacity));
  static constexpr std::size_t kWords = (sizeof(T) + 7) / 8;

 public:
  DropOldestRing() : slots_(std::make_unique<Slot[]>(Capacity)) {}

  static constexpr std::size_t capacity() { return Capacity; }

  void push(const T& v) {
    const std::uint64_t pos = head_.load(std::memory_order_relaxed);
    Slot& s = slots_[pos % Capacity];
    std::array<std::uint64_t, kWords> words{};
    std::memcpy(words.data(), &v, sizeof(T));
    s.seq.store(2 * pos + 1, std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_release);
    for (std::size_t i = 0; i < kWords; ++i) s.words[i].store(words[i], std::memory_order_relaxed);
    s.seq.store(2 * pos + 2, std::memory_order_release);
    head_.store(pos + 1, std::memory_order_release);
  }

  std::optional<T> pop() {
    for (;;) {
      const std::uint64_t head = head_.load(std::memory_order_acquire);
      if (head - tail_ > Capacity) {
        dropped_ += head - Capacity - tail_;
        tail_ = head - Capacity;
      }
      if (tail_ == head) return std::nullopt;
      Slot& s = slots_[tail_ % Capacity];
      const std::uint64_t seq1 = s.seq.load(std::memory_order_acquire);
      std::array<std::uint64_t, kWords> words;
      for (std::size_t i = 0; i < kWords; ++i) words[i] = s.words[i].load(std::memory_order_relaxed);
      std::atomic_thread_fence(std::memory_order_acquire);
      const std::uint64_t seq2 = s.seq.load(std::memory_order_relaxed);
      if (seq1 != seq2 || seq1 != 2 * tail_ + 2) continue;  // lapped by the producer
      ++tail_;
      T v;
      std::memcpy(static_cast<void*>(&v), words.data(), sizeof(T));
      return v;
    }
  }

  // Consumer-side count of entries lost to overwrites.
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t pushed() const { return head_.load(std::memory_order_acquire); }

 private:
  struct Slot {
    std::atomic<std::uint64_t> seq{0};
    std::array<std::atomic<std::uint64_t>, kWords> words{};
  };

  std::unique_ptr<Slot[]> slots_;
  std::atomic<std::uint64_t> head_{0};
  std::uint64_t tail_ = 0;
  std::uint64_t dropped_ = 0;
};

}  // namespace dfn
