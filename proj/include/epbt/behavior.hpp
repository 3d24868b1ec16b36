#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace epbt {

/// Bit-packed correctness pattern over the probe subset: bit i is set iff the
/// model classified probe sample i correctly.
class BehaviorVector {
public:
  BehaviorVector() = default;
  explicit BehaviorVector(std::size_t size);
  static BehaviorVector from_bits(std::span<const std::uint8_t> bits);

  std::size_t size() const { return size_; }
  bool bit(std::size_t i) const;
  void set(std::size_t i, bool value);
  std::size_t count() const;

  /// Hamming distance via popcount of XOR. Throws InputError on size mismatch.
  std::size_t distance(const BehaviorVector& other) const;

  std::vector<std::uint8_t> to_bits() const;

  bool operator==(const BehaviorVector&) const = default;

private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

} // namespace epbt
