#include "epbt/behavior.hpp"

#include <bit>

#include "epbt/errors.hpp"

namespace epbt {

BehaviorVector::BehaviorVector(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

BehaviorVector BehaviorVector::from_bits(std::span<const std::uint8_t> bits) {
  BehaviorVector out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    out.set(i, bits[i] != 0);
  }
  return out;
}

bool BehaviorVector::bit(std::size_t i) const {
  if (i >= size_) {
    throw InputError("BehaviorVector::bit: index out of range");
  }
  return (words_[i / 64] >> (i % 64)) & 1U;
}

void BehaviorVector::set(std::size_t i, bool value) {
  if (i >= size_) {
    throw InputError("BehaviorVector::set: index out of range");
  }
  const std::uint64_t mask = std::uint64_t{1} << (i % 64);
  if (value) {
    words_[i / 64] |= mask;
  } else {
    words_[i / 64] &= ~mask;
  }
}

std::size_t BehaviorVector::count() const {
  std::size_t total = 0;
  for (auto w : words_) {
    total += static_cast<std::size_t>(std::popcount(w));
  }
  return total;
}

std::size_t BehaviorVector::distance(const BehaviorVector& other) const {
  if (size_ != other.size_) {
    throw InputError("BehaviorVector::distance: length mismatch");
  }
  std::size_t total = 0;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    total += static_cast<std::size_t>(std::popcount(words_[w] ^ other.words_[w]));
  }
  return total;
}

std::vector<std::uint8_t> BehaviorVector::to_bits() const {
  std::vector<std::uint8_t> bits(size_);
  for (std::size_t i = 0; i < size_; ++i) {
    bits[i] = bit(i) ? 1 : 0;
  }
  return bits;
}

} // namespace epbt
