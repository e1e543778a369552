#pragma once

#include <cstdint>

namespace flashcg {

// IEEE 754 binary16 conversions, round-to-nearest-even.
std::uint16_t float_to_half_bits(float value) noexcept;
float half_bits_to_float(std::uint16_t bits) noexcept;

inline float round_to_half(float value) noexcept {
  return half_bits_to_float(float_to_half_bits(value));
}

template <class T>
inline T round_to_half_t(T value) noexcept {
  return static_cast<T>(round_to_half(static_cast<float>(value)));
}

}  // namespace flashcg
