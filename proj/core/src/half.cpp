#include "flashcg/half.hpp"

#include <Eigen/Core>

namespace flashcg {

std::uint16_t float_to_half_bits(float value) noexcept {
  return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(value));
}

float half_bits_to_float(std::uint16_t bits) noexcept {
  return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
}

}  // namespace flashcg
