#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flashcg/memory.hpp"

namespace flashcg {

using Index = std::int32_t;

template <class T>
using Vec3 = std::array<T, 3>;

template <class T>
using Positions = std::vector<Vec3<T>>;

// Raised for invalid configuration, shapes, or input files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a caller breaks an operation's preconditions (stale caches,
// layouts that do not belong to the neighbor list, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Dense row-major matrix backed by a tracked buffer.
template <class T>
struct Matrix {
  Index rows = 0;
  Index cols = 0;
  Buffer<T> data;

  Matrix() = default;
  Matrix(Index r, Index c, T fill = T(0))
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T* row(Index i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const T* row(Index i) const {
    return data.data() + static_cast<std::size_t>(i) * cols;
  }
  std::span<T> row_span(Index i) { return {row(i), static_cast<std::size_t>(cols)}; }
  std::span<const T> row_span(Index i) const {
    return {row(i), static_cast<std::size_t>(cols)};
  }
  T& operator()(Index i, Index j) { return row(i)[j]; }
  const T& operator()(Index i, Index j) const { return row(i)[j]; }
};

template <class T>
inline T norm(const Vec3<T>& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

template <class T>
inline Vec3<T> operator-(const Vec3<T>& a, const Vec3<T>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

template <class T>
inline Vec3<T> operator+(const Vec3<T>& a, const Vec3<T>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

template <class T>
inline Vec3<T> operator*(T s, const Vec3<T>& a) {
  return {s * a[0], s * a[1], s * a[2]};
}

template <class To, class From>
Positions<To> convert_positions(const Positions<From>& in) {
  Positions<To> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i)
    for (int k = 0; k < 3; ++k) out[i][k] = static_cast<To>(in[i][k]);
  return out;
}

}  // namespace flashcg
