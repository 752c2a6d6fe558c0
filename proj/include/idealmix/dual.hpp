// Copyright 2026 The idealmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IDEALMIX_DUAL_HPP_
#define IDEALMIX_DUAL_HPP_

#include <cmath>

#include <Eigen/Core>

namespace idealmix {

// Forward-mode dual number: value plus one directional derivative. Running
// the analytic gradient on Dual<double> yields exact Hessian-vector products.
template <typename T>
struct Dual {
  T v{};
  T d{};

  Dual() = default;
  Dual(T value) : v(value) {}  // NOLINT: implicit on purpose for Eigen casts
  Dual(T value, T deriv) : v(value), d(deriv) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
  Dual& operator/=(const Dual& o) {
    d = (d * o.v - v * o.d) / (o.v * o.v);
    v /= o.v;
    return *this;
  }
};

template <typename T> Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <typename T> Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <typename T> Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <typename T> Dual<T> operator/(Dual<T> a, const Dual<T>& b) { return a /= b; }
template <typename T> Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }
template <typename T> Dual<T> operator+(const Dual<T>& a) { return a; }

template <typename T> bool operator<(const Dual<T>& a, const Dual<T>& b) { return a.v < b.v; }
template <typename T> bool operator>(const Dual<T>& a, const Dual<T>& b) { return a.v > b.v; }
template <typename T> bool operator<=(const Dual<T>& a, const Dual<T>& b) { return a.v <= b.v; }
template <typename T> bool operator>=(const Dual<T>& a, const Dual<T>& b) { return a.v >= b.v; }
template <typename T> bool operator==(const Dual<T>& a, const Dual<T>& b) { return a.v == b.v; }
template <typename T> bool operator!=(const Dual<T>& a, const Dual<T>& b) { return a.v != b.v; }

template <typename T> Dual<T> exp(const Dual<T>& a) {
  const T e = std::exp(a.v);
  return {e, e * a.d};
}
template <typename T> Dual<T> log(const Dual<T>& a) { return {std::log(a.v), a.d / a.v}; }
template <typename T> Dual<T> sqrt(const Dual<T>& a) {
  const T s = std::sqrt(a.v);
  return {s, a.d / (T(2) * s)};
}
template <typename T> Dual<T> tanh(const Dual<T>& a) {
  const T t = std::tanh(a.v);
  return {t, (T(1) - t * t) * a.d};
}
template <typename T> Dual<T> abs(const Dual<T>& a) { return a.v < T(0) ? -a : a; }
template <typename T> bool isfinite(const Dual<T>& a) {
  return std::isfinite(a.v) && std::isfinite(a.d);
}

inline double value_of(double x) { return x; }
template <typename T> T value_of(const Dual<T>& x) { return x.v; }

}  // namespace idealmix

namespace Eigen {

template <typename T>
struct NumTraits<idealmix::Dual<T>> : NumTraits<T> {
  using Real = idealmix::Dual<T>;
  using NonInteger = idealmix::Dual<T>;
  using Nested = idealmix::Dual<T>;
  using Literal = idealmix::Dual<T>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 2,
    MulCost = 4,
  };
};

}  // namespace Eigen

#endif  // IDEALMIX_DUAL_HPP_
