// Copyright 2026 The HMK Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Forward-mode dual numbers with a fixed number of tangent lanes, and a small
// complex type over an arbitrary real scalar (std::complex is unspecified for
// non-floating types). Kernel formulas are written once against these and
// instantiated with T = double for values or T = Dual<N> for gradients.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>

namespace hmk::ad {

template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)

  static Dual variable(double value, int lane) {
    Dual x(value);
    x.d[lane] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int k = 0; k < N; ++k) d[k] += o.d[k];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int k = 0; k < N; ++k) d[k] -= o.d[k];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int k = 0; k < N; ++k) d[k] = d[k] * o.v + v * o.d[k];
    v *= o.v;
    return *this;
  }
  Dual& operator*=(double s) {
    v *= s;
    for (int k = 0; k < N; ++k) d[k] *= s;
    return *this;
  }
};

template <int N>
Dual<N> operator-(Dual<N> a) {
  a.v = -a.v;
  for (int k = 0; k < N; ++k) a.d[k] = -a.d[k];
  return a;
}
template <int N>
Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N>
Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N>
Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N>
Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <int N>
Dual<N> operator+(double b, Dual<N> a) { a.v += b; return a; }
template <int N>
Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <int N>
Dual<N> operator-(double b, const Dual<N>& a) { return -a + b; }
template <int N>
Dual<N> operator*(Dual<N> a, double s) { return a *= s; }
template <int N>
Dual<N> operator*(double s, Dual<N> a) { return a *= s; }
template <int N>
Dual<N> operator/(Dual<N> a, double s) { return a *= (1.0 / s); }
template <int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a.v / b.v;
  const double inv = 1.0 / b.v;
  for (int k = 0; k < N; ++k) r.d[k] = (a.d[k] - r.v * b.d[k]) * inv;
  return r;
}
template <int N>
Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }

template <int N>
Dual<N> chain(const Dual<N>& a, double value, double slope) {
  Dual<N> r;
  r.v = value;
  for (int k = 0; k < N; ++k) r.d[k] = slope * a.d[k];
  return r;
}

template <int N>
Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.v);
  return chain(a, e, e);
}
template <int N>
Dual<N> log(const Dual<N>& a) { return chain(a, std::log(a.v), 1.0 / a.v); }
template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s);
}
template <int N>
Dual<N> sin(const Dual<N>& a) { return chain(a, std::sin(a.v), std::cos(a.v)); }
template <int N>
Dual<N> cos(const Dual<N>& a) { return chain(a, std::cos(a.v), -std::sin(a.v)); }

inline double value(double x) { return x; }
template <int N>
double value(const Dual<N>& x) { return x.v; }

/// Complex number over a real scalar type.
template <typename T>
struct Cx {
  T re{};
  T im{};

  Cx() = default;
  Cx(T r, T i) : re(std::move(r)), im(std::move(i)) {}
  explicit Cx(T r) : re(std::move(r)), im(0.0) {}

  Cx& operator+=(const Cx& o) {
    re += o.re;
    im += o.im;
    return *this;
  }
  Cx& operator-=(const Cx& o) {
    re -= o.re;
    im -= o.im;
    return *this;
  }
};

template <typename T>
Cx<T> operator+(Cx<T> a, const Cx<T>& b) { return a += b; }
template <typename T>
Cx<T> operator-(Cx<T> a, const Cx<T>& b) { return a -= b; }
template <typename T>
Cx<T> operator*(const Cx<T>& a, const Cx<T>& b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
template <typename T, typename S>
Cx<T> scale(const Cx<T>& a, const S& s) { return {a.re * s, a.im * s}; }
template <typename T>
Cx<T> conj(const Cx<T>& a) { return {a.re, -a.im}; }

/// exp(i theta)
template <typename T>
Cx<T> expi(const T& theta) {
  using std::cos;
  using std::sin;
  return {cos(theta), sin(theta)};
}

/// Calls f.template operator()<N>() with the smallest lane count N >= n.
template <typename F>
decltype(auto) dispatch_lanes(int n, F&& f) {
  if (n <= 8) return f.template operator()<8>();
  if (n <= 16) return f.template operator()<16>();
  if (n <= 24) return f.template operator()<24>();
  if (n <= 32) return f.template operator()<32>();
  if (n <= 48) return f.template operator()<48>();
  if (n <= 64) return f.template operator()<64>();
  if (n <= 96) return f.template operator()<96>();
  throw std::invalid_argument("dispatch_lanes: too many local parameters");
}

}  // namespace hmk::ad
