#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tvest {

// Exact rational used for exponents. Always normalized: den > 0, gcd(|num|, den) == 1.
struct Rational {
  long long num = 0;
  long long den = 1;

  static Rational of(long long n, long long d) {
    if (d == 0) throw std::invalid_argument("rational with zero denominator");
    if (d < 0) { n = -n; d = -d; }
    long long g = std::gcd(n < 0 ? -n : n, d);
    if (g > 1) { n /= g; d /= g; }
    return Rational{n, d};
  }

  bool is_integer() const { return den == 1; }
  bool is_zero() const { return num == 0; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend Rational operator+(Rational a, Rational b) {
    return of(a.num * b.den + b.num * a.den, a.den * b.den);
  }
  friend Rational operator-(Rational a, Rational b) {
    return of(a.num * b.den - b.num * a.den, a.den * b.den);
  }
  friend Rational operator*(Rational a, Rational b) {
    return of(a.num * b.num, a.den * b.den);
  }
  friend bool operator==(Rational a, Rational b) { return a.num == b.num && a.den == b.den; }
  friend bool operator!=(Rational a, Rational b) { return !(a == b); }
  friend bool operator<(Rational a, Rational b) { return a.num * b.den < b.num * a.den; }

  std::string str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
  }
};

inline Rational rat(long long n, long long d = 1) { return Rational::of(n, d); }

}  // namespace tvest
