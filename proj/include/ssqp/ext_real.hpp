#pragma once

#include <cmath>
#include <string>

#include "ssqp/errors.hpp"

namespace ssqp {

// Nonnegative scalar extended with a +infinity sentinel. The trial merit and
// ratio parameters live on [0, +inf]; keeping the sentinel explicit avoids
// accidental arithmetic on IEEE infinities.
class ExtReal {
 public:
  ExtReal() : finite_(false), value_(0.0) {}

  static ExtReal infinity() { return ExtReal(); }

  static ExtReal finite(double v) {
    if (!std::isfinite(v)) throw NonFinite("ExtReal::finite");
    ExtReal r;
    r.finite_ = true;
    r.value_ = v;
    return r;
  }

  bool is_finite() const { return finite_; }

  double value() const {
    if (!finite_) throw InvariantViolated("ExtReal::value on infinity");
    return value_;
  }

  double value_or(double if_infinite) const {
    return finite_ ? value_ : if_infinite;
  }

  // Total order with +inf as the unique maximum.
  friend bool operator<(const ExtReal& a, const ExtReal& b) {
    if (!a.finite_) return false;
    if (!b.finite_) return true;
    return a.value_ < b.value_;
  }
  friend bool operator<=(const ExtReal& a, const ExtReal& b) {
    return !(b < a);
  }
  friend bool operator==(const ExtReal& a, const ExtReal& b) {
    if (a.finite_ != b.finite_) return false;
    return !a.finite_ || a.value_ == b.value_;
  }

  // a <= s * b with s >= 0, treating s * inf as inf.
  bool leq_scaled(double s, const ExtReal& b) const {
    if (!b.finite_) return true;
    if (!finite_) return false;
    return value_ <= s * b.value_;
  }

  std::string str() const {
    return finite_ ? std::to_string(value_) : std::string("inf");
  }

 private:
  bool finite_;
  double value_;
};

}  // namespace ssqp
