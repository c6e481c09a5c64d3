#pragma once

#include <cmath>
#include <compare>
#include <limits>

#include "pmising/errors.hpp"

namespace pmising {

/// A real number stored as sign * exp(log_abs). Zero is (0, -inf).
class SignedLogValue {
 public:
  constexpr SignedLogValue() noexcept = default;

  SignedLogValue(int sign, double log_abs) : sign_(sign), log_abs_(log_abs) {
    if (sign < -1 || sign > 1) throw InputError("SignedLogValue: sign must be -1, 0 or +1");
    if (std::isnan(log_abs)) throw InputError("SignedLogValue: log magnitude is NaN");
    if ((sign == 0) != (log_abs == -std::numeric_limits<double>::infinity()))
      throw InputError("SignedLogValue: sign 0 iff log magnitude is -inf");
  }

  static SignedLogValue from_value(double v) {
    if (v == 0.0) return {};
    return {v > 0.0 ? 1 : -1, std::log(std::fabs(v))};
  }

  static SignedLogValue from_log(double log_abs) { return {1, log_abs}; }

  int sign() const noexcept { return sign_; }
  double log_abs() const noexcept { return log_abs_; }
  bool is_zero() const noexcept { return sign_ == 0; }

  double value() const noexcept { return sign_ == 0 ? 0.0 : sign_ * std::exp(log_abs_); }

  friend SignedLogValue operator*(const SignedLogValue& a, const SignedLogValue& b) {
    if (a.sign_ == 0 || b.sign_ == 0) return {};
    return {a.sign_ * b.sign_, a.log_abs_ + b.log_abs_};
  }

  friend bool operator==(const SignedLogValue&, const SignedLogValue&) = default;

 private:
  int sign_ = 0;
  double log_abs_ = -std::numeric_limits<double>::infinity();
};

}  // namespace pmising
