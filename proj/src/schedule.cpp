#include "ctdd/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ctdd {

BetaSchedule BetaSchedule::constant(double c) {
  if (!(c > 0.0)) throw std::invalid_argument("beta schedule: constant rate must be positive");
  BetaSchedule s;
  s.kind_ = Kind::Constant;
  s.c_ = c;
  return s;
}

BetaSchedule BetaSchedule::exponential(double a, double b) {
  if (!(a > 0.0) || !(b > 1.0))
    throw std::invalid_argument("beta schedule: exponential kind requires a > 0 and b > 1");
  BetaSchedule s;
  s.kind_ = Kind::Exponential;
  s.a_ = a;
  s.b_ = b;
  return s;
}

double BetaSchedule::beta(double t) const {
  if (kind_ == Kind::Constant) return c_;
  return a_ * std::pow(b_, t) * std::log(b_);
}

double BetaSchedule::integral(double t) const {
  if (kind_ == Kind::Constant) return c_ * t;
  return a_ * std::pow(b_, t) - a_;
}

double BetaSchedule::inverse_integral(double u) const {
  if (u < 0.0) throw std::invalid_argument("beta schedule: B^-1 needs u >= 0");
  if (kind_ == Kind::Constant) return u / c_;
  return std::log1p(u / a_) / std::log(b_);
}

std::string BetaSchedule::describe() const {
  std::ostringstream os;
  if (kind_ == Kind::Constant)
    os << "constant(c=" << c_ << ")";
  else
    os << "exponential(a=" << a_ << ", b=" << b_ << ")";
  return os.str();
}

}  // namespace ctdd
