#ifndef CTDD_SCHEDULE_HPP
#define CTDD_SCHEDULE_HPP

#include <string>

namespace ctdd {

// Time scaling of the forward rate, R_t = beta(t) * R_b.  The integral
// B(t) = int_0^t beta(s) ds is what enters the spectral marginals, so both
// forms keep it in closed form:
//   constant:     beta(t) = c,              B(t) = c * t
//   exponential:  beta(t) = a * b^t * ln b, B(t) = a * b^t - a
class BetaSchedule {
 public:
  enum class Kind { Constant, Exponential };

  static BetaSchedule constant(double c);
  static BetaSchedule exponential(double a, double b);

  double beta(double t) const;
  double integral(double t) const;          // B(t)
  double inverse_integral(double u) const;  // B^-1(u), u >= 0

  Kind kind() const { return kind_; }
  double c() const { return c_; }
  double a() const { return a_; }
  double b() const { return b_; }
  std::string describe() const;

 private:
  BetaSchedule() = default;
  Kind kind_ = Kind::Constant;
  double c_ = 1.0;
  double a_ = 1.0;
  double b_ = 2.0;
};

}  // namespace ctdd

#endif
