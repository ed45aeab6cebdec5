#pragma once

#include <cmath>
#include <span>

namespace ckprobe {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

inline double compensated_mean(std::span<const double> xs) {
  return xs.empty() ? 0.0 : compensated_sum(xs) / static_cast<double>(xs.size());
}

}  // namespace ckprobe
