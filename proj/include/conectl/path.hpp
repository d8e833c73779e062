#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "conectl/errors.hpp"

namespace conectl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Interp { PiecewiseConstant, PiecewiseLinear };

// Sampled RCLL path on a finite grid. values.col(i) is the right limit at
// times[i]; jumps record the pre-jump value where the path jumps at a grid
// time. Piecewise-constant paths take their left limit from the previous
// sample, piecewise-linear paths from the interpolant, unless overridden by
// an explicit jump record.
class PathRcll {
 public:
  struct Jump {
    int index;
    Vec pre_value;
  };

  PathRcll(std::vector<double> times, Mat values, Interp interp,
           std::vector<Jump> jumps = {});

  int dim() const { return static_cast<int>(values_.rows()); }
  int size() const { return static_cast<int>(times_.size()); }
  double time(int i) const { return times_[static_cast<std::size_t>(i)]; }
  Vec value(int i) const { return values_.col(i); }
  Vec left_limit(int i) const;
  bool has_jump_record(int i) const;

  const std::vector<double>& times() const { return times_; }
  const Mat& values() const { return values_; }
  Interp interp() const { return interp_; }
  const std::vector<Jump>& jumps() const { return jumps_; }

  // value at an arbitrary t in [times.front(), times.back()]
  Vec at(double t) const;

  // restriction to the first n+1 samples (grid prefix)
  PathRcll truncated(int last_index) const;

  static PathRcll zero(const std::vector<double>& times, int dim,
                       Interp interp = Interp::PiecewiseConstant);

  // columns: time, components..., is_jump
  void to_csv(std::ostream& os) const;

 private:
  std::vector<double> times_;
  Mat values_;  // dim x n
  Interp interp_;
  std::vector<Jump> jumps_;
  std::vector<int> jump_of_index_;  // -1 or position in jumps_
};

// uniform grid 0, dt, 2*dt, ..., covering [0, horizon]
std::vector<double> uniform_grid(double dt, double horizon);

}  // namespace conectl
