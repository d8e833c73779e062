#include "conectl/path.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace conectl {

PathRcll::PathRcll(std::vector<double> times, Mat values, Interp interp,
                   std::vector<Jump> jumps)
    : times_(std::move(times)), values_(std::move(values)), interp_(interp),
      jumps_(std::move(jumps)) {
  if (times_.empty()) throw SpecError("path needs at least one sample");
  if (times_[0] != 0.0) throw SpecError("path must start at time 0");
  if (values_.cols() != static_cast<Eigen::Index>(times_.size()))
    throw SpecError("path value count does not match time grid");
  for (std::size_t i = 1; i < times_.size(); ++i)
    if (!(times_[i] > times_[i - 1]))
      throw SpecError("path times must be strictly increasing");
  if (!values_.allFinite()) throw SpecError("path values must be finite");
  jump_of_index_.assign(times_.size(), -1);
  for (std::size_t j = 0; j < jumps_.size(); ++j) {
    const auto& jm = jumps_[j];
    if (jm.index < 0 || jm.index >= size()) throw SpecError("jump index out of range");
    if (jm.pre_value.size() != dim()) throw SpecError("jump pre-value dimension mismatch");
    if ((jm.pre_value - values_.col(jm.index)).norm() == 0.0)
      throw SpecError("recorded jump with no change");
    jump_of_index_[static_cast<std::size_t>(jm.index)] = static_cast<int>(j);
  }
}

bool PathRcll::has_jump_record(int i) const {
  return jump_of_index_[static_cast<std::size_t>(i)] >= 0;
}

Vec PathRcll::left_limit(int i) const {
  const int j = jump_of_index_[static_cast<std::size_t>(i)];
  if (j >= 0) return jumps_[static_cast<std::size_t>(j)].pre_value;
  if (interp_ == Interp::PiecewiseConstant)
    return i == 0 ? values_.col(0) : values_.col(i - 1);
  return values_.col(i);
}

Vec PathRcll::at(double t) const {
  if (t < times_.front() || t > times_.back() + 1e-12)
    throw DomainError("path evaluation outside the time grid");
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const int hi = static_cast<int>(it - times_.begin());
  if (hi == 0) return values_.col(0);
  if (hi >= size()) return values_.col(size() - 1);
  const int lo = hi - 1;
  if (interp_ == Interp::PiecewiseConstant) return values_.col(lo);
  const double w = (t - times_[static_cast<std::size_t>(lo)]) /
                   (times_[static_cast<std::size_t>(hi)] - times_[static_cast<std::size_t>(lo)]);
  return (1.0 - w) * values_.col(lo) + w * left_limit(hi);
}

PathRcll PathRcll::truncated(int last_index) const {
  if (last_index < 0 || last_index >= size()) throw SpecError("truncation index out of range");
  std::vector<double> t(times_.begin(), times_.begin() + last_index + 1);
  Mat v = values_.leftCols(last_index + 1);
  std::vector<Jump> js;
  for (const auto& j : jumps_)
    if (j.index <= last_index) js.push_back(j);
  return PathRcll(std::move(t), std::move(v), interp_, std::move(js));
}

PathRcll PathRcll::zero(const std::vector<double>& times, int dim, Interp interp) {
  return PathRcll(times, Mat::Zero(dim, static_cast<Eigen::Index>(times.size())), interp);
}

void PathRcll::to_csv(std::ostream& os) const {
  os << "time";
  for (int d = 0; d < dim(); ++d) os << ",x" << d;
  os << ",is_jump\n";
  os.precision(17);
  for (int i = 0; i < size(); ++i) {
    os << times_[static_cast<std::size_t>(i)];
    for (int d = 0; d < dim(); ++d) os << "," << values_(d, i);
    os << "," << (has_jump_record(i) ? 1 : 0) << "\n";
  }
}

std::vector<double> uniform_grid(double dt, double horizon) {
  if (!(dt > 0.0) || !(horizon > 0.0)) throw SpecError("grid needs dt > 0 and horizon > 0");
  const int n = static_cast<int>(std::ceil(horizon / dt - 1e-9));
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) t[static_cast<std::size_t>(i)] = i * dt;
  t.back() = std::max(t.back(), horizon);
  return t;
}

}  // namespace conectl
