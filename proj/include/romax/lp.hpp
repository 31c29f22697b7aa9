#pragma once

#include <vector>

#include "romax/common.hpp"

namespace romax::lp {

enum class Rel { kLe, kGe, kEq };

/// min c'x  s.t.  A x (<=,>=,=) b,  lo <= x <= hi.
/// Upper bounds may be +infinity; lo == hi fixes a variable.
struct Problem {
  Mat a;
  Vec b;
  std::vector<Rel> rel;
  Vec c;
  Vec lo;
  Vec hi;
};

enum class Status { kOptimal, kInfeasible, kUnbounded };

struct Solution {
  Status status = Status::kInfeasible;
  double objective = 0.0;
  Vec x;
};

/// Dense bounded-variable primal simplex, Bland's rule throughout
/// (deterministic, anti-cycling). Intended for small instances.
Solution solve(const Problem& problem);

}  // namespace romax::lp
