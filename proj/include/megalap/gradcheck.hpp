#pragma once

#include <string>
#include <vector>

#include "megalap/tensor.hpp"

namespace megalap {

/// One checked operation: the largest relative disagreement between the
/// analytic gradient and central finite differences (h = 1e-5). The
/// relative error uses max(|analytic|, |numeric|, 1e-3) as denominator so
/// near-zero gradients are compared absolutely.
struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;
  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
};

/// Checks every differentiable operation on small random inputs (several
/// seeds each), one full attention block, and a two-level network end to end
/// (20 randomly sampled parameters on a 32x32 instance).
GradCheckReport gradcheck_all(uint64_t seed = 1234, double tolerance = 1e-4);
GradCheckReport gradcheck_ops(uint64_t seed, double tolerance = 1e-4);
GradCheckReport gradcheck_ega_block(uint64_t seed, double tolerance = 1e-4);
GradCheckReport gradcheck_network(uint64_t seed, double tolerance = 1e-4, int sampled_params = 20);

}  // namespace megalap
