#ifndef PAN_GRADCHECK_HPP
#define PAN_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace pan {

struct GradcheckResult {
  std::string layer;
  int cases = 0;
  double max_relative_error = 0;
  bool passed = false;
};

inline constexpr double kGradcheckTolerance = 1e-3;
inline constexpr double kGradcheckStep = 1e-3;

/// Layer names covered by run_gradcheck.
std::vector<std::string> gradcheck_layers();

/// Compares tape gradients with central differences on `cases` random
/// problems per layer. Evaluated in double precision; the error of one case is
/// |analytic - numeric| / max(|analytic|, |numeric|) over all inputs.
/// `corrupt` names a layer whose analytic gradient is scaled by 1.01 before
/// comparison (fault injection for testing the checker itself).
std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, int cases = 20, const std::string& corrupt = "");

}  // namespace pan

#endif  // PAN_GRADCHECK_HPP
