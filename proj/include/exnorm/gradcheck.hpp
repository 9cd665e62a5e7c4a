#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "exnorm/autodiff.hpp"

namespace exnorm {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

/// Builds a scalar loss on the given tape. Parameters under test must be bound
/// through Tape::parameter so their values can be perturbed between calls.
using LossBuilder = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients with central differences. For each sampled
/// coordinate the error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Parameters with more than max_coords elements are sampled (seeded).
/// Throws NumericError when any loss evaluation is not finite.
GradCheckReport gradient_check(const LossBuilder& loss, std::span<Parameter<double>* const> params,
                               double eps = 1e-5, std::size_t max_coords = 64,
                               std::uint64_t seed = 0);

}  // namespace exnorm
