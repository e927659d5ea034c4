#pragma once

#include <cstddef>
#include <string>

#include "scavit/model.hpp"

namespace scavit {

struct GradcheckOptions {
  double step = 1e-5;
  double floor = 1e-7;
  double tolerance = 1e-3;
};

struct GradcheckReport {
  std::size_t checked = 0;  ///< scalar parameters compared
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double seconds = 0.0;

  bool passed(const GradcheckOptions& o) const { return max_rel_error < o.tolerance; }
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Compares the backward gradient of the cross-entropy loss on one image
/// against central differences for every scalar parameter of `model`.
/// Inference-mode forward (no dropout or layer drop). Intermediate branch
/// states are cached so that each perturbation only recomputes the stages
/// downstream of the perturbed tensor.
GradcheckReport gradcheck(CrossVit& model, const Tensor& image, int label,
                          const GradcheckOptions& options = {});

}  // namespace scavit
