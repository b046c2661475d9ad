#pragma once

#include <vector>

#include "autood/graph.hpp"
#include "autood/rng.hpp"

namespace autood {

// Central-difference validation of reverse-mode gradients.
//
// Compares the analytic gradient of the scalar node `loss` with numeric
// differences taken over the given leaves. When max_coords_per_leaf > 0
// only that many randomly chosen coordinates per leaf are probed, which
// keeps the check affordable on large weight tensors.
//
// Returns max over probed coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double grad_check(Graph& g, NodeId loss, const std::vector<ParamPtr>& leaves, double eps,
                  int max_coords_per_leaf = 0, Rng* rng = nullptr);

}  // namespace autood
