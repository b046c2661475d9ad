#pragma once

#include <vector>

#include "autood/tensor.hpp"

namespace autood {

// Per-sample anomaly scores with binary ground truth (1 = outlier).
struct LabeledScoreSet {
    std::vector<double> scores;
    std::vector<int> labels;
};

// P(score_pos > score_neg) + 0.5 P(tie), via midranks.
double auroc(const LabeledScoreSet& set);

enum class PositiveClass { kIn, kOut };

// Area under the precision-recall step curve, ties grouped at one
// threshold. kOut ranks by score, kIn by negated score.
double aupr(const LabeledScoreSet& set, PositiveClass positive);

// Relative per-region overlap: thresholds are pooled-score quantiles at
// levels (t+0.5)/n, predictions are strict (score > threshold), regions
// are 4-connected components of the truth masks. Maps and masks are [H,W].
double rpro(const std::vector<Tensor>& score_maps, const std::vector<Tensor>& truth_masks,
            int n_thresholds = 50);

}  // namespace autood
