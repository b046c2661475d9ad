#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "autood/graph.hpp"

namespace autood {

enum class OptKind { kSgdMomentum, kAdam };

OptKind opt_kind_from_string(const std::string& s);

// First-order optimizer over shared parameters. Moment accumulators are
// keyed by parameter identity and created lazily with matching shapes.
class Optimizer {
public:
    Optimizer(OptKind kind, double lr, double momentum = 0.9, double beta2 = 0.999,
              double eps = 1e-8);

    // Applies one update using Param::grad. Throws NumericError and leaves
    // every parameter untouched if any gradient is non-finite.
    void step(const std::vector<ParamPtr>& params);

    static void zero_grad(const std::vector<ParamPtr>& params);

    void set_learning_rate(double lr) { lr_ = lr; }
    double learning_rate() const { return lr_; }
    OptKind kind() const { return kind_; }
    int64_t steps_taken() const { return t_; }

private:
    OptKind kind_;
    double lr_;
    double momentum_;
    double beta2_;
    double eps_;
    int64_t t_ = 0;
    std::map<const Param*, Tensor> m1_;
    std::map<const Param*, Tensor> m2_;
};

}  // namespace autood
