#include "autood/optim.hpp"

#include <cmath>

namespace autood {

OptKind opt_kind_from_string(const std::string& s) {
    if (s == "sgd-momentum") return OptKind::kSgdMomentum;
    if (s == "adam") return OptKind::kAdam;
    throw ConfigError("unknown optimizer kind '" + s + "'");
}

Optimizer::Optimizer(OptKind kind, double lr, double momentum, double beta2, double eps)
    : kind_(kind), lr_(lr), momentum_(momentum), beta2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
}

void Optimizer::step(const std::vector<ParamPtr>& params) {
    for (const auto& p : params) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        if (!p->grad.all_finite())
            throw NumericError("non-finite gradient for parameter '" + p->name +
                               "'; parameters unchanged");
    }
    ++t_;
    for (const auto& p : params) {
        if (!p->requires_grad) continue;
        Tensor& m = m1_[p.get()];
        if (m.shape != p->value.shape) m = Tensor(p->value.shape);
        if (kind_ == OptKind::kSgdMomentum) {
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                m[i] = momentum_ * m[i] + p->grad[i];
                p->value[i] -= lr_ * m[i];
            }
        } else {
            Tensor& v = m2_[p.get()];
            if (v.shape != p->value.shape) v = Tensor(p->value.shape);
            double bc1 = 1.0 - std::pow(momentum_, static_cast<double>(t_));
            double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                double g = p->grad[i];
                m[i] = momentum_ * m[i] + (1.0 - momentum_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                p->value[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            }
        }
    }
}

void Optimizer::zero_grad(const std::vector<ParamPtr>& params) {
    for (const auto& p : params) p->zero_grad();
}

}  // namespace autood
