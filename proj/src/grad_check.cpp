#include "autood/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace autood {

double grad_check(Graph& g, NodeId loss, const std::vector<ParamPtr>& leaves, double eps,
                  int max_coords_per_leaf, Rng* rng) {
    if (eps <= 0.0 || eps > 1e-2) throw ContractError("grad_check: eps must be in (0, 1e-2]");

    for (const auto& p : leaves) p->zero_grad();
    g.invalidate();
    g.eval(loss);
    g.backward(loss);

    std::vector<Tensor> analytic;
    analytic.reserve(leaves.size());
    for (const auto& p : leaves) analytic.push_back(p->grad);

    auto loss_at = [&]() {
        g.invalidate();
        return g.eval(loss)[0];
    };

    double worst = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        Param& p = *leaves[li];
        int64_t n = p.value.numel();
        std::vector<int64_t> coords;
        if (max_coords_per_leaf > 0 && n > max_coords_per_leaf) {
            if (!rng) throw ContractError("grad_check: coordinate sampling needs an rng");
            for (int c = 0; c < max_coords_per_leaf; ++c)
                coords.push_back(rng->uniform_int(static_cast<int>(n)));
        } else {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        }
        for (int64_t i : coords) {
            double saved = p.value[i];
            p.value[i] = saved + eps;
            double f_plus = loss_at();
            p.value[i] = saved - eps;
            double f_minus = loss_at();
            p.value[i] = saved;
            double numeric = (f_plus - f_minus) / (2.0 * eps);
            double a = analytic[li][i];
            double err = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, err);
        }
    }
    g.invalidate();
    return worst;
}

}  // namespace autood
