#include <algorithm>
#include <cmath>

#include "ops_internal.hpp"

namespace autood::kernels {

// E_i = -log sum_k phi_k N(z_i | mu_k, diag(var_k)), computed in log space.
void gaussian_energy_forward(const Tensor& z, const Tensor& phi, const Tensor& mu,
                             const Tensor& var, Tensor& out, Tensor& resp) {
    int B = z.shape[0], D = z.shape[1], K = phi.shape[0];
    out = Tensor({B});
    resp = Tensor({B, K});
    std::vector<double> log_norm(static_cast<size_t>(K));  // -0.5*sum log(2*pi*var)
    for (int k = 0; k < K; ++k) {
        double s = 0.0;
        for (int d = 0; d < D; ++d) s += std::log(2.0 * M_PI * var[static_cast<int64_t>(k) * D + d]);
        log_norm[static_cast<size_t>(k)] = -0.5 * s;
    }
    std::vector<double> a(static_cast<size_t>(K));
    for (int i = 0; i < B; ++i) {
        for (int k = 0; k < K; ++k) {
            double quad = 0.0;
            for (int d = 0; d < D; ++d) {
                double diff = z[static_cast<int64_t>(i) * D + d] - mu[static_cast<int64_t>(k) * D + d];
                quad += diff * diff / var[static_cast<int64_t>(k) * D + d];
            }
            a[static_cast<size_t>(k)] = std::log(std::max(phi[k], 1e-300)) +
                                        log_norm[static_cast<size_t>(k)] - 0.5 * quad;
        }
        double m = *std::max_element(a.begin(), a.end());
        double s = 0.0;
        for (int k = 0; k < K; ++k) s += std::exp(a[static_cast<size_t>(k)] - m);
        out[i] = -(m + std::log(s));
        for (int k = 0; k < K; ++k)
            resp[static_cast<int64_t>(i) * K + k] = std::exp(a[static_cast<size_t>(k)] - m) / s;
    }
}

void gaussian_energy_backward(const Tensor& z, const Tensor& mu, const Tensor& var,
                              const Tensor& resp, const Tensor& gout, Tensor& gz) {
    int B = z.shape[0], D = z.shape[1], K = resp.shape[1];
    for (int i = 0; i < B; ++i)
        for (int d = 0; d < D; ++d) {
            double g = 0.0;
            for (int k = 0; k < K; ++k) {
                double diff =
                    z[static_cast<int64_t>(i) * D + d] - mu[static_cast<int64_t>(k) * D + d];
                g += resp[static_cast<int64_t>(i) * K + k] * diff /
                     var[static_cast<int64_t>(k) * D + d];
            }
            gz[static_cast<int64_t>(i) * D + d] = gout[i] * g;
        }
}

// Soft assignments q_ij with a Student-t(1) kernel and the sharpened
// target p_ij = (q_ij^2 / sum_i q_ij), row-normalized. The target acts as
// a constant: gradients flow through q only.
void cluster_kl_forward(const Tensor& z, const Tensor& centroids, const Tensor* frozen_p,
                        Tensor& out, Tensor& q, Tensor& p, Tensor& t) {
    int B = z.shape[0], D = z.shape[1], J = centroids.shape[0];
    out = Tensor({B});
    q = Tensor({B, J});
    t = Tensor({B, J});
    for (int i = 0; i < B; ++i) {
        double T = 0.0;
        for (int j = 0; j < J; ++j) {
            double d2 = 0.0;
            for (int d = 0; d < D; ++d) {
                double diff = z[static_cast<int64_t>(i) * D + d] -
                              centroids[static_cast<int64_t>(j) * D + d];
                d2 += diff * diff;
            }
            double tij = 1.0 / (1.0 + d2);
            t[static_cast<int64_t>(i) * J + j] = tij;
            T += tij;
        }
        for (int j = 0; j < J; ++j)
            q[static_cast<int64_t>(i) * J + j] = t[static_cast<int64_t>(i) * J + j] / T;
    }
    if (frozen_p != nullptr) {
        p = *frozen_p;
    } else {
        p = Tensor({B, J});
        std::vector<double> colmass(static_cast<size_t>(J), 0.0);
        for (int j = 0; j < J; ++j)
            for (int i = 0; i < B; ++i)
                colmass[static_cast<size_t>(j)] += q[static_cast<int64_t>(i) * J + j];
        for (int i = 0; i < B; ++i) {
            double rs = 0.0;
            for (int j = 0; j < J; ++j) {
                double qij = q[static_cast<int64_t>(i) * J + j];
                double u = qij * qij / std::max(colmass[static_cast<size_t>(j)], 1e-300);
                p[static_cast<int64_t>(i) * J + j] = u;
                rs += u;
            }
            for (int j = 0; j < J; ++j) p[static_cast<int64_t>(i) * J + j] /= rs;
        }
    }
    for (int i = 0; i < B; ++i) {
        double kl = 0.0;
        for (int j = 0; j < J; ++j) {
            double pij = p[static_cast<int64_t>(i) * J + j];
            if (pij <= 0.0) continue;
            kl += pij * (std::log(pij) - std::log(q[static_cast<int64_t>(i) * J + j]));
        }
        out[i] = kl;
    }
}

void cluster_kl_backward(const Tensor& z, const Tensor& centroids, const Tensor& q,
                         const Tensor& p, const Tensor& t, const Tensor& gout, Tensor& gz) {
    int B = z.shape[0], D = z.shape[1], J = centroids.shape[0];
    for (int i = 0; i < B; ++i)
        for (int d = 0; d < D; ++d) {
            double g = 0.0;
            for (int j = 0; j < J; ++j) {
                double diff = z[static_cast<int64_t>(i) * D + d] -
                              centroids[static_cast<int64_t>(j) * D + d];
                g += 2.0 *
                     (p[static_cast<int64_t>(i) * J + j] - q[static_cast<int64_t>(i) * J + j]) *
                     t[static_cast<int64_t>(i) * J + j] * diff;
            }
            gz[static_cast<int64_t>(i) * D + d] = gout[i] * g;
        }
}

}  // namespace autood::kernels
