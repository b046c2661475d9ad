#pragma once

#include "autood/tensor.hpp"

// Kernels for the image-shaped and detector-specific ops. Split out of
// graph.cpp to keep the dispatch readable; everything here is plain
// NCHW row-major math.
namespace autood::kernels {

// stride-1 "same" convolution, w[Cout,Cin,k,k], b[Cout]
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int k, Tensor& out);
void conv2d_backward(const Tensor& x, const Tensor& w, int k, const Tensor& gout, Tensor* gx,
                     Tensor* gw, Tensor* gb);

// transposed convolution, stride 1, same padding, w[Cin,Cout,k,k]
void convt2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int k, Tensor& out);
void convt2d_backward(const Tensor& x, const Tensor& w, int k, const Tensor& gout, Tensor* gx,
                      Tensor* gw, Tensor* gb);

int pool_out_size(int in, int k);  // k==1 identity, else ceil(in/2)

void maxpool_forward(const Tensor& x, int k, Tensor& out, std::vector<int>& argmax);
void maxpool_backward(const std::vector<int>& argmax, const Tensor& gout,
                      const std::vector<int>& xshape, Tensor& gx);
void avgpool_forward(const Tensor& x, int k, Tensor& out);
void avgpool_backward(const std::vector<int>& xshape, int k, const Tensor& gout, Tensor& gx);

void boxfilter_forward(const Tensor& x, int k, Tensor& out);
void boxfilter_backward(const std::vector<int>& xshape, int k, const Tensor& gout, Tensor& gx);

void unpool_forward(const Tensor& x, int th, int tw, Tensor& out);
void unpool_backward(const std::vector<int>& xshape, int th, int tw, const Tensor& gout,
                     Tensor& gx);

void batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& rmean,
                       Tensor& rvar, double momentum, double eps, bool training, Tensor& out,
                       Tensor& xhat, Tensor& invstd);
void batchnorm_backward(const Tensor& gamma, const Tensor& xhat, const Tensor& invstd,
                        bool training, const Tensor& gout, Tensor* gx, Tensor* ggamma,
                        Tensor* gbeta);

void instnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                      Tensor& out, Tensor& xhat, Tensor& invstd);
void instnorm_backward(const Tensor& gamma, const Tensor& xhat, const Tensor& invstd,
                       const Tensor& gout, Tensor* gx, Tensor* ggamma, Tensor* gbeta);

// negative log-likelihood (energy) of a diagonal Gaussian mixture;
// resp receives the per-sample component responsibilities
void gaussian_energy_forward(const Tensor& z, const Tensor& phi, const Tensor& mu,
                             const Tensor& var, Tensor& out, Tensor& resp);
void gaussian_energy_backward(const Tensor& z, const Tensor& mu, const Tensor& var,
                              const Tensor& resp, const Tensor& gout, Tensor& gz);

// KL(P||Q) per sample with Student-t(1) soft assignments; P is the
// sharpened target and is treated as a constant in the gradient
void cluster_kl_forward(const Tensor& z, const Tensor& centroids, const Tensor* frozen_p,
                        Tensor& out, Tensor& q, Tensor& p, Tensor& t);
void cluster_kl_backward(const Tensor& z, const Tensor& centroids, const Tensor& q,
                         const Tensor& p, const Tensor& t, const Tensor& gout, Tensor& gz);

}  // namespace autood::kernels
