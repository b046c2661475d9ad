#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ops_internal.hpp"

namespace autood::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// im2col for one image: out is [H*W, Cin*k*k] with zero padding (k-1)/2
void im2col(const double* x, int C, int H, int W, int k, double* cols) {
    int p = (k - 1) / 2;
    int K = C * k * k;
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            double* row = cols + (static_cast<int64_t>(h) * W + w) * K;
            int idx = 0;
            for (int c = 0; c < C; ++c) {
                const double* plane = x + static_cast<int64_t>(c) * H * W;
                for (int dy = 0; dy < k; ++dy) {
                    int hy = h + dy - p;
                    for (int dx = 0; dx < k; ++dx, ++idx) {
                        int wx = w + dx - p;
                        row[idx] = (hy >= 0 && hy < H && wx >= 0 && wx < W)
                                       ? plane[static_cast<int64_t>(hy) * W + wx]
                                       : 0.0;
                    }
                }
            }
        }
}

// scatter-add of column gradients back to the image
void col2im_add(const double* cols, int C, int H, int W, int k, double* gx) {
    int p = (k - 1) / 2;
    int K = C * k * k;
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            const double* row = cols + (static_cast<int64_t>(h) * W + w) * K;
            int idx = 0;
            for (int c = 0; c < C; ++c) {
                double* plane = gx + static_cast<int64_t>(c) * H * W;
                for (int dy = 0; dy < k; ++dy) {
                    int hy = h + dy - p;
                    for (int dx = 0; dx < k; ++dx, ++idx) {
                        int wx = w + dx - p;
                        if (hy >= 0 && hy < H && wx >= 0 && wx < W)
                            plane[static_cast<int64_t>(hy) * W + wx] += row[idx];
                    }
                }
            }
        }
}

// weight for the equivalent forward convolution of a transposed conv:
// wf[co,ci,dy,dx] = w[ci,co,k-1-dy,k-1-dx]
Tensor flip_swap(const Tensor& w, int k) {
    int Cin = w.shape[0], Cout = w.shape[1];
    Tensor wf({Cout, Cin, k, k});
    for (int ci = 0; ci < Cin; ++ci)
        for (int co = 0; co < Cout; ++co)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                    wf[((static_cast<int64_t>(co) * Cin + ci) * k + dy) * k + dx] =
                        w[((static_cast<int64_t>(ci) * Cout + co) * k + (k - 1 - dy)) * k +
                          (k - 1 - dx)];
    return wf;
}

}  // namespace

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int k, Tensor& out) {
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int Cout = w.shape[0], K = C * k * k;
    out = Tensor({B, Cout, H, W});
    std::vector<double> cols(static_cast<size_t>(H) * W * K);
    std::vector<double> prod(static_cast<size_t>(H) * W * Cout);
    CMapMat wm(w.data.data(), Cout, K);
    for (int bi = 0; bi < B; ++bi) {
        im2col(x.data.data() + static_cast<int64_t>(bi) * C * H * W, C, H, W, k, cols.data());
        CMapMat cm(cols.data(), H * W, K);
        MapMat pm(prod.data(), H * W, Cout);
        pm.noalias() = cm * wm.transpose();
        double* dst = out.data.data() + static_cast<int64_t>(bi) * Cout * H * W;
        for (int co = 0; co < Cout; ++co)
            for (int p = 0; p < H * W; ++p)
                dst[static_cast<int64_t>(co) * H * W + p] =
                    prod[static_cast<size_t>(p) * Cout + co] + b[co];
    }
}

void conv2d_backward(const Tensor& x, const Tensor& w, int k, const Tensor& gout, Tensor* gx,
                     Tensor* gw, Tensor* gb) {
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int Cout = w.shape[0], K = C * k * k;
    std::vector<double> cols(static_cast<size_t>(H) * W * K);
    std::vector<double> gyt(static_cast<size_t>(H) * W * Cout);  // [HW, Cout]
    CMapMat wm(w.data.data(), Cout, K);
    for (int bi = 0; bi < B; ++bi) {
        const double* gsrc = gout.data.data() + static_cast<int64_t>(bi) * Cout * H * W;
        for (int co = 0; co < Cout; ++co)
            for (int p = 0; p < H * W; ++p)
                gyt[static_cast<size_t>(p) * Cout + co] = gsrc[static_cast<int64_t>(co) * H * W + p];
        CMapMat gym(gyt.data(), H * W, Cout);
        if (gb) {
            for (int co = 0; co < Cout; ++co) {
                double s = 0.0;
                for (int p = 0; p < H * W; ++p) s += gsrc[static_cast<int64_t>(co) * H * W + p];
                (*gb)[co] += s;
            }
        }
        if (gw || gx)
            im2col(x.data.data() + static_cast<int64_t>(bi) * C * H * W, C, H, W, k, cols.data());
        if (gw) {
            MapMat gwm(gw->data.data(), Cout, K);
            CMapMat cm(cols.data(), H * W, K);
            gwm.noalias() += gym.transpose() * cm;
        }
        if (gx) {
            MapMat cm(cols.data(), H * W, K);
            cm.noalias() = gym * wm;
            col2im_add(cols.data(), C, H, W, k,
                       gx->data.data() + static_cast<int64_t>(bi) * C * H * W);
        }
    }
}

void convt2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int k, Tensor& out) {
    conv2d_forward(x, flip_swap(w, k), b, k, out);
}

void convt2d_backward(const Tensor& x, const Tensor& w, int k, const Tensor& gout, Tensor* gx,
                      Tensor* gw, Tensor* gb) {
    Tensor wf = flip_swap(w, k);
    Tensor gwf;
    Tensor* gwf_ptr = nullptr;
    if (gw) {
        gwf = Tensor(wf.shape);
        gwf_ptr = &gwf;
    }
    conv2d_backward(x, wf, k, gout, gx, gwf_ptr, gb);
    if (gw) {
        int Cin = w.shape[0], Cout = w.shape[1];
        for (int ci = 0; ci < Cin; ++ci)
            for (int co = 0; co < Cout; ++co)
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        (*gw)[((static_cast<int64_t>(ci) * Cout + co) * k + (k - 1 - dy)) * k +
                              (k - 1 - dx)] +=
                            gwf[((static_cast<int64_t>(co) * Cin + ci) * k + dy) * k + dx];
    }
}

int pool_out_size(int in, int k) { return k == 1 ? in : (in + 1) / 2; }

void maxpool_forward(const Tensor& x, int k, Tensor& out, std::vector<int>& argmax) {
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (k == 1) {
        out = x;
        argmax.assign(static_cast<size_t>(x.numel()), 0);
        for (int64_t i = 0; i < x.numel(); ++i) argmax[static_cast<size_t>(i)] = static_cast<int>(i);
        return;
    }
    int Ho = pool_out_size(H, k), Wo = pool_out_size(W, k), p = (k - 1) / 2;
    out = Tensor({B, C, Ho, Wo});
    argmax.assign(static_cast<size_t>(out.numel()), 0);
    int64_t oi = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        const double* plane = x.data.data() + static_cast<int64_t>(bc) * H * W;
        for (int ho = 0; ho < Ho; ++ho)
            for (int wo = 0; wo < Wo; ++wo, ++oi) {
                double best = -std::numeric_limits<double>::infinity();
                int bestidx = -1;
                for (int dy = 0; dy < k; ++dy) {
                    int hy = 2 * ho + dy - p;
                    if (hy < 0 || hy >= H) continue;
                    for (int dx = 0; dx < k; ++dx) {
                        int wx = 2 * wo + dx - p;
                        if (wx < 0 || wx >= W) continue;
                        double v = plane[static_cast<int64_t>(hy) * W + wx];
                        if (v > best) {
                            best = v;
                            bestidx = hy * W + wx;
                        }
                    }
                }
                out[oi] = best;
                argmax[static_cast<size_t>(oi)] = bc * H * W + bestidx;
            }
    }
}

void maxpool_backward(const std::vector<int>& argmax, const Tensor& gout,
                      const std::vector<int>& xshape, Tensor& gx) {
    (void)xshape;
    for (int64_t i = 0; i < gout.numel(); ++i)
        gx[argmax[static_cast<size_t>(i)]] += gout[i];
}

void avgpool_forward(const Tensor& x, int k, Tensor& out) {
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (k == 1) {
        out = x;
        return;
    }
    int Ho = pool_out_size(H, k), Wo = pool_out_size(W, k), p = (k - 1) / 2;
    out = Tensor({B, C, Ho, Wo});
    int64_t oi = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        const double* plane = x.data.data() + static_cast<int64_t>(bc) * H * W;
        for (int ho = 0; ho < Ho; ++ho)
            for (int wo = 0; wo < Wo; ++wo, ++oi) {
                double s = 0.0;
                int cnt = 0;
                for (int dy = 0; dy < k; ++dy) {
                    int hy = 2 * ho + dy - p;
                    if (hy < 0 || hy >= H) continue;
                    for (int dx = 0; dx < k; ++dx) {
                        int wx = 2 * wo + dx - p;
                        if (wx < 0 || wx >= W) continue;
                        s += plane[static_cast<int64_t>(hy) * W + wx];
                        ++cnt;
                    }
                }
                out[oi] = s / cnt;
            }
    }
}

void avgpool_backward(const std::vector<int>& xshape, int k, const Tensor& gout, Tensor& gx) {
    int B = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
    if (k == 1) {
        for (int64_t i = 0; i < gout.numel(); ++i) gx[i] += gout[i];
        return;
    }
    int Ho = pool_out_size(H, k), Wo = pool_out_size(W, k), p = (k - 1) / 2;
    int64_t oi = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        double* plane = gx.data.data() + static_cast<int64_t>(bc) * H * W;
        for (int ho = 0; ho < Ho; ++ho)
            for (int wo = 0; wo < Wo; ++wo, ++oi) {
                int cnt = 0;
                for (int dy = 0; dy < k; ++dy) {
                    int hy = 2 * ho + dy - p;
                    if (hy < 0 || hy >= H) continue;
                    for (int dx = 0; dx < k; ++dx) {
                        int wx = 2 * wo + dx - p;
                        if (wx >= 0 && wx < W) ++cnt;
                    }
                }
                double g = gout[oi] / cnt;
                for (int dy = 0; dy < k; ++dy) {
                    int hy = 2 * ho + dy - p;
                    if (hy < 0 || hy >= H) continue;
                    for (int dx = 0; dx < k; ++dx) {
                        int wx = 2 * wo + dx - p;
                        if (wx >= 0 && wx < W) plane[static_cast<int64_t>(hy) * W + wx] += g;
                    }
                }
            }
    }
}

void boxfilter_forward(const Tensor& x, int k, Tensor& out) {
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int p = (k - 1) / 2;
    out = Tensor(x.shape);
    int64_t oi = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        const double* plane = x.data.data() + static_cast<int64_t>(bc) * H * W;
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w, ++oi) {
                double s = 0.0;
                int cnt = 0;
                for (int dy = -p; dy <= p; ++dy) {
                    int hy = h + dy;
                    if (hy < 0 || hy >= H) continue;
                    for (int dx = -p; dx <= p; ++dx) {
                        int wx = w + dx;
                        if (wx < 0 || wx >= W) continue;
                        s += plane[static_cast<int64_t>(hy) * W + wx];
                        ++cnt;
                    }
                }
                out[oi] = s / cnt;
            }
    }
}

void boxfilter_backward(const std::vector<int>& xshape, int k, const Tensor& gout, Tensor& gx) {
    int B = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
    int p = (k - 1) / 2;
    int64_t oi = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        double* plane = gx.data.data() + static_cast<int64_t>(bc) * H * W;
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w, ++oi) {
                int hlo = std::max(0, h - p), hhi = std::min(H - 1, h + p);
                int wlo = std::max(0, w - p), whi = std::min(W - 1, w + p);
                double g = gout[oi] / ((hhi - hlo + 1) * (whi - wlo + 1));
                for (int hy = hlo; hy <= hhi; ++hy)
                    for (int wx = wlo; wx <= whi; ++wx)
                        plane[static_cast<int64_t>(hy) * W + wx] += g;
            }
    }
}

void unpool_forward(const Tensor& x, int th, int tw, Tensor& out) {
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    out = Tensor({B, C, th, tw});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x.data.data() + static_cast<int64_t>(bc) * H * W;
        double* dst = out.data.data() + static_cast<int64_t>(bc) * th * tw;
        for (int h = 0; h < th; ++h) {
            int hs = std::min(H - 1, h * H / th);
            for (int w = 0; w < tw; ++w) {
                int ws = std::min(W - 1, w * W / tw);
                dst[static_cast<int64_t>(h) * tw + w] = src[static_cast<int64_t>(hs) * W + ws];
            }
        }
    }
}

void unpool_backward(const std::vector<int>& xshape, int th, int tw, const Tensor& gout,
                     Tensor& gx) {
    int B = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
    for (int bc = 0; bc < B * C; ++bc) {
        double* dst = gx.data.data() + static_cast<int64_t>(bc) * H * W;
        const double* src = gout.data.data() + static_cast<int64_t>(bc) * th * tw;
        for (int h = 0; h < th; ++h) {
            int hs = std::min(H - 1, h * H / th);
            for (int w = 0; w < tw; ++w) {
                int ws = std::min(W - 1, w * W / tw);
                dst[static_cast<int64_t>(hs) * W + ws] += src[static_cast<int64_t>(h) * tw + w];
            }
        }
    }
}

void batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& rmean,
                       Tensor& rvar, double momentum, double eps, bool training, Tensor& out,
                       Tensor& xhat, Tensor& invstd) {
    int B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    int64_t n = static_cast<int64_t>(B) * HW;
    out = Tensor(x.shape);
    xhat = Tensor(x.shape);
    invstd = Tensor({C});
    for (int c = 0; c < C; ++c) {
        double m, v;
        if (training) {
            double s = 0.0, ss = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* plane = x.data.data() + (static_cast<int64_t>(b) * C + c) * HW;
                for (int p = 0; p < HW; ++p) {
                    s += plane[p];
                    ss += plane[p] * plane[p];
                }
            }
            m = s / n;
            v = std::max(0.0, ss / n - m * m);
            rmean[c] = momentum * rmean[c] + (1.0 - momentum) * m;
            rvar[c] = momentum * rvar[c] + (1.0 - momentum) * v;
        } else {
            m = rmean[c];
            v = rvar[c];
        }
        double is = 1.0 / std::sqrt(v + eps);
        invstd[c] = is;
        for (int b = 0; b < B; ++b) {
            const double* plane = x.data.data() + (static_cast<int64_t>(b) * C + c) * HW;
            double* xh = xhat.data.data() + (static_cast<int64_t>(b) * C + c) * HW;
            double* o = out.data.data() + (static_cast<int64_t>(b) * C + c) * HW;
            for (int p = 0; p < HW; ++p) {
                xh[p] = (plane[p] - m) * is;
                o[p] = gamma[c] * xh[p] + beta[c];
            }
        }
    }
}

void batchnorm_backward(const Tensor& gamma, const Tensor& xhat, const Tensor& invstd,
                        bool training, const Tensor& gout, Tensor* gx, Tensor* ggamma,
                        Tensor* gbeta) {
    int B = xhat.shape[0], C = xhat.shape[1], HW = xhat.shape[2] * xhat.shape[3];
    int64_t n = static_cast<int64_t>(B) * HW;
    for (int c = 0; c < C; ++c) {
        double sum_gy = 0.0, sum_gy_xh = 0.0;
        for (int b = 0; b < B; ++b) {
            const double* gy = gout.data.data() + (static_cast<int64_t>(b) * C + c) * HW;
            const double* xh = xhat.data.data() + (static_cast<int64_t>(b) * C + c) * HW;
            for (int p = 0; p < HW; ++p) {
                sum_gy += gy[p];
                sum_gy_xh += gy[p] * xh[p];
            }
        }
        if (gbeta) (*gbeta)[c] += sum_gy;
        if (ggamma) (*ggamma)[c] += sum_gy_xh;
        if (gx) {
            double g = gamma[c], is = invstd[c];
            for (int b = 0; b < B; ++b) {
                const double* gy = gout.data.data() + (static_cast<int64_t>(b) * C + c) * HW;
                const double* xh = xhat.data.data() + (static_cast<int64_t>(b) * C + c) * HW;
                double* gxp = gx->data.data() + (static_cast<int64_t>(b) * C + c) * HW;
                for (int p = 0; p < HW; ++p) {
                    if (training) {
                        gxp[p] += g * is *
                                  (gy[p] - sum_gy / n - xh[p] * sum_gy_xh / n);
                    } else {
                        gxp[p] += g * is * gy[p];
                    }
                }
            }
        }
    }
}

void instnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                      Tensor& out, Tensor& xhat, Tensor& invstd) {
    int B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    out = Tensor(x.shape);
    xhat = Tensor(x.shape);
    invstd = Tensor({B * C});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* plane = x.data.data() + static_cast<int64_t>(bc) * HW;
        double s = 0.0, ss = 0.0;
        for (int p = 0; p < HW; ++p) {
            s += plane[p];
            ss += plane[p] * plane[p];
        }
        double m = s / HW;
        double v = std::max(0.0, ss / HW - m * m);
        double is = 1.0 / std::sqrt(v + eps);
        invstd[bc] = is;
        int c = bc % C;
        double* xh = xhat.data.data() + static_cast<int64_t>(bc) * HW;
        double* o = out.data.data() + static_cast<int64_t>(bc) * HW;
        for (int p = 0; p < HW; ++p) {
            xh[p] = (plane[p] - m) * is;
            o[p] = gamma[c] * xh[p] + beta[c];
        }
    }
}

void instnorm_backward(const Tensor& gamma, const Tensor& xhat, const Tensor& invstd,
                       const Tensor& gout, Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
    int B = xhat.shape[0], C = xhat.shape[1], HW = xhat.shape[2] * xhat.shape[3];
    for (int bc = 0; bc < B * C; ++bc) {
        int c = bc % C;
        const double* gy = gout.data.data() + static_cast<int64_t>(bc) * HW;
        const double* xh = xhat.data.data() + static_cast<int64_t>(bc) * HW;
        double sum_gy = 0.0, sum_gy_xh = 0.0;
        for (int p = 0; p < HW; ++p) {
            sum_gy += gy[p];
            sum_gy_xh += gy[p] * xh[p];
        }
        if (gbeta) (*gbeta)[c] += sum_gy;
        if (ggamma) (*ggamma)[c] += sum_gy_xh;
        if (gx) {
            double g = gamma[c], is = invstd[bc];
            double* gxp = gx->data.data() + static_cast<int64_t>(bc) * HW;
            for (int p = 0; p < HW; ++p)
                gxp[p] += g * is * (gy[p] - sum_gy / HW - xh[p] * sum_gy_xh / HW);
        }
    }
}

}  // namespace autood::kernels
