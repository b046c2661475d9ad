#include "autood/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autood/checkpoint.hpp"
#include "ops_internal.hpp"

namespace autood {

namespace {

constexpr double kSsimC1 = 0.01 * 0.01;  // L = 1
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr int kSsimWindow = 7;
constexpr double kDivergenceCeiling = 1e6;

std::string conv_key(const char* role, int layer, int cin, int cout, int k) {
    return std::string(role) + "/L" + std::to_string(layer) + "/conv/in" + std::to_string(cin) +
           "_out" + std::to_string(cout) + "_k" + std::to_string(k);
}

std::string norm_key(const char* role, int layer, NormType norm, int channels,
                     const char* field) {
    const char* kind = norm == NormType::kBatch ? "bn" : "inorm";
    return std::string(role) + "/L" + std::to_string(layer) + "/" + kind + "/c" +
           std::to_string(channels) + "/" + field;
}

NodeId apply_activation(Graph& g, Activation act, NodeId x) {
    switch (act) {
        case Activation::kSigmoid: return g.sigmoid(x);
        case Activation::kTanh: return g.tanh(x);
        case Activation::kRelu: return g.relu(x);
        case Activation::kLinear: return g.identity(x);
        case Activation::kSoftplus: return g.softplus(x);
        case Activation::kLeakyRelu: return g.leaky_relu(x);
        case Activation::kRelu6: return g.relu6(x);
        case Activation::kElu: return g.elu(x);
    }
    throw ContractError("unknown activation");
}

NodeId apply_norm(Graph& g, ParamStore& store, const char* role, int layer, NormType norm,
                  int channels, NodeId x) {
    if (norm == NormType::kNone) return x;
    ParamPtr gamma = store.get_or_create(norm_key(role, layer, norm, channels, "gamma"),
                                         {channels}, ParamStore::Init::kOnes);
    ParamPtr beta = store.get_or_create(norm_key(role, layer, norm, channels, "beta"), {channels},
                                        ParamStore::Init::kZeros);
    if (norm == NormType::kInstance) return g.instance_norm(x, g.parameter(gamma), g.parameter(beta));
    // running statistics are batch estimates, not shared weights; each
    // child instance tracks its own
    ParamPtr rm = make_param(norm_key(role, layer, norm, channels, "running_mean"),
                             Tensor::zeros({channels}), false);
    ParamPtr rv = make_param(norm_key(role, layer, norm, channels, "running_var"),
                             Tensor::full({channels}, 1.0), false);
    return g.batch_norm(x, g.parameter(gamma), g.parameter(beta), rm, rv);
}

struct DistNodes {
    NodeId per_sample;
    NodeId per_pixel;  // [B,1,H,W]
};

NodeId ssim_map(Graph& g, NodeId x, NodeId xh) {
    NodeId mx = g.box_filter(x, kSsimWindow);
    NodeId my = g.box_filter(xh, kSsimWindow);
    NodeId mxy = g.mul(mx, my);
    NodeId sxx = g.sub(g.box_filter(g.mul(x, x), kSsimWindow), g.square(mx));
    NodeId syy = g.sub(g.box_filter(g.mul(xh, xh), kSsimWindow), g.square(my));
    NodeId sxy = g.sub(g.box_filter(g.mul(x, xh), kSsimWindow), mxy);
    NodeId num = g.mul(g.add_const(g.scale(mxy, 2.0), kSsimC1),
                       g.add_const(g.scale(sxy, 2.0), kSsimC2));
    NodeId den = g.mul(g.add_const(g.add(g.square(mx), g.square(my)), kSsimC1),
                       g.add_const(g.add(sxx, syy), kSsimC2));
    return g.div(num, den);
}

DistNodes build_distance(Graph& g, Distance kind, NodeId x, NodeId recon) {
    switch (kind) {
        case Distance::kL1: {
            NodeId a = g.abs(g.sub(x, recon));
            return {g.per_sample_sum(a), g.channel_sum(a)};
        }
        case Distance::kL2: {
            NodeId sq = g.square(g.sub(x, recon));
            return {g.sqrt(g.per_sample_sum(sq)), g.sqrt(g.channel_sum(sq))};
        }
        case Distance::kL21: {
            // each pixel's channel vector is one row of the matrix norm
            NodeId pix = g.sqrt(g.channel_sum(g.square(g.sub(x, recon))));
            return {g.per_sample_sum(pix), pix};
        }
        case Distance::kSsim: {
            NodeId dmap = g.add_const(g.neg(ssim_map(g, x, g.clamp(recon, 0.0, 1.0))), 1.0);
            return {g.per_sample_mean(dmap), g.channel_mean(dmap)};
        }
    }
    throw ContractError("unknown distance");
}

struct RegNodes {
    NodeId per_sample;
    NodeId batch;
};

RegNodes build_regularizer(Graph& g, Hypothesis h, NodeId latent, const HypothesisState& state) {
    switch (h) {
        case Hypothesis::kDensity: {
            NodeId e = g.gaussian_energy(latent, state.phi, state.mu, state.var);
            return {e, g.mean_all(e)};
        }
        case Hypothesis::kCluster: {
            NodeId kl = g.cluster_kl(latent, state.centroids);
            return {kl, g.mean_all(kl)};
        }
        case Hypothesis::kCentroid: {
            NodeId sq = g.per_sample_sum(g.square(g.sub_vec(latent, g.parameter(state.center))));
            NodeId r2 = g.square(g.parameter(state.radius));
            NodeId hinge = g.relu(g.sub_scalar(sq, r2));
            return {hinge, g.add(g.mean_all(hinge), r2)};
        }
        case Hypothesis::kReconstruction: {
            // filled in by the caller, which owns the reconstruction nodes
            throw ContractError("reconstruction regularizer is built from the recon nodes");
        }
    }
    throw ContractError("unknown hypothesis");
}

}  // namespace

HypothesisState init_hypothesis_state(Hypothesis h, int latent_dim, const DetectorConfig& cfg) {
    HypothesisState s;
    s.kind = h;
    switch (h) {
        case Hypothesis::kDensity:
            s.phi = make_param("hyp/phi",
                               Tensor::full({cfg.mixture_k}, 1.0 / cfg.mixture_k), false);
            s.mu = make_param("hyp/mu", Tensor::zeros({cfg.mixture_k, latent_dim}), false);
            s.var = make_param("hyp/var", Tensor::full({cfg.mixture_k, latent_dim}, 1.0), false);
            break;
        case Hypothesis::kCluster:
            s.centroids =
                make_param("hyp/centroids", Tensor::zeros({cfg.cluster_j, latent_dim}), false);
            break;
        case Hypothesis::kCentroid:
            s.center = make_param("hyp/center", Tensor::zeros({latent_dim}), false);
            s.radius = make_param("hyp/radius", Tensor::full({1}, 1.0), false);
            s.center_accum = Tensor::zeros({latent_dim});
            break;
        case Hypothesis::kReconstruction:
            break;
    }
    return s;
}

ChildModel::ChildModel(const ModelSpec& spec, std::vector<int> input_shape, ParamStore& store,
                       DetectorConfig config)
    : spec_(spec), input_shape_(std::move(input_shape)), config_(config) {
    if (input_shape_.size() != 3) throw ContractError("input shape must be {C,H,W}");
    int n_layers = static_cast<int>(spec_.layers.size());
    int C0 = input_shape_[0], H0 = input_shape_[1], W0 = input_shape_[2];

    Graph& g = graph_;
    NodeId x = g.input("x", {1, C0, H0, W0});

    // encoder: ACT(NORM(POOL(CONV(x)))) per layer
    NodeId cur = x;
    int ch = C0, h = H0, w = W0;
    std::vector<std::pair<int, int>> pre_pool(static_cast<size_t>(n_layers));
    for (int i = 0; i < n_layers; ++i) {
        const LayerSpec& ls = spec_.layers[static_cast<size_t>(i)];
        ParamPtr cw = store.get_or_create(
            conv_key("enc", i, ch, ls.out_channels, ls.conv_kernel),
            {ls.out_channels, ch, ls.conv_kernel, ls.conv_kernel}, ParamStore::Init::kHeUniform,
            true, ch * ls.conv_kernel * ls.conv_kernel);
        ParamPtr cb = store.get_or_create(conv_key("enc", i, ch, ls.out_channels, ls.conv_kernel) +
                                              "/bias",
                                          {ls.out_channels}, ParamStore::Init::kZeros);
        cur = g.conv2d(cur, g.parameter(cw), g.parameter(cb), ls.conv_kernel);
        pre_pool[static_cast<size_t>(i)] = {h, w};
        if (ls.pool_kernel > 1) {
            if (h < 2 || w < 2)
                throw ShapeError("layer " + std::to_string(i + 1) + ": spatial size " +
                                 std::to_string(h) + "x" + std::to_string(w) +
                                 " collapses below 1x1 under pooling");
            cur = ls.pool_type == PoolType::kMax ? g.max_pool(cur, ls.pool_kernel)
                                                 : g.avg_pool(cur, ls.pool_kernel);
            h = kernels::pool_out_size(h, ls.pool_kernel);
            w = kernels::pool_out_size(w, ls.pool_kernel);
        }
        cur = apply_norm(g, store, "enc", i, ls.norm, ls.out_channels, cur);
        cur = apply_activation(g, ls.activation, cur);
        ch = ls.out_channels;
    }
    latent_dim_ = ch * h * w;
    NodeId latent = g.reshape(cur, {-1, latent_dim_});
    latent_node_ = latent;
    g.mark_output("latent", latent);

    // decoder mirrors the encoder: ACT(NORM(UPPOOL(DECONV(x))))
    for (int i = n_layers - 1; i >= 0; --i) {
        const LayerSpec& ls = spec_.layers[static_cast<size_t>(i)];
        int cin = ls.out_channels;
        int cout = i == 0 ? C0 : spec_.layers[static_cast<size_t>(i - 1)].out_channels;
        ParamPtr dw = store.get_or_create(
            conv_key("dec", i, cin, cout, ls.conv_kernel),
            {cin, cout, ls.conv_kernel, ls.conv_kernel}, ParamStore::Init::kHeUniform, true,
            cin * ls.conv_kernel * ls.conv_kernel);
        ParamPtr db = store.get_or_create(conv_key("dec", i, cin, cout, ls.conv_kernel) + "/bias",
                                          {cout}, ParamStore::Init::kZeros);
        cur = g.conv_t2d(cur, g.parameter(dw), g.parameter(db), ls.conv_kernel);
        if (ls.pool_kernel > 1) {
            auto [th, tw] = pre_pool[static_cast<size_t>(i)];
            cur = g.nn_unpool(cur, th, tw);
        }
        cur = apply_norm(g, store, "dec", i, ls.norm, cout, cur);
        cur = apply_activation(g, ls.activation, cur);
    }
    NodeId recon = cur;
    g.mark_output("recon", recon);

    DistNodes dist = build_distance(g, spec_.distance, x, recon);
    g.mark_output("dist_per_sample", dist.per_sample);
    g.mark_output("pixel_map", dist.per_pixel);
    NodeId dist_scalar = g.mean_all(dist.per_sample);
    g.mark_output("dist_scalar", dist_scalar);

    state_ = init_hypothesis_state(spec_.hypothesis, latent_dim_, config_);
    RegNodes reg;
    if (spec_.hypothesis == Hypothesis::kReconstruction) {
        NodeId sq = g.per_sample_sum(g.square(g.sub(x, recon)));
        reg = {sq, g.mean_all(sq)};
    } else {
        reg = build_regularizer(g, spec_.hypothesis, latent, state_);
    }
    g.mark_output("reg_per_sample", reg.per_sample);
    g.mark_output("reg_batch", reg.batch);

    NodeId score = g.add(dist.per_sample, g.scale(reg.per_sample, config_.lambda_reg));
    g.mark_output("score_per_sample", score);
    loss_node_ = g.add(dist_scalar, g.scale(reg.batch, config_.lambda_reg));
    g.mark_output("loss", loss_node_);

    for (const auto& p : g.params())
        if (p->requires_grad) trainables_.push_back(p);
}

ChildModel build(const ModelSpec& spec, std::vector<int> input_shape, ParamStore& store,
                 const DetectorConfig& config) {
    return ChildModel(spec, std::move(input_shape), store, config);
}

TensorMap ChildModel::forward(const Tensor& batch, bool training) {
    graph_.set_training(training);
    return graph_.forward({{"x", batch}});
}

ScoreMap ChildModel::score(const Tensor& batch) {
    TensorMap out = forward(batch, false);
    const Tensor& per_sample = out.at("score_per_sample");
    const Tensor& pix = out.at("pixel_map");
    for (double v : per_sample.data)
        if (!std::isfinite(v)) throw NumericError("non-finite anomaly score");
    ScoreMap sm;
    sm.per_sample.assign(per_sample.data.begin(), per_sample.data.end());
    int B = pix.shape[0], H = pix.shape[2], W = pix.shape[3];
    sm.per_pixel.reserve(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        Tensor m({H, W});
        std::copy(pix.data.begin() + static_cast<int64_t>(b) * H * W,
                  pix.data.begin() + static_cast<int64_t>(b + 1) * H * W, m.data.begin());
        sm.per_pixel.push_back(std::move(m));
    }
    return sm;
}

DistanceResult distance(Distance name, const Tensor& x, const Tensor& xhat) {
    if (x.shape != xhat.shape || x.rank() != 4)
        throw ContractError("distance: x and xhat must be matching [B,C,H,W] batches");
    if (name == Distance::kSsim) {
        for (double v : x.data)
            if (v < 0.0 || v > 1.0) throw ContractError("ssim distance expects x in [0,1]");
    }
    Graph g;
    NodeId xn = g.constant(x, "x");
    NodeId rn = g.constant(xhat, "xhat");
    DistNodes d = build_distance(g, name, xn, rn);
    NodeId scalar = g.mean_all(d.per_sample);
    DistanceResult res;
    res.scalar = g.eval(scalar)[0];
    res.per_sample = g.value(d.per_sample);
    const Tensor& pix = g.value(d.per_pixel);
    int B = pix.shape[0], H = pix.shape[2], W = pix.shape[3];
    for (int b = 0; b < B; ++b) {
        Tensor m({H, W});
        std::copy(pix.data.begin() + static_cast<int64_t>(b) * H * W,
                  pix.data.begin() + static_cast<int64_t>(b + 1) * H * W, m.data.begin());
        res.per_pixel.push_back(std::move(m));
    }
    return res;
}

std::pair<Tensor, double> regularizer(Hypothesis h, const Tensor& latent, HypothesisState& state,
                                      const DetectorConfig& config) {
    if (latent.rank() != 2) throw ContractError("regularizer: latent must be [B,D]");
    if (!latent.all_finite()) throw ContractError("regularizer: latent must be finite");
    if (h != Hypothesis::kReconstruction && !state.initialized)
        throw ContractError("regularizer: hypothesis state not initialized");
    (void)config;
    Graph g;
    NodeId z = g.constant(latent, "z");
    RegNodes reg;
    if (h == Hypothesis::kReconstruction) {
        // here Z is the per-sample flattened residual g(f(x)) - x
        NodeId sq = g.per_sample_sum(g.square(z));
        reg = {sq, g.mean_all(sq)};
    } else {
        reg = build_regularizer(g, h, z, state);
    }
    double batch = g.eval(reg.batch)[0];
    return {g.value(reg.per_sample), batch};
}

namespace {

double quantile_sorted(std::vector<double>& v, double q) {
    std::sort(v.begin(), v.end());
    double idx = q * static_cast<double>(v.size() - 1);
    size_t lo = static_cast<size_t>(std::floor(idx));
    size_t hi = static_cast<size_t>(std::ceil(idx));
    double w = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - w) + v[hi] * w;
}

// distinct row picks for component initialization
std::vector<int> pick_rows(int b, int k, Rng& rng) {
    std::vector<int> idx(static_cast<size_t>(b));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
        int j = i + rng.uniform_int(b - i);
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
}

void kmeans_iterations(const Tensor& z, Tensor& centroids, int iters) {
    int B = z.shape[0], D = z.shape[1], J = centroids.shape[0];
    std::vector<int> assign(static_cast<size_t>(B));
    for (int it = 0; it < iters; ++it) {
        for (int i = 0; i < B; ++i) {
            double best = 0.0;
            int bj = 0;
            for (int j = 0; j < J; ++j) {
                double d2 = 0.0;
                for (int d = 0; d < D; ++d) {
                    double diff = z[static_cast<int64_t>(i) * D + d] -
                                  centroids[static_cast<int64_t>(j) * D + d];
                    d2 += diff * diff;
                }
                if (j == 0 || d2 < best) {
                    best = d2;
                    bj = j;
                }
            }
            assign[static_cast<size_t>(i)] = bj;
        }
        for (int j = 0; j < J; ++j) {
            int cnt = 0;
            std::vector<double> mean(static_cast<size_t>(D), 0.0);
            for (int i = 0; i < B; ++i) {
                if (assign[static_cast<size_t>(i)] != j) continue;
                ++cnt;
                for (int d = 0; d < D; ++d) mean[static_cast<size_t>(d)] += z[static_cast<int64_t>(i) * D + d];
            }
            if (cnt == 0) continue;  // empty cluster keeps its centroid
            for (int d = 0; d < D; ++d)
                centroids[static_cast<int64_t>(j) * D + d] = mean[static_cast<size_t>(d)] / cnt;
        }
    }
}

}  // namespace

void update_state(Hypothesis h, const Tensor& latent, HypothesisState& state,
                  const DetectorConfig& cfg, bool epoch_start, Rng& rng) {
    if (latent.rank() != 2 || latent.shape[0] == 0)
        throw ContractError("update_state: latent batch must be non-empty [B,D]");
    int B = latent.shape[0], D = latent.shape[1];
    switch (h) {
        case Hypothesis::kReconstruction:
            state.initialized = true;
            return;
        case Hypothesis::kDensity: {
            int K = cfg.mixture_k;
            if (B < K) throw ContractError("update_state: batch smaller than mixture size");
            Tensor& phi = state.phi->value;
            Tensor& mu = state.mu->value;
            Tensor& var = state.var->value;
            if (!state.initialized) {
                // means at distinct batch rows, unit variances: EM starts
                // broad and tightens instead of overfitting the first batch
                auto rows = pick_rows(B, K, rng);
                for (int k = 0; k < K; ++k) {
                    phi[k] = 1.0 / K;
                    for (int d = 0; d < D; ++d) {
                        mu[static_cast<int64_t>(k) * D + d] =
                            latent[static_cast<int64_t>(rows[static_cast<size_t>(k)]) * D + d];
                        var[static_cast<int64_t>(k) * D + d] = 1.0;
                    }
                }
                state.initialized = true;
            }
            // one EM sweep
            Tensor energy, resp;
            kernels::gaussian_energy_forward(latent, phi, mu, var, energy, resp);
            for (int k = 0; k < K; ++k) {
                double nk = 0.0;
                for (int i = 0; i < B; ++i) nk += resp[static_cast<int64_t>(i) * K + k];
                if (nk < 1e-12) continue;  // starved component keeps its parameters
                phi[k] = nk / B;
                for (int d = 0; d < D; ++d) {
                    double m = 0.0;
                    for (int i = 0; i < B; ++i)
                        m += resp[static_cast<int64_t>(i) * K + k] *
                             latent[static_cast<int64_t>(i) * D + d];
                    m /= nk;
                    double v = 0.0;
                    for (int i = 0; i < B; ++i) {
                        double diff = latent[static_cast<int64_t>(i) * D + d] - m;
                        v += resp[static_cast<int64_t>(i) * K + k] * diff * diff;
                    }
                    mu[static_cast<int64_t>(k) * D + d] = m;
                    var[static_cast<int64_t>(k) * D + d] = std::max(v / nk, cfg.sigma_min);
                }
            }
            double phi_sum = 0.0;
            for (int k = 0; k < K; ++k) phi_sum += phi[k];
            for (int k = 0; k < K; ++k) phi[k] /= phi_sum;
            return;
        }
        case Hypothesis::kCluster: {
            int J = cfg.cluster_j;
            if (B < J) throw ContractError("update_state: batch smaller than centroid count");
            Tensor& cent = state.centroids->value;
            if (!state.initialized) {
                auto rows = pick_rows(B, J, rng);
                for (int j = 0; j < J; ++j)
                    for (int d = 0; d < D; ++d)
                        cent[static_cast<int64_t>(j) * D + d] =
                            latent[static_cast<int64_t>(rows[static_cast<size_t>(j)]) * D + d];
                kmeans_iterations(latent, cent, 5);
                state.initialized = true;
            } else if (epoch_start) {
                kmeans_iterations(latent, cent, 5);
            }
            return;
        }
        case Hypothesis::kCentroid: {
            Tensor& c = state.center->value;
            if (!state.center_fixed) {
                if (epoch_start && state.center_count > 0) {
                    // first epoch complete: c freezes at its running mean
                    state.center_fixed = true;
                } else {
                    for (int i = 0; i < B; ++i)
                        for (int d = 0; d < D; ++d)
                            state.center_accum[d] += latent[static_cast<int64_t>(i) * D + d];
                    state.center_count += B;
                    for (int d = 0; d < D; ++d)
                        c[d] = state.center_accum[d] / static_cast<double>(state.center_count);
                }
            }
            std::vector<double> dist(static_cast<size_t>(B));
            for (int i = 0; i < B; ++i) {
                double d2 = 0.0;
                for (int d = 0; d < D; ++d) {
                    double diff = latent[static_cast<int64_t>(i) * D + d] - c[d];
                    d2 += diff * diff;
                }
                dist[static_cast<size_t>(i)] = std::sqrt(d2);
            }
            state.radius->value[0] = quantile_sorted(dist, cfg.radius_quantile);
            state.initialized = true;
            return;
        }
    }
}

TrainResult train_child(ChildModel& model, const Dataset& train_data, int steps,
                        Optimizer& optimizer, int batch_size, Rng& rng, bool lr_drop_schedule) {
    TrainResult res;
    if (steps <= 0) return res;
    int n = train_data.size();
    if (n == 0) throw ContractError("train_child: empty training data");
    if (train_data.has_labels())
        for (int l : train_data.labels)
            if (l != 0) throw ContractError("train_child: training data must be outlier-free");

    batch_size = std::min(batch_size, n);
    int steps_per_epoch = (n + batch_size - 1) / batch_size;
    double base_lr = optimizer.learning_rate();

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    int cursor = n;  // forces a shuffle at step 0

    Graph& g = model.graph();
    g.set_training(true);
    NodeId latent_node = g.output_id("latent");
    NodeId loss_node = g.output_id("loss");

    for (int step = 0; step < steps; ++step) {
        bool epoch_start = step % steps_per_epoch == 0;
        if (lr_drop_schedule) {
            double lr = base_lr;
            if (step >= steps / 2) lr *= 0.1;
            if (step >= (3 * steps) / 4) lr *= 0.1;
            optimizer.set_learning_rate(lr);
        }
        std::vector<int> batch_idx;
        batch_idx.reserve(static_cast<size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i) {
            if (cursor >= n) {
                for (int j = n - 1; j > 0; --j) {
                    int k = rng.uniform_int(j + 1);
                    std::swap(order[static_cast<size_t>(j)], order[static_cast<size_t>(k)]);
                }
                cursor = 0;
            }
            batch_idx.push_back(order[static_cast<size_t>(cursor++)]);
        }
        Tensor batch = gather_samples(train_data, batch_idx);
        try {
            g.bind("x", std::move(batch));
            const Tensor& latent = g.eval(latent_node);
            update_state(model.spec().hypothesis, latent, model.state(), model.config(),
                         epoch_start, rng);
            double loss = g.eval(loss_node)[0];
            if (step == 0) res.first_loss = loss;
            res.final_loss = loss;
            if (!std::isfinite(loss) || loss > kDivergenceCeiling) {
                res.failed = true;
                res.failure = "loss diverged at step " + std::to_string(step);
                break;
            }
            Optimizer::zero_grad(model.trainable_params());
            g.backward(loss_node);
            optimizer.step(model.trainable_params());
            res.steps_run = step + 1;
        } catch (const NumericError& e) {
            res.failed = true;
            res.failure = e.what();
            break;
        }
    }
    optimizer.set_learning_rate(base_lr);
    return res;
}

void ChildModel::save(const std::string& path) const {
    CheckpointEntries entries;
    for (const auto& p : graph_.params()) entries.emplace_back(p->name, p->value);
    // batch-norm running statistics ride along under their layer names
    for (int i = 0; i < graph_.size(); ++i) {
        const Node& n = graph_.node(i);
        if (n.op == Op::kBatchNorm) {
            entries.emplace_back(n.state[0]->name, n.state[0]->value);
            entries.emplace_back(n.state[1]->name, n.state[1]->value);
        }
    }
    auto add_state = [&](const ParamPtr& p) {
        if (p) entries.emplace_back(p->name, p->value);
    };
    add_state(state_.phi);
    add_state(state_.mu);
    add_state(state_.var);
    add_state(state_.centroids);
    add_state(state_.center);
    add_state(state_.radius);
    entries.emplace_back("hyp/flags",
                         Tensor({2}, {state_.initialized ? 1.0 : 0.0,
                                      state_.center_fixed ? 1.0 : 0.0}));
    save_checkpoint(path, entries);
}

void ChildModel::load(const std::string& path) {
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : load_checkpoint(path)) by_name[name] = std::move(t);
    auto restore = [&](const ParamPtr& p) {
        if (!p) return;
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw FormatError("checkpoint missing entry '" + p->name + "'");
        if (it->second.shape != p->value.shape)
            throw FormatError("checkpoint entry '" + p->name + "' shape mismatch");
        p->value = it->second;
    };
    for (const auto& p : graph_.params()) restore(p);
    for (int i = 0; i < graph_.size(); ++i) {
        const Node& n = graph_.node(i);
        if (n.op == Op::kBatchNorm) {
            restore(n.state[0]);
            restore(n.state[1]);
        }
    }
    restore(state_.phi);
    restore(state_.mu);
    restore(state_.var);
    restore(state_.centroids);
    restore(state_.center);
    restore(state_.radius);
    auto it = by_name.find("hyp/flags");
    if (it != by_name.end()) {
        state_.initialized = it->second[0] != 0.0;
        state_.center_fixed = it->second[1] != 0.0;
    }
    graph_.invalidate();
}

}  // namespace autood
