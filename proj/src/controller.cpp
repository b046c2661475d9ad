#include "autood/controller.hpp"

#include <algorithm>
#include <cmath>

#include "autood/checkpoint.hpp"

namespace autood {

namespace {

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace

double intrinsic_reward(double raw_reward, double kl_sharpen, double eta_explore) {
    if (eta_explore < 0.0) throw ContractError("intrinsic_reward: eta_explore must be >= 0");
    if (kl_sharpen < 0.0) throw ContractError("intrinsic_reward: kl_sharpen must be >= 0");
    return raw_reward + eta_explore * kl_sharpen;
}

Controller::Controller(std::vector<SlotVocabulary> vocab, ControllerConfig config, uint64_t seed)
    : vocab_(std::move(vocab)), config_(config) {
    if (vocab_.empty()) throw ContractError("controller needs a non-empty slot vocabulary");
    Rng rng(seed);
    int H = config_.hidden, E = config_.embed;
    add_weight("emb/start", {1, E}, rng);
    for (int t = 0; t + 1 < n_slots(); ++t)
        add_weight("emb/slot" + std::to_string(t),
                   {static_cast<int>(vocab_[static_cast<size_t>(t)].choices.size()), E}, rng);
    add_weight("lstm/l0/wx", {E, 4 * H}, rng);
    add_weight("lstm/l0/wh", {H, 4 * H}, rng);
    add_weight("lstm/l0/b", {4 * H}, rng);
    add_weight("lstm/l1/wx", {H, 4 * H}, rng);
    add_weight("lstm/l1/wh", {H, 4 * H}, rng);
    add_weight("lstm/l1/b", {4 * H}, rng);
    for (int t = 0; t < n_slots(); ++t) {
        int v = static_cast<int>(vocab_[static_cast<size_t>(t)].choices.size());
        add_weight("head/slot" + std::to_string(t) + "/w", {H, v}, rng);
        add_weight("head/slot" + std::to_string(t) + "/b", {v}, rng);
    }
}

void Controller::add_weight(const std::string& name, std::vector<int> shape, Rng& rng) {
    VarTensor vt;
    Tensor mu(shape);
    for (auto& v : mu.data) v = rng.uniform(-config_.init_range, config_.init_range);
    vt.mu = make_param("ctrl/mu/" + name, std::move(mu));
    vt.rho = make_param("ctrl/rho/" + name,
                        Tensor::full(shape, softplus_inverse(config_.sigma_init)));
    vt.eta = make_param("ctrl/eta/" + name, Tensor::full(shape, config_.eta_lr_init));
    weights_[name] = std::move(vt);
    weight_names_.push_back(name);
}

const Controller::VarTensor& Controller::var(const std::string& name) const {
    return weights_.at(name);
}

std::vector<ParamPtr> Controller::params() const {
    std::vector<ParamPtr> out;
    out.reserve(weight_names_.size() * 3);
    for (const auto& n : weight_names_) {
        const VarTensor& vt = weights_.at(n);
        out.push_back(vt.mu);
        out.push_back(vt.rho);
        out.push_back(vt.eta);
    }
    return out;
}

int64_t Controller::weight_count() const {
    int64_t n = 0;
    for (const auto& name : weight_names_) n += weights_.at(name).mu->value.numel();
    return n;
}

WeightMap Controller::sample_weights(Rng& rng, WeightMap* eps_out) const {
    WeightMap phi;
    for (const auto& name : weight_names_) {
        const VarTensor& vt = weights_.at(name);
        Tensor draw(vt.mu->value.shape);
        Tensor eps(vt.mu->value.shape);
        for (int64_t i = 0; i < draw.numel(); ++i) {
            double e = rng.normal();
            double sigma = std::log1p(std::exp(vt.rho->value[i]));
            eps[i] = e;
            draw[i] = vt.mu->value[i] + sigma * e;
        }
        if (eps_out) (*eps_out)[name] = std::move(eps);
        phi[name] = std::move(draw);
    }
    return phi;
}

WeightMap Controller::mean_weights() const {
    WeightMap out;
    for (const auto& name : weight_names_) out[name] = weights_.at(name).mu->value;
    return out;
}

SharpenResult Controller::sharpen(const WeightMap& phi, const WeightMap& data_grad,
                                  Rng& rng) const {
    SharpenResult res;
    for (const auto& [_, g] : data_grad) {
        if (!g.all_finite()) {
            res.skipped = true;
            break;
        }
    }
    double sp = config_.sigma_prior;
    double kl = 0.0;
    for (const auto& name : weight_names_) {
        const VarTensor& vt = weights_.at(name);
        const Tensor& p = phi.at(name);
        Tensor theta(p.shape);
        const Tensor* g = nullptr;
        if (!res.skipped) {
            auto it = data_grad.find(name);
            g = it == data_grad.end() ? nullptr : &it->second;
        }
        for (int64_t i = 0; i < theta.numel(); ++i) {
            double sigma = std::log1p(std::exp(vt.rho->value[i]));
            double shift = g ? vt.eta->value[i] * (*g)[i] : 0.0;
            if (res.skipped) {
                theta[i] = p[i];
            } else {
                theta[i] = p[i] - shift + sigma * rng.normal();
                kl += std::log(sp / sigma) + (sigma * sigma + shift * shift) / (2.0 * sp * sp) -
                      0.5;
            }
        }
        res.theta[name] = std::move(theta);
    }
    res.kl_sharpen = res.skipped ? 0.0 : kl;
    return res;
}

// --- rollout ----------------------------------------------------------------

Controller::Rollout Controller::unroll(Graph& g, const std::map<std::string, NodeId>& w, Rng* rng,
                                       const std::vector<Tensor>* init_hidden, bool greedy,
                                       const ActionSequence* forced) const {
    int H = config_.hidden;
    Rollout out;
    NodeId h0, c0, h1, c1;
    if (init_hidden) {
        if (init_hidden->size() != 4) throw ContractError("init hidden must be {h0,c0,h1,c1}");
        h0 = g.constant((*init_hidden)[0], "h0");
        c0 = g.constant((*init_hidden)[1], "c0");
        h1 = g.constant((*init_hidden)[2], "h1");
        c1 = g.constant((*init_hidden)[3], "c1");
    } else {
        h0 = g.constant(Tensor::zeros({1, H}), "h0");
        c0 = g.constant(Tensor::zeros({1, H}), "c0");
        h1 = g.constant(Tensor::zeros({1, H}), "h1");
        c1 = g.constant(Tensor::zeros({1, H}), "c1");
    }
    NodeId x = w.at("emb/start");
    for (int t = 0; t < n_slots(); ++t) {
        std::tie(h0, c0) = g.lstm_cell(x, h0, c0, w.at("lstm/l0/wx"), w.at("lstm/l0/wh"),
                                       w.at("lstm/l0/b"));
        std::tie(h1, c1) = g.lstm_cell(h0, h1, c1, w.at("lstm/l1/wx"), w.at("lstm/l1/wh"),
                                       w.at("lstm/l1/b"));
        std::string slot = std::to_string(t);
        NodeId raw = g.dense(h1, w.at("head/slot" + slot + "/w"), w.at("head/slot" + slot + "/b"));
        NodeId logits =
            g.scale(g.tanh(g.scale(raw, 1.0 / config_.temperature)), config_.tanh_constant);
        NodeId logp = g.log_softmax_rows(logits);
        const Tensor& lp = g.eval(logp);
        int v = static_cast<int>(vocab_[static_cast<size_t>(t)].choices.size());
        int action;
        if (forced) {
            action = forced->tokens[static_cast<size_t>(t)];
            if (action < 0 || action >= v)
                throw ContractError("forced action out of range at slot " + slot);
        } else if (greedy) {
            action = 0;
            for (int j = 1; j < v; ++j)
                if (lp[j] > lp[action]) action = j;
        } else {
            if (!rng) throw ContractError("sampling rollout needs an rng");
            double u = rng->uniform();
            double acc = 0.0;
            action = v - 1;
            for (int j = 0; j < v; ++j) {
                acc += std::exp(lp[j]);
                if (u < acc) {
                    action = j;
                    break;
                }
            }
        }
        out.actions.tokens.push_back(action);
        out.log_probs.push_back(lp[action]);
        out.logprob_nodes.push_back(g.pick_per_row(logp, {action}));
        if (t + 1 < n_slots()) x = g.gather_rows(w.at("emb/slot" + slot), {action});
    }
    out.final_hidden = {g.eval(h0), g.value(c0), g.value(h1), g.value(c1)};
    return out;
}

SampledPolicy Controller::sample_actions(const WeightMap& weights, Rng& rng,
                                         const std::vector<Tensor>* init_hidden,
                                         bool greedy) const {
    Graph g;
    std::map<std::string, NodeId> w;
    for (const auto& name : weight_names_) w[name] = g.constant(weights.at(name), name);
    Rollout r = unroll(g, w, &rng, init_hidden, greedy, nullptr);
    SampledPolicy pol;
    pol.actions = std::move(r.actions);
    pol.log_probs = std::move(r.log_probs);
    pol.final_hidden = std::move(r.final_hidden);
    return pol;
}

ActionSequence Controller::greedy_actions(const std::vector<Tensor>* init_hidden) const {
    Rng dummy(0);
    return sample_actions(mean_weights(), dummy, init_hidden, true).actions;
}

// --- differentiable weight nodes ---------------------------------------------

Controller::GraphWeights Controller::build_phi_nodes(Graph& g, const WeightMap& phi) const {
    GraphWeights out;
    for (const auto& name : weight_names_) {
        auto p = make_param(name, phi.at(name));
        out.nodes[name] = g.parameter(p);
    }
    return out;
}

Controller::GraphWeights Controller::build_theta_nodes(Graph& g, const WeightMap& eps,
                                                       const WeightMap& eps_prime,
                                                       const WeightMap& data_grad) const {
    GraphWeights out;
    double sp = config_.sigma_prior;
    NodeId kl_sharpen = -1, kl_prior = -1;
    for (const auto& name : weight_names_) {
        const VarTensor& vt = weights_.at(name);
        NodeId mu = g.parameter(vt.mu);
        NodeId sigma = g.softplus(g.parameter(vt.rho));
        NodeId eta = g.parameter(vt.eta);
        NodeId e = g.constant(eps.at(name), name + "/eps");
        NodeId e2 = g.constant(eps_prime.at(name), name + "/eps2");
        NodeId gd = g.constant(data_grad.at(name), name + "/grad");
        NodeId phi = g.add(mu, g.mul(sigma, e));
        NodeId shift = g.mul(eta, gd);
        NodeId theta = g.add(g.sub(phi, shift), g.mul(sigma, e2));
        out.nodes[name] = theta;

        // KL[q(theta|phi,D) || N(phi, sp^2 I)] elementwise closed form
        NodeId ks = g.sum_all(g.add_const(
            g.sub(g.scale(g.add(g.square(sigma), g.square(shift)), 0.5 / (sp * sp)),
                  g.log(sigma)),
            std::log(sp) - 0.5));
        // KL[q(phi) || N(0, I)]
        NodeId kp = g.sum_all(g.add_const(
            g.sub(g.scale(g.add(g.square(sigma), g.square(mu)), 0.5), g.log(sigma)), -0.5));
        kl_sharpen = kl_sharpen < 0 ? ks : g.add(kl_sharpen, ks);
        kl_prior = kl_prior < 0 ? kp : g.add(kl_prior, kp);
    }
    out.kl_sharpen = kl_sharpen;
    out.kl_prior = kl_prior;
    return out;
}

Episode Controller::sample_episode(Rng& rng, const std::vector<Tensor>* init_hidden) {
    // 1. phi ~ q(phi) with recorded noise
    WeightMap eps;
    WeightMap phi = sample_weights(rng, &eps);

    // 2. provisional rollout under phi is the experience minibatch; its
    //    log-likelihood gradient drives the sharpening shift
    WeightMap data_grad;
    {
        Graph gphi;
        GraphWeights w = build_phi_nodes(gphi, phi);
        Rollout prov = unroll(gphi, w.nodes, &rng, init_hidden, false, nullptr);
        NodeId nll = prov.logprob_nodes[0];
        for (size_t t = 1; t < prov.logprob_nodes.size(); ++t)
            nll = gphi.add(nll, prov.logprob_nodes[t]);
        nll = gphi.neg(nll);
        auto grads = gphi.backward(nll);
        for (const auto& name : weight_names_) {
            auto it = grads.find(name);
            data_grad[name] =
                it != grads.end() ? it->second : Tensor::zeros(weights_.at(name).mu->value.shape);
        }
    }
    bool grad_ok = true;
    for (const auto& [_, g] : data_grad)
        if (!g.all_finite()) grad_ok = false;
    if (!grad_ok)
        for (auto& [_, g] : data_grad) g.zero();  // sharpening skipped, theta = phi

    // 3. eps' for the sharpened draw
    WeightMap eps_prime;
    for (const auto& name : weight_names_) {
        Tensor e(weights_.at(name).mu->value.shape);
        if (grad_ok)
            for (auto& v : e.data) v = rng.normal();
        eps_prime[name] = std::move(e);
    }

    // 4. episode rollout under theta, retained for the update
    Episode ep;
    GraphWeights w = build_theta_nodes(ep.graph, eps, eps_prime, data_grad);
    Rollout roll = unroll(ep.graph, w.nodes, &rng, init_hidden, false, nullptr);
    NodeId sum = roll.logprob_nodes[0];
    for (size_t t = 1; t < roll.logprob_nodes.size(); ++t)
        sum = ep.graph.add(sum, roll.logprob_nodes[t]);
    ep.logprob_sum = sum;
    ep.kl_sharpen_node = w.kl_sharpen;
    ep.kl_prior_node = w.kl_prior;
    ep.policy.actions = std::move(roll.actions);
    ep.policy.log_probs = std::move(roll.log_probs);
    ep.policy.final_hidden = std::move(roll.final_hidden);
    ep.policy.kl_sharpen = grad_ok ? ep.graph.eval(ep.kl_sharpen_node)[0] : 0.0;
    if (!grad_ok) ep.graph.eval(ep.kl_sharpen_node);
    return ep;
}

Episode Controller::replay_episode(const ActionSequence& actions, Rng& rng) {
    if (static_cast<int>(actions.tokens.size()) != n_slots())
        throw ContractError("replay_episode: action length mismatch");
    WeightMap eps;
    sample_weights(rng, &eps);  // draw noise only; phi rebuilt in-graph

    Episode ep;
    GraphWeights w;
    {  // phi nodes with gradients to mu/rho; no sharpening for replays
        for (const auto& name : weight_names_) {
            const VarTensor& vt = weights_.at(name);
            NodeId mu = ep.graph.parameter(vt.mu);
            NodeId sigma = ep.graph.softplus(ep.graph.parameter(vt.rho));
            NodeId e = ep.graph.constant(eps.at(name), name + "/eps");
            w.nodes[name] = ep.graph.add(mu, ep.graph.mul(sigma, e));
        }
    }
    Rollout roll = unroll(ep.graph, w.nodes, nullptr, nullptr, false, &actions);
    NodeId sum = roll.logprob_nodes[0];
    for (size_t t = 1; t < roll.logprob_nodes.size(); ++t)
        sum = ep.graph.add(sum, roll.logprob_nodes[t]);
    ep.logprob_sum = sum;
    ep.policy.actions = actions;
    ep.policy.log_probs = std::move(roll.log_probs);
    ep.policy.final_hidden = std::move(roll.final_hidden);
    return ep;
}

NodeId Controller::variational_loss_node(Episode& ep, int truncation_c) const {
    if (truncation_c < 1) throw ContractError("variational loss: C must be >= 1");
    if (ep.kl_sharpen_node < 0 || ep.kl_prior_node < 0)
        throw ContractError("variational loss: episode lacks KL nodes");
    Graph& g = ep.graph;
    return g.add(g.neg(ep.logprob_sum),
                 g.add(ep.kl_sharpen_node,
                       g.scale(ep.kl_prior_node, 1.0 / static_cast<double>(truncation_c))));
}

double Controller::variational_loss(Episode& ep, int truncation_c) const {
    NodeId id = variational_loss_node(ep, truncation_c);
    return ep.graph.eval(id)[0];
}

void Controller::save(const std::string& path) const {
    CheckpointEntries entries;
    for (const auto& name : weight_names_) {
        const VarTensor& vt = weights_.at(name);
        entries.emplace_back(vt.mu->name, vt.mu->value);
        entries.emplace_back(vt.rho->name, vt.rho->value);
        entries.emplace_back(vt.eta->name, vt.eta->value);
    }
    save_checkpoint(path, entries);
}

void Controller::load(const std::string& path) {
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : load_checkpoint(path)) by_name[name] = std::move(t);
    for (const auto& name : weight_names_) {
        VarTensor& vt = weights_.at(name);
        for (ParamPtr p : {vt.mu, vt.rho, vt.eta}) {
            auto it = by_name.find(p->name);
            if (it == by_name.end())
                throw FormatError("controller checkpoint missing '" + p->name + "'");
            if (it->second.shape != p->value.shape)
                throw FormatError("controller checkpoint entry '" + p->name + "' shape mismatch");
            p->value = it->second;
        }
    }
}

}  // namespace autood
