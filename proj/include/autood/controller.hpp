#pragma once

#include <map>
#include <string>
#include <vector>

#include "autood/graph.hpp"
#include "autood/rng.hpp"
#include "autood/search_space.hpp"

namespace autood {

struct ControllerConfig {
    int hidden = 50;             // two-layer LSTM, 50 units each
    int embed = 50;
    double temperature = 5.0;
    double tanh_constant = 2.5;
    double sigma_prior = 0.1;    // p(theta|phi) = N(phi, sigma_prior^2 I)
    double sigma_init = 0.05;
    double eta_lr_init = 1e-2;   // per-parameter sharpening rate
    double init_range = 0.1;     // mu ~ U[-0.1, 0.1]
};

using WeightMap = std::map<std::string, Tensor>;

// A concrete weight draw for an episode.
struct SampledPolicy {
    ActionSequence actions;
    std::vector<double> log_probs;      // chosen-action log prob per slot
    double kl_sharpen = 0.0;            // KL[q(theta|phi,D) || p(theta|phi)]
    std::vector<Tensor> final_hidden;   // h0,c0,h1,c1 after the last slot
};

// One sampled episode with its retained computation graph, so the policy
// gradient and the variational terms can be backpropagated later. The
// noises, the provisional-action data gradient, and the chosen actions
// are baked in as constants; only mu/rho/eta receive gradients.
struct Episode {
    Graph graph;
    SampledPolicy policy;
    NodeId logprob_sum = -1;    // sum_t log pi_theta(a_t), shape [1]
    NodeId kl_sharpen_node = -1;
    NodeId kl_prior_node = -1;  // KL[q(phi) || p(phi)], p(phi)=N(0,1)
};

struct SharpenResult {
    WeightMap theta;
    double kl_sharpen = 0.0;
    bool skipped = false;  // non-finite data gradient
};

// Two-layer recurrent policy over the action slots with a Gaussian
// variational posterior per weight (mean mu, scale sigma = softplus(rho))
// and a learned per-parameter sharpening rate eta.
class Controller {
public:
    Controller(std::vector<SlotVocabulary> vocab, ControllerConfig config, uint64_t seed);

    const ControllerConfig& config() const { return config_; }
    const std::vector<SlotVocabulary>& vocab() const { return vocab_; }
    int n_slots() const { return static_cast<int>(vocab_.size()); }

    // every variational parameter tensor (mu, rho, eta for each weight)
    std::vector<ParamPtr> params() const;
    int64_t weight_count() const;  // total elements across weight tensors

    // phi = mu + sigma * eps, reparameterized draw; eps is returned so a
    // graph pass can rebuild phi differentiably
    WeightMap sample_weights(Rng& rng, WeightMap* eps_out = nullptr) const;
    WeightMap mean_weights() const;  // the sigma -> 0 limit

    // theta = (phi - eta*data_grad) + sigma*eps'; closed-form diagonal KL.
    // A non-finite gradient skips sharpening: theta = phi, KL = 0.
    SharpenResult sharpen(const WeightMap& phi, const WeightMap& data_grad, Rng& rng) const;

    // roll out the policy with concrete weights; samples from
    // softmax(tanh_constant * tanh(head/temperature)) per slot
    SampledPolicy sample_actions(const WeightMap& weights, Rng& rng,
                                 const std::vector<Tensor>* init_hidden = nullptr,
                                 bool greedy = false) const;
    ActionSequence greedy_actions(const std::vector<Tensor>* init_hidden = nullptr) const;

    // full episode: draw phi, compute the sharpening gradient from a
    // provisional rollout under phi, then roll out under theta inside a
    // retained graph with all stochastic quantities frozen
    Episode sample_episode(Rng& rng, const std::vector<Tensor>* init_hidden = nullptr);

    // -log p(D|theta) + KL[q(theta|phi,D)||p(theta|phi)] + KL[q(phi)||p(phi)]/C
    NodeId variational_loss_node(Episode& ep, int truncation_c) const;
    double variational_loss(Episode& ep, int truncation_c) const;

    // log-likelihood of a fixed action sequence under a fresh phi draw,
    // as a retained graph (used by the self-imitation update)
    Episode replay_episode(const ActionSequence& actions, Rng& rng);

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    struct VarTensor {
        ParamPtr mu, rho, eta;
    };
    const VarTensor& var(const std::string& name) const;
    void add_weight(const std::string& name, std::vector<int> shape, Rng& rng);

    // differentiable weight nodes for a graph pass; fills phi/theta nodes
    struct GraphWeights {
        std::map<std::string, NodeId> nodes;
        NodeId kl_sharpen = -1;
        NodeId kl_prior = -1;
    };
    GraphWeights build_theta_nodes(Graph& g, const WeightMap& eps, const WeightMap& eps_prime,
                                   const WeightMap& data_grad) const;
    GraphWeights build_phi_nodes(Graph& g, const WeightMap& phi) const;

    struct Rollout {
        ActionSequence actions;
        std::vector<double> log_probs;
        std::vector<NodeId> logprob_nodes;
        std::vector<Tensor> final_hidden;
    };
    Rollout unroll(Graph& g, const std::map<std::string, NodeId>& w, Rng* rng,
                   const std::vector<Tensor>* init_hidden, bool greedy,
                   const ActionSequence* forced) const;

    std::vector<SlotVocabulary> vocab_;
    ControllerConfig config_;
    std::vector<std::string> weight_names_;  // stable order
    std::map<std::string, VarTensor> weights_;
};

// r_new = r + eta_explore * kl_sharpen
double intrinsic_reward(double raw_reward, double kl_sharpen, double eta_explore);

}  // namespace autood
