#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "autood/data.hpp"
#include "autood/graph.hpp"
#include "autood/optim.hpp"
#include "autood/param_store.hpp"
#include "autood/rng.hpp"
#include "autood/search_space.hpp"

namespace autood {

struct DetectorConfig {
    double lambda_reg = 0.1;   // weight of DEFINEREG against DIST
    int mixture_k = 4;         // density components
    int cluster_j = 4;         // cluster centroids
    double sigma_min = 1e-3;   // covariance floor
    double radius_quantile = 0.9;
};

// Estimated quantities behind the definition-hypothesis regularizers.
// The tensors live in Params referenced by the child graph, so updates
// take effect on the next forward without rebuilding.
struct HypothesisState {
    Hypothesis kind = Hypothesis::kReconstruction;
    bool initialized = false;

    ParamPtr phi, mu, var;   // density: [K], [K,D], [K,D]
    ParamPtr centroids;      // cluster: [J,D]
    ParamPtr center, radius; // centroid: [D], [1]

    // centroid bookkeeping: c freezes to the first epoch's mean latent
    Tensor center_accum;
    int64_t center_count = 0;
    bool center_fixed = false;
};

struct ScoreMap {
    std::vector<double> per_sample;
    std::vector<Tensor> per_pixel;  // [H,W], aligned with per_sample
};

struct DistanceResult {
    double scalar = 0.0;          // batch mean of per-sample distances
    Tensor per_sample;            // [B]
    std::vector<Tensor> per_pixel;
};

struct TrainResult {
    bool failed = false;
    std::string failure;
    double first_loss = 0.0;
    double final_loss = 0.0;
    int steps_run = 0;
};

// An instantiated encoder-decoder with parameters bound to a shared
// store. Graph outputs: recon, latent, dist_per_sample, dist_scalar,
// pixel_map, reg_per_sample, reg_batch, score_per_sample, loss.
class ChildModel {
public:
    ChildModel(const ModelSpec& spec, std::vector<int> input_shape, ParamStore& store,
               DetectorConfig config);

    const ModelSpec& spec() const { return spec_; }
    const std::vector<int>& input_shape() const { return input_shape_; }
    const DetectorConfig& config() const { return config_; }
    Graph& graph() { return graph_; }
    HypothesisState& state() { return state_; }
    const std::vector<ParamPtr>& trainable_params() const { return trainables_; }
    int latent_dim() const { return latent_dim_; }

    // forward the batch and return the marked outputs
    TensorMap forward(const Tensor& batch, bool training);

    // anomaly scores in eval mode: per-sample DIST + lambda*DEFINEREG and
    // the per-pixel distance residual
    ScoreMap score(const Tensor& batch);

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    friend TrainResult train_child(ChildModel&, const Dataset&, int, Optimizer&, int, Rng&, bool);
    ModelSpec spec_;
    std::vector<int> input_shape_;
    DetectorConfig config_;
    Graph graph_;
    HypothesisState state_;
    std::vector<ParamPtr> trainables_;
    int latent_dim_ = 0;
    NodeId latent_node_ = -1;
    NodeId loss_node_ = -1;
};

ChildModel build(const ModelSpec& spec, std::vector<int> input_shape, ParamStore& store,
                 const DetectorConfig& config = {});

// standalone distance between two batches [B,C,H,W]
DistanceResult distance(Distance name, const Tensor& x, const Tensor& xhat);

// standalone regularizer on a latent batch [B,D]; state must be initialized.
// For the reconstruction hypothesis, pass the flattened per-sample residual
// g(f(x)) - x as Z (the child graph computes it from its own recon nodes).
std::pair<Tensor, double> regularizer(Hypothesis h, const Tensor& latent, HypothesisState& state,
                                      const DetectorConfig& config = {});

// refresh hypothesis state from a latent batch; epoch_start drives the
// cluster refresh and the end-of-first-epoch centroid freeze
void update_state(Hypothesis h, const Tensor& latent, HypothesisState& state,
                  const DetectorConfig& config, bool epoch_start, Rng& rng);

HypothesisState init_hypothesis_state(Hypothesis h, int latent_dim, const DetectorConfig& config);

// minibatch training against the shared store; a non-finite or exploding
// loss marks the child failed instead of aborting the run
TrainResult train_child(ChildModel& model, const Dataset& train_data, int steps,
                        Optimizer& optimizer, int batch_size, Rng& rng,
                        bool lr_drop_schedule = true);

}  // namespace autood
