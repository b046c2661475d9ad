#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autood/errors.hpp"

namespace autood {

struct DatasetConfig {
    std::string family = "blobs";  // blobs | textures | defects
    int n = 1000;
    std::vector<int> shape = {1, 16, 16};
    double contamination = 0.05;
    uint64_t seed = 1;
};

// Every experiment constant has a key; defaults follow the paper's setup
// (controller lr 3.5e-4, two-layer LSTM with 50 units, buffer 10,
// temperature 5, tanh constant 2.5, child batch 64, momentum 0.9,
// 500 epochs).
struct RunConfig {
    DatasetConfig dataset;

    int layers_n = 3;
    int epochs = 500;
    int children_per_step = 5;  // n in the policy-gradient batch
    int candidates_m = 10;      // M candidates per iteration
    int top_k = 3;              // K hidden states carried
    int sil_batch = 5;          // replay minibatch per imitation sweep

    double eta_explore = 0.01;
    double lambda_reg = 0.1;
    int buffer_capacity = 10;

    int child_budget_steps = 30;
    int child_batch = 64;
    double child_lr = 5e-3;
    std::string child_optimizer = "adam";
    double momentum = 0.9;
    bool child_lr_drop = true;  // x0.1 at 50% and 75% of the budget

    double controller_lr = 3.5e-4;
    int hidden = 50;
    int embed = 50;
    double temperature = 5.0;
    double tanh_constant = 2.5;
    double sigma_prior = 0.1;
    double sigma_init = 0.05;
    double eta_lr_init = 1e-2;
    double baseline_decay = 0.95;

    std::string reward_metric = "auroc";  // auroc | aupr_in | aupr_out | rpro
    int mixture_k = 4;
    int cluster_j = 4;
    double sigma_min = 1e-3;

    uint64_t seed = 0;
    std::string out_dir = "out";
    int workers = 1;
    int eval_max_samples = 0;  // 0 = whole validation split

    void validate() const;
    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig from_file(const std::string& path);
    void write(const std::string& path) const;
};

}  // namespace autood
