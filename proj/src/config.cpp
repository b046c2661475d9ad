#include "autood/config.hpp"

#include <fstream>

#include <json.hpp>

namespace autood {

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
    auto positive = [](double v, const char* what) {
        if (v <= 0) throw ConfigError(std::string(what) + " must be positive");
    };
    positive(dataset.n, "dataset.n");
    if (dataset.shape.size() != 3) throw ConfigError("dataset.shape must be {C,H,W}");
    for (int d : dataset.shape) positive(d, "dataset.shape entries");
    if (dataset.contamination <= 0 || dataset.contamination >= 0.5)
        throw ConfigError("dataset.contamination must be in (0, 0.5)");
    if (dataset.family != "blobs" && dataset.family != "textures" && dataset.family != "defects")
        throw ConfigError("dataset.family must be blobs, textures, or defects");
    positive(layers_n, "layers_n");
    positive(epochs, "epochs");
    positive(children_per_step, "children_per_step");
    positive(candidates_m, "candidates_m");
    positive(top_k, "top_k");
    if (top_k > candidates_m) throw ConfigError("top_k must be <= candidates_m");
    if (sil_batch < 0) throw ConfigError("sil_batch must be >= 0");
    if (eta_explore < 0) throw ConfigError("eta_explore must be >= 0");
    if (lambda_reg < 0) throw ConfigError("lambda_reg must be >= 0");
    positive(buffer_capacity, "buffer_capacity");
    if (child_budget_steps < 0) throw ConfigError("child_budget_steps must be >= 0");
    positive(child_batch, "child_batch");
    positive(child_lr, "child_lr");
    if (child_optimizer != "adam" && child_optimizer != "sgd-momentum")
        throw ConfigError("child_optimizer must be adam or sgd-momentum");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0,1)");
    positive(controller_lr, "controller_lr");
    positive(hidden, "hidden");
    positive(embed, "embed");
    positive(temperature, "temperature");
    positive(tanh_constant, "tanh_constant");
    positive(sigma_prior, "sigma_prior");
    positive(sigma_init, "sigma_init");
    if (baseline_decay < 0 || baseline_decay >= 1)
        throw ConfigError("baseline_decay must be in [0,1)");
    if (reward_metric != "auroc" && reward_metric != "aupr_in" && reward_metric != "aupr_out" &&
        reward_metric != "rpro")
        throw ConfigError("reward_metric must be auroc, aupr_in, aupr_out, or rpro");
    positive(mixture_k, "mixture_k");
    positive(cluster_j, "cluster_j");
    positive(sigma_min, "sigma_min");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (eval_max_samples < 0) throw ConfigError("eval_max_samples must be >= 0");
}

std::string RunConfig::to_json() const {
    nlohmann::json j;
    j["dataset"] = {{"family", dataset.family},
                    {"n", dataset.n},
                    {"shape", dataset.shape},
                    {"contamination", dataset.contamination},
                    {"seed", dataset.seed}};
    j["layers_n"] = layers_n;
    j["epochs"] = epochs;
    j["children_per_step"] = children_per_step;
    j["candidates_m"] = candidates_m;
    j["top_k"] = top_k;
    j["sil_batch"] = sil_batch;
    j["eta_explore"] = eta_explore;
    j["lambda_reg"] = lambda_reg;
    j["buffer_capacity"] = buffer_capacity;
    j["child_budget_steps"] = child_budget_steps;
    j["child_batch"] = child_batch;
    j["child_lr"] = child_lr;
    j["child_optimizer"] = child_optimizer;
    j["momentum"] = momentum;
    j["child_lr_drop"] = child_lr_drop;
    j["controller_lr"] = controller_lr;
    j["hidden"] = hidden;
    j["embed"] = embed;
    j["temperature"] = temperature;
    j["tanh_constant"] = tanh_constant;
    j["sigma_prior"] = sigma_prior;
    j["sigma_init"] = sigma_init;
    j["eta_lr_init"] = eta_lr_init;
    j["baseline_decay"] = baseline_decay;
    j["reward_metric"] = reward_metric;
    j["mixture_k"] = mixture_k;
    j["cluster_j"] = cluster_j;
    j["sigma_min"] = sigma_min;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["workers"] = workers;
    j["eval_max_samples"] = eval_max_samples;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig c;
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            read_key(d, "family", c.dataset.family);
            read_key(d, "n", c.dataset.n);
            read_key(d, "shape", c.dataset.shape);
            read_key(d, "contamination", c.dataset.contamination);
            read_key(d, "seed", c.dataset.seed);
        }
        read_key(j, "layers_n", c.layers_n);
        read_key(j, "epochs", c.epochs);
        read_key(j, "children_per_step", c.children_per_step);
        read_key(j, "candidates_m", c.candidates_m);
        read_key(j, "top_k", c.top_k);
        read_key(j, "sil_batch", c.sil_batch);
        read_key(j, "eta_explore", c.eta_explore);
        read_key(j, "lambda_reg", c.lambda_reg);
        read_key(j, "buffer_capacity", c.buffer_capacity);
        read_key(j, "child_budget_steps", c.child_budget_steps);
        read_key(j, "child_batch", c.child_batch);
        read_key(j, "child_lr", c.child_lr);
        read_key(j, "child_optimizer", c.child_optimizer);
        read_key(j, "momentum", c.momentum);
        read_key(j, "child_lr_drop", c.child_lr_drop);
        read_key(j, "controller_lr", c.controller_lr);
        read_key(j, "hidden", c.hidden);
        read_key(j, "embed", c.embed);
        read_key(j, "temperature", c.temperature);
        read_key(j, "tanh_constant", c.tanh_constant);
        read_key(j, "sigma_prior", c.sigma_prior);
        read_key(j, "sigma_init", c.sigma_init);
        read_key(j, "eta_lr_init", c.eta_lr_init);
        read_key(j, "baseline_decay", c.baseline_decay);
        read_key(j, "reward_metric", c.reward_metric);
        read_key(j, "mixture_k", c.mixture_k);
        read_key(j, "cluster_j", c.cluster_j);
        read_key(j, "sigma_min", c.sigma_min);
        read_key(j, "seed", c.seed);
        read_key(j, "out_dir", c.out_dir);
        read_key(j, "workers", c.workers);
        read_key(j, "eval_max_samples", c.eval_max_samples);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void RunConfig::write(const std::string& path) const {
    std::ofstream os(path);
    os << to_json() << "\n";
    if (!os) throw ConfigError("failed to write config echo to '" + path + "'");
}

}  // namespace autood
