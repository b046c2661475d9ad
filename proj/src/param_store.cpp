#include "autood/param_store.hpp"

#include <cmath>

#include "autood/checkpoint.hpp"
#include "autood/rng.hpp"

namespace autood {

ParamPtr ParamStore::get_or_create(const std::string& key, const std::vector<int>& shape,
                                   Init init, bool requires_grad, int fan_in) {
    auto it = params_.find(key);
    if (it != params_.end()) {
        if (it->second->value.shape != shape)
            throw ContractError("param store key '" + key + "' reused with shape " +
                                shape_to_string(shape) + " != " +
                                it->second->value.shape_str());
        return it->second;
    }
    Tensor t(shape);
    switch (init) {
        case Init::kZeros:
            break;
        case Init::kOnes:
            t.fill(1.0);
            break;
        case Init::kHeUniform: {
            if (fan_in <= 0) throw ContractError("he-uniform init needs fan_in");
            Rng rng(Rng::mix(seed_, Rng::hash_str(key)));
            double limit = std::sqrt(6.0 / fan_in);
            for (auto& v : t.data) v = rng.uniform(-limit, limit);
            break;
        }
    }
    auto p = make_param(key, std::move(t), requires_grad);
    params_[key] = p;
    return p;
}

ParamPtr ParamStore::get(const std::string& key) const {
    auto it = params_.find(key);
    if (it == params_.end()) throw ContractError("param store has no key '" + key + "'");
    return it->second;
}

std::vector<std::string> ParamStore::keys() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, _] : params_) out.push_back(k);
    return out;
}

ParamStore ParamStore::clone() const {
    ParamStore copy(seed_);
    for (const auto& [k, p] : params_) {
        auto q = make_param(p->name, p->value, p->requires_grad);
        copy.params_[k] = q;
    }
    return copy;
}

void ParamStore::merge_from(const ParamStore& other) {
    for (const auto& [k, p] : other.params_) {
        auto it = params_.find(k);
        if (it == params_.end()) {
            params_[k] = make_param(p->name, p->value, p->requires_grad);
        } else {
            it->second->value = p->value;
        }
    }
}

void ParamStore::save(const std::string& path) const {
    CheckpointEntries entries;
    for (const auto& [k, p] : params_) entries.emplace_back(k, p->value);
    save_checkpoint(path, entries);
}

void ParamStore::load(const std::string& path) {
    for (auto& [name, t] : load_checkpoint(path)) {
        auto it = params_.find(name);
        if (it == params_.end()) {
            params_[name] = make_param(name, std::move(t), true);
        } else {
            if (it->second->value.shape != t.shape)
                throw FormatError("checkpoint entry '" + name + "' has shape " + t.shape_str() +
                                  ", store expects " + it->second->value.shape_str());
            it->second->value = std::move(t);
        }
    }
}

}  // namespace autood
