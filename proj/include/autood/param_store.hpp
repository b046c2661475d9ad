#pragma once

#include <map>
#include <string>
#include <vector>

#include "autood/graph.hpp"

namespace autood {

// Shared parameter pool for all child models. Keys carry the operator
// signature (role, layer, channels, kernel); a key's tensor shape never
// changes once created. Initialization is a pure function of (store seed,
// key), so creation order does not matter for reproducibility.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    enum class Init { kHeUniform, kZeros, kOnes };

    ParamPtr get_or_create(const std::string& key, const std::vector<int>& shape, Init init,
                           bool requires_grad = true, int fan_in = 0);
    bool contains(const std::string& key) const { return params_.count(key) != 0; }
    ParamPtr get(const std::string& key) const;
    std::vector<std::string> keys() const;
    size_t size() const { return params_.size(); }
    uint64_t seed() const { return seed_; }

    // deep copy for isolated parallel evaluation
    ParamStore clone() const;
    // overwrite local values with the other store's (creating as needed)
    void merge_from(const ParamStore& other);

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    uint64_t seed_;
    std::map<std::string, ParamPtr> params_;
};

}  // namespace autood
