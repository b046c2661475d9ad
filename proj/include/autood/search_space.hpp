#pragma once

#include <string>
#include <vector>

#include "autood/errors.hpp"

namespace autood {

// The model tuple has 2 global slots followed by 6 slots per layer, in
// the fixed order below. Slot ordering and the ordering of each
// vocabulary are part of the external contract: controller heads and
// token indices are positional.
enum class Hypothesis { kDensity, kCluster, kCentroid, kReconstruction };
enum class Distance { kL1, kL2, kL21, kSsim };
enum class PoolType { kMax, kAverage };
enum class NormType { kBatch, kInstance, kNone };
enum class Activation { kSigmoid, kTanh, kRelu, kLinear, kSoftplus, kLeakyRelu, kRelu6, kElu };

const std::vector<std::string>& hypothesis_names();
const std::vector<std::string>& distance_names();
const std::vector<int>& channel_choices();
const std::vector<int>& kernel_choices();
const std::vector<std::string>& pool_type_names();
const std::vector<std::string>& norm_type_names();
const std::vector<std::string>& activation_names();

struct LayerSpec {
    int out_channels = 3;
    int conv_kernel = 1;
    PoolType pool_type = PoolType::kMax;
    int pool_kernel = 1;
    NormType norm = NormType::kBatch;
    Activation activation = Activation::kSigmoid;

    bool operator==(const LayerSpec&) const = default;
};

// A decoded point of the search space: global settings plus the per-layer
// encoder settings. The decoder mirrors the encoder layer by layer.
struct ModelSpec {
    Hypothesis hypothesis = Hypothesis::kDensity;
    Distance distance = Distance::kL1;
    std::vector<LayerSpec> layers;

    bool operator==(const ModelSpec&) const = default;

    std::string to_json() const;
    static ModelSpec from_json(const std::string& text);
};

struct ActionSequence {
    std::vector<int> tokens;

    bool operator==(const ActionSequence&) const = default;
};

struct SlotVocabulary {
    int slot_id = 0;
    std::string name;  // one of the 8 action classes
    std::vector<std::string> choices;
};

// The 6N+2 slots in canonical order. Stable across calls and runs.
std::vector<SlotVocabulary> vocabularies(int n_layers);

ModelSpec decode(const ActionSequence& actions);
ActionSequence encode(const ModelSpec& spec);

// 4*4*(7*4*2*4*3*8)^N = 16*5376^N, exactly, as a decimal string.
std::string cardinality(int n_layers);
double cardinality_approx(int n_layers);

}  // namespace autood
