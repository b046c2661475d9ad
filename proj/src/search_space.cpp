#include "autood/search_space.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace autood {

namespace {

// listing orders follow the paper's bullet list; do not reorder
const std::vector<std::string> kHypotheses = {"density", "cluster", "centroid", "reconstruction"};
const std::vector<std::string> kDistances = {"l1", "l2", "l21", "ssim"};
const std::vector<int> kChannels = {3, 8, 16, 32, 64, 128, 256};
const std::vector<int> kKernels = {1, 3, 5, 7};
const std::vector<std::string> kPoolTypes = {"max", "average"};
const std::vector<std::string> kNorms = {"batch", "instance", "none"};
const std::vector<std::string> kActivations = {"sigmoid", "tanh",      "relu",  "linear",
                                               "softplus", "leakyrelu", "relu6", "elu"};

std::vector<std::string> int_choices(const std::vector<int>& v) {
    std::vector<std::string> out;
    out.reserve(v.size());
    for (int x : v) out.push_back(std::to_string(x));
    return out;
}

int index_of_int(const std::vector<int>& v, int x, const char* what) {
    auto it = std::find(v.begin(), v.end(), x);
    if (it == v.end())
        throw ContractError(std::string("encode: ") + what + " value " + std::to_string(x) +
                            " not in vocabulary");
    return static_cast<int>(it - v.begin());
}

int index_of_str(const std::vector<std::string>& v, const std::string& x, const char* what) {
    auto it = std::find(v.begin(), v.end(), x);
    if (it == v.end())
        throw ContractError(std::string("'") + x + "' is not a valid " + what);
    return static_cast<int>(it - v.begin());
}

int take_token(const ActionSequence& a, int slot, int vocab_size) {
    int t = a.tokens[static_cast<size_t>(slot)];
    if (t < 0 || t >= vocab_size)
        throw ContractError("decode: token " + std::to_string(t) + " out of range at slot " +
                            std::to_string(slot));
    return t;
}

}  // namespace

const std::vector<std::string>& hypothesis_names() { return kHypotheses; }
const std::vector<std::string>& distance_names() { return kDistances; }
const std::vector<int>& channel_choices() { return kChannels; }
const std::vector<int>& kernel_choices() { return kKernels; }
const std::vector<std::string>& pool_type_names() { return kPoolTypes; }
const std::vector<std::string>& norm_type_names() { return kNorms; }
const std::vector<std::string>& activation_names() { return kActivations; }

std::vector<SlotVocabulary> vocabularies(int n_layers) {
    if (n_layers < 1) throw ContractError("vocabularies: N must be >= 1");
    std::vector<SlotVocabulary> slots;
    slots.reserve(static_cast<size_t>(6 * n_layers + 2));
    auto add = [&](const std::string& name, std::vector<std::string> choices) {
        SlotVocabulary v;
        v.slot_id = static_cast<int>(slots.size());
        v.name = name;
        v.choices = std::move(choices);
        slots.push_back(std::move(v));
    };
    add("definition-hypothesis", kHypotheses);
    add("distance", kDistances);
    for (int l = 0; l < n_layers; ++l) {
        add("output-channel", int_choices(kChannels));
        add("conv-kernel", int_choices(kKernels));
        add("pool-type", kPoolTypes);
        add("pool-kernel", int_choices(kKernels));
        add("norm-type", kNorms);
        add("activation", kActivations);
    }
    return slots;
}

ModelSpec decode(const ActionSequence& a) {
    int len = static_cast<int>(a.tokens.size());
    if (len < 8 || (len - 2) % 6 != 0)
        throw ContractError("decode: sequence length " + std::to_string(len) +
                            " is not 6N+2 with N >= 1");
    int n_layers = (len - 2) / 6;
    ModelSpec spec;
    spec.hypothesis = static_cast<Hypothesis>(take_token(a, 0, 4));
    spec.distance = static_cast<Distance>(take_token(a, 1, 4));
    spec.layers.resize(static_cast<size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l) {
        LayerSpec& ls = spec.layers[static_cast<size_t>(l)];
        int base = 2 + 6 * l;
        ls.out_channels = kChannels[static_cast<size_t>(take_token(a, base + 0, 7))];
        ls.conv_kernel = kKernels[static_cast<size_t>(take_token(a, base + 1, 4))];
        ls.pool_type = static_cast<PoolType>(take_token(a, base + 2, 2));
        ls.pool_kernel = kKernels[static_cast<size_t>(take_token(a, base + 3, 4))];
        ls.norm = static_cast<NormType>(take_token(a, base + 4, 3));
        ls.activation = static_cast<Activation>(take_token(a, base + 5, 8));
    }
    return spec;
}

ActionSequence encode(const ModelSpec& spec) {
    if (spec.layers.empty()) throw ContractError("encode: spec needs at least one layer");
    ActionSequence a;
    a.tokens.reserve(6 * spec.layers.size() + 2);
    a.tokens.push_back(static_cast<int>(spec.hypothesis));
    a.tokens.push_back(static_cast<int>(spec.distance));
    for (const LayerSpec& ls : spec.layers) {
        a.tokens.push_back(index_of_int(kChannels, ls.out_channels, "output-channel"));
        a.tokens.push_back(index_of_int(kKernels, ls.conv_kernel, "conv-kernel"));
        a.tokens.push_back(static_cast<int>(ls.pool_type));
        a.tokens.push_back(index_of_int(kKernels, ls.pool_kernel, "pool-kernel"));
        a.tokens.push_back(static_cast<int>(ls.norm));
        a.tokens.push_back(static_cast<int>(ls.activation));
    }
    return a;
}

std::string cardinality(int n_layers) {
    if (n_layers < 1) throw ContractError("cardinality: N must be >= 1");
    // little-endian base-1e9 bignum; each value fits comfortably in u64
    std::vector<uint64_t> digits = {16};
    auto mul_small = [&](uint64_t f) {
        uint64_t carry = 0;
        for (auto& d : digits) {
            uint64_t v = d * f + carry;
            d = v % 1000000000ULL;
            carry = v / 1000000000ULL;
        }
        while (carry) {
            digits.push_back(carry % 1000000000ULL);
            carry /= 1000000000ULL;
        }
    };
    for (int i = 0; i < n_layers; ++i) mul_small(5376);
    std::string out = std::to_string(digits.back());
    for (int i = static_cast<int>(digits.size()) - 2; i >= 0; --i) {
        std::string part = std::to_string(digits[static_cast<size_t>(i)]);
        out += std::string(9 - part.size(), '0') + part;
    }
    return out;
}

double cardinality_approx(int n_layers) {
    return 16.0 * std::pow(5376.0, static_cast<double>(n_layers));
}

// --- JSON form --------------------------------------------------------------

std::string ModelSpec::to_json() const {
    nlohmann::json j;
    j["hypothesis"] = kHypotheses[static_cast<size_t>(hypothesis)];
    j["distance"] = kDistances[static_cast<size_t>(distance)];
    j["layers"] = nlohmann::json::array();
    for (const LayerSpec& ls : layers) {
        nlohmann::json l;
        l["out_channels"] = ls.out_channels;
        l["conv_kernel"] = ls.conv_kernel;
        l["pool_type"] = kPoolTypes[static_cast<size_t>(ls.pool_type)];
        l["pool_kernel"] = ls.pool_kernel;
        l["norm"] = kNorms[static_cast<size_t>(ls.norm)];
        l["activation"] = kActivations[static_cast<size_t>(ls.activation)];
        j["layers"].push_back(std::move(l));
    }
    return j.dump(2);
}

ModelSpec ModelSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model spec: ") + e.what());
    }
    ModelSpec spec;
    try {
        spec.hypothesis = static_cast<Hypothesis>(
            index_of_str(kHypotheses, j.at("hypothesis").get<std::string>(), "hypothesis"));
        spec.distance = static_cast<Distance>(
            index_of_str(kDistances, j.at("distance").get<std::string>(), "distance"));
        for (const auto& l : j.at("layers")) {
            LayerSpec ls;
            ls.out_channels = l.at("out_channels").get<int>();
            ls.conv_kernel = l.at("conv_kernel").get<int>();
            ls.pool_type = static_cast<PoolType>(
                index_of_str(kPoolTypes, l.at("pool_type").get<std::string>(), "pool type"));
            ls.pool_kernel = l.at("pool_kernel").get<int>();
            ls.norm = static_cast<NormType>(
                index_of_str(kNorms, l.at("norm").get<std::string>(), "norm type"));
            ls.activation = static_cast<Activation>(
                index_of_str(kActivations, l.at("activation").get<std::string>(), "activation"));
            index_of_int(kChannels, ls.out_channels, "output-channel");
            index_of_int(kKernels, ls.conv_kernel, "conv-kernel");
            index_of_int(kKernels, ls.pool_kernel, "pool-kernel");
            spec.layers.push_back(ls);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model spec: ") + e.what());
    }
    if (spec.layers.empty()) throw FormatError("model spec: needs at least one layer");
    return spec;
}

}  // namespace autood
