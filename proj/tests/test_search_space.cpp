#include <doctest.h>

#include <fstream>
#include <sstream>

#include "autood/rng.hpp"
#include "autood/search_space.hpp"

using namespace autood;

TEST_CASE("search space: slot counts and vocabulary sizes") {
    auto v1 = vocabularies(1);
    REQUIRE(v1.size() == 8);
    std::vector<int> sizes;
    for (const auto& s : v1) sizes.push_back(static_cast<int>(s.choices.size()));
    CHECK(sizes == std::vector<int>{4, 4, 7, 4, 2, 4, 3, 8});
    CHECK(vocabularies(2).size() == 14);
    CHECK(vocabularies(6).size() == 38);
    CHECK_THROWS_AS(vocabularies(0), ContractError);
}

TEST_CASE("search space: all-zero tokens decode to the first choice of each slot") {
    ModelSpec spec = decode(ActionSequence{{0, 0, 0, 0, 0, 0, 0, 0}});
    CHECK(spec.hypothesis == Hypothesis::kDensity);
    CHECK(spec.distance == Distance::kL1);
    REQUIRE(spec.layers.size() == 1);
    CHECK(spec.layers[0].out_channels == 3);
    CHECK(spec.layers[0].conv_kernel == 1);
    CHECK(spec.layers[0].pool_type == PoolType::kMax);
    CHECK(spec.layers[0].pool_kernel == 1);
    CHECK(spec.layers[0].norm == NormType::kBatch);
    CHECK(spec.layers[0].activation == Activation::kSigmoid);
}

TEST_CASE("search space: encode/decode bijection on random sequences") {
    Rng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 1 + rng.uniform_int(4);
        auto vocab = vocabularies(n);
        ActionSequence a;
        for (const auto& slot : vocab)
            a.tokens.push_back(rng.uniform_int(static_cast<int>(slot.choices.size())));
        ModelSpec spec = decode(a);
        CHECK(encode(spec) == a);
        CHECK(decode(encode(spec)) == spec);
    }
}

TEST_CASE("search space: out-of-range token reports the slot index") {
    ActionSequence a{{0, 0, 9, 0, 0, 0, 0, 0}};
    CHECK_THROWS_WITH_AS(decode(a), doctest::Contains("slot 2"), ContractError);
}

TEST_CASE("search space: the published MNIST architecture round-trips") {
    // reconstruction + l1; 32c 5x5 / 8c 3x3 / 8c 7x7 with average pooling
    ActionSequence mnist{{3, 0, 3, 2, 1, 0, 2, 2, 1, 1, 1, 0, 2, 7, 1, 3, 1, 2, 2, 6}};
    ModelSpec spec = decode(mnist);
    CHECK(spec.hypothesis == Hypothesis::kReconstruction);
    CHECK(spec.distance == Distance::kL1);
    REQUIRE(spec.layers.size() == 3);
    CHECK(spec.layers[0].out_channels == 32);
    CHECK(spec.layers[0].conv_kernel == 5);
    CHECK(spec.layers[0].pool_type == PoolType::kAverage);
    CHECK(spec.layers[0].activation == Activation::kRelu);
    CHECK(spec.layers[1].out_channels == 8);
    CHECK(spec.layers[1].activation == Activation::kElu);
    CHECK(spec.layers[2].conv_kernel == 7);
    CHECK(spec.layers[2].pool_kernel == 5);
    CHECK(spec.layers[2].activation == Activation::kRelu6);
    CHECK(encode(spec) == mnist);
}

TEST_CASE("search space: cardinality is exact and vocabulary sizes multiply to it") {
    CHECK(cardinality(1) == "86016");
    CHECK(cardinality(2) == "462422016");

    // oracle: unsigned-128 multiplication for N = 6
    unsigned __int128 expect = 16;
    for (int i = 0; i < 6; ++i) expect *= 5376;
    std::string expect_str;
    while (expect > 0) {
        expect_str.insert(expect_str.begin(), static_cast<char>('0' + static_cast<int>(expect % 10)));
        expect /= 10;
    }
    CHECK(cardinality(6) == expect_str);
    // rounds to the published 3.9e+23
    CHECK(cardinality_approx(6) / 1e23 == doctest::Approx(3.9).epsilon(0.02));

    // product of slot sizes equals cardinality for small N
    for (int n = 1; n <= 3; ++n) {
        double prod = 1.0;
        for (const auto& s : vocabularies(n)) prod *= static_cast<double>(s.choices.size());
        CHECK(prod == doctest::Approx(cardinality_approx(n)).epsilon(1e-12));
    }
}

TEST_CASE("search space: canonical slot order matches the golden file") {
    std::ifstream golden(std::string(AUTOOD_SOURCE_DIR) + "/tests/fixtures/slot_order_n3.txt");
    REQUIRE(golden.good());
    std::ostringstream current;
    for (const auto& s : vocabularies(3)) {
        current << s.slot_id << " " << s.name;
        for (const auto& c : s.choices) current << " " << c;
        current << "\n";
    }
    std::stringstream want;
    want << golden.rdbuf();
    CHECK(current.str() == want.str());
}

TEST_CASE("search space: model spec JSON uses lowercase vocabulary tokens") {
    ModelSpec spec = decode(ActionSequence{{2, 3, 4, 1, 1, 2, 1, 5}});
    std::string j = spec.to_json();
    CHECK(j.find("\"centroid\"") != std::string::npos);
    CHECK(j.find("\"ssim\"") != std::string::npos);
    CHECK(j.find("\"instance\"") != std::string::npos);
    CHECK(j.find("\"leakyrelu\"") != std::string::npos);
    CHECK(ModelSpec::from_json(j) == spec);
    CHECK_THROWS_AS(ModelSpec::from_json("{\"hypothesis\":\"densitee\"}"), Error);
}
