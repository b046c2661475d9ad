#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "autood/metrics.hpp"
#include "autood/rng.hpp"

using namespace autood;

namespace {

// O(n^2) pairwise comparison oracle
double auroc_pairwise(const LabeledScoreSet& s) {
    double num = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i] == 0) continue;
        for (size_t j = 0; j < s.scores.size(); ++j) {
            if (s.labels[j] != 0) continue;
            ++pairs;
            if (s.scores[i] > s.scores[j]) num += 1.0;
            else if (s.scores[i] == s.scores[j]) num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

// exhaustive threshold-sweep oracle over all distinct score values
double aupr_sweep(const LabeledScoreSet& s, PositiveClass positive) {
    std::vector<std::pair<double, int>> pts;
    int64_t total_pos = 0;
    for (size_t i = 0; i < s.scores.size(); ++i) {
        bool is_pos = positive == PositiveClass::kOut ? s.labels[i] != 0 : s.labels[i] == 0;
        double sc = positive == PositiveClass::kOut ? s.scores[i] : -s.scores[i];
        pts.push_back({sc, is_pos});
        total_pos += is_pos;
    }
    std::vector<double> thresholds;
    for (auto& [sc, l] : pts) thresholds.push_back(sc);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double area = 0.0, prev_recall = 0.0;
    for (double tau : thresholds) {
        int64_t tp = 0, fp = 0;
        for (auto& [sc, l] : pts) {
            if (sc >= tau) {
                tp += l;
                fp += 1 - l;
            }
        }
        double recall = static_cast<double>(tp) / total_pos;
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

LabeledScoreSet random_set(Rng& rng, int n, bool with_ties) {
    LabeledScoreSet s;
    for (int i = 0; i < n; ++i) {
        double v = rng.uniform();
        if (with_ties && rng.uniform() < 0.25) v = std::round(v * 8.0) / 8.0;
        s.scores.push_back(v);
        s.labels.push_back(rng.uniform() < 0.3 ? 1 : 0);
    }
    // at least one of each class
    s.labels[0] = 1;
    s.labels[1] = 0;
    return s;
}

}  // namespace

TEST_CASE("auroc: perfect separation, ties, and contract errors") {
    CHECK(auroc({{0.9, 0.8, 0.1}, {1, 1, 0}}) == 1.0);
    CHECK(auroc({{0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}}) == 0.5);
    CHECK_THROWS_AS(auroc({{0.1, 0.2}, {1, 1}}), ContractError);
    CHECK_THROWS_AS(auroc({{0.1, 0.2}, {0, 0}}), ContractError);
}

TEST_CASE("auroc: equals the pairwise oracle on random instances") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        LabeledScoreSet s = random_set(rng, 200, trial % 2 == 0);
        CHECK(std::fabs(auroc(s) - auroc_pairwise(s)) < 1e-9);
    }
}

TEST_CASE("auroc: invariant under strictly increasing transforms") {
    Rng rng(9);
    LabeledScoreSet s = random_set(rng, 150, false);
    LabeledScoreSet t = s;
    for (auto& v : t.scores) v = std::exp(3.0 * v) + 5.0;
    CHECK(auroc(s) == doctest::Approx(auroc(t)).epsilon(1e-12));
}

TEST_CASE("auroc: complement identity for tie-free scores") {
    Rng rng(13);
    LabeledScoreSet s = random_set(rng, 151, false);
    LabeledScoreSet neg = s;
    for (auto& v : neg.scores) v = -v;
    CHECK(auroc(s) + auroc(neg) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("aupr: perfect separation and the all-ties constant-precision case") {
    CHECK(aupr({{0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}}, PositiveClass::kOut) == 1.0);
    // identical scores: single threshold, precision = positive fraction
    LabeledScoreSet s{{0.5, 0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 1, 0}};
    CHECK(aupr(s, PositiveClass::kOut) == doctest::Approx(0.4));
    CHECK(aupr(s, PositiveClass::kIn) == doctest::Approx(0.6));
}

TEST_CASE("aupr: equals the exhaustive threshold sweep on random instances") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        LabeledScoreSet s = random_set(rng, 200, trial % 2 == 0);
        CHECK(std::fabs(aupr(s, PositiveClass::kOut) - aupr_sweep(s, PositiveClass::kOut)) < 1e-9);
        CHECK(std::fabs(aupr(s, PositiveClass::kIn) - aupr_sweep(s, PositiveClass::kIn)) < 1e-9);
    }
}

TEST_CASE("aupr: the In variant equals Out with labels flipped and scores negated") {
    Rng rng(33);
    LabeledScoreSet s = random_set(rng, 180, false);
    LabeledScoreSet flipped = s;
    for (auto& v : flipped.scores) v = -v;
    for (auto& l : flipped.labels) l = 1 - l;
    CHECK(aupr(s, PositiveClass::kIn) ==
          doctest::Approx(aupr(flipped, PositiveClass::kOut)).epsilon(1e-12));
}

TEST_CASE("rpro: full coverage, disjoint prediction, and a hand-counted overlap") {
    // region scores high only inside the truth region: every threshold
    // recovers the region exactly (the positive fraction is small enough
    // that all quantile thresholds sit at the background level)
    Tensor mask({16, 16});
    for (int y = 4; y < 6; ++y)
        for (int x = 4; x < 5; ++x) mask[y * 16 + x] = 1.0;
    Tensor hit({16, 16});
    for (int64_t i = 0; i < hit.numel(); ++i) hit[i] = mask[i];
    CHECK(rpro({hit}, {mask}, 40) == 1.0);

    Tensor miss({16, 16});
    miss[0] = 1.0;
    miss[1] = 1.0;
    CHECK(rpro({miss}, {mask}, 40) == 0.0);

    // single 3x3 region with a prediction covering exactly 6 of its cells
    Tensor m2({8, 8}), s2({8, 8});
    for (int y = 2; y < 5; ++y)
        for (int x = 2; x < 5; ++x) m2[y * 8 + x] = 1.0;
    int covered = 0;
    for (int y = 2; y < 5; ++y)
        for (int x = 2; x < 5; ++x)
            if (covered++ < 6) s2[y * 8 + x] = 1.0;
    // one threshold (the median of pooled scores is background level 0)
    CHECK(rpro({s2}, {m2}, 1) == doctest::Approx(6.0 / 9.0));
}

TEST_CASE("rpro: monotone as the prediction grows toward the region") {
    Tensor mask({8, 8});
    for (int y = 1; y < 5; ++y)
        for (int x = 1; x < 5; ++x) mask[y * 8 + x] = 1.0;
    double prev = -1.0;
    for (int grow = 1; grow <= 4; ++grow) {
        Tensor s({8, 8});
        for (int y = 1; y < 1 + grow; ++y)
            for (int x = 1; x < 5; ++x) s[y * 8 + x] = 1.0;
        double v = rpro({s}, {mask}, 1);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("rpro: empty masks everywhere is a contract error") {
    Tensor mask({4, 4}), score({4, 4});
    CHECK_THROWS_AS(rpro({score}, {mask}, 10), ContractError);
}
