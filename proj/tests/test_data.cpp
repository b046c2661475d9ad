#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "autood/data.hpp"
#include "autood/detector.hpp"
#include "autood/optim.hpp"
#include "test_support.hpp"

using namespace autood;

TEST_CASE("synth_noise: gaussian clipping and bounds, deterministic seeds") {
    Dataset g = synth_noise(NoiseKind::kGaussian, 500, {1, 16, 16}, 42);
    double sum = 0.0;
    for (double v : g.samples.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
    }
    double mean = sum / static_cast<double>(g.samples.numel());
    CHECK(mean > 0.45);
    CHECK(mean < 0.55);

    Dataset u = synth_noise(NoiseKind::kUniform, 100, {1, 8, 8}, 1);
    auto [mn, mx] = std::minmax_element(u.samples.data.begin(), u.samples.data.end());
    CHECK(*mn >= 0.0);
    CHECK(*mx <= 1.0);

    Dataset a = synth_noise(NoiseKind::kGaussian, 20, {1, 8, 8}, 7);
    Dataset b = synth_noise(NoiseKind::kGaussian, 20, {1, 8, 8}, 7);
    CHECK(a.samples.data == b.samples.data);
}

TEST_CASE("make_indist: blobs have a unique intensity maximum per sample") {
    Dataset d = make_indist(InDistFamily::kBlobs, 40, {1, 16, 16}, 3);
    for (int i = 0; i < d.size(); ++i) {
        const double* img = d.samples.data.data() + static_cast<int64_t>(i) * 256;
        double best = *std::max_element(img, img + 256);
        CHECK(std::count(img, img + 256, best) == 1);
    }
}

TEST_CASE("make_indist: different seeds give different jitter") {
    Dataset a = make_indist(InDistFamily::kTextures, 10, {1, 12, 12}, 1);
    Dataset b = make_indist(InDistFamily::kTextures, 10, {1, 12, 12}, 2);
    CHECK(a.samples.data != b.samples.data);
}

TEST_CASE("make_indist: a small autoencoder reaches low reconstruction error" *
          doctest::timeout(120)) {
    Dataset blobs = make_indist(InDistFamily::kBlobs, 96, {1, 16, 16}, 5);
    ModelSpec spec;
    LayerSpec l1;
    l1.out_channels = 8;
    l1.conv_kernel = 3;
    l1.pool_type = PoolType::kAverage;
    l1.pool_kernel = 3;
    l1.norm = NormType::kNone;
    l1.activation = Activation::kRelu;
    LayerSpec l2 = l1;
    l2.out_channels = 16;
    l2.pool_kernel = 1;
    spec.layers = {l1, l2};
    spec.hypothesis = Hypothesis::kReconstruction;
    spec.distance = Distance::kL2;

    ParamStore store(11);
    ChildModel model = build(spec, {1, 16, 16}, store);
    Optimizer opt(OptKind::kAdam, 5e-3, 0.9);
    Rng rng(4);
    TrainResult tr = train_child(model, blobs, 500, opt, 16, rng);
    REQUIRE_FALSE(tr.failed);

    // per-pixel mean squared reconstruction error on the train split
    TensorMap out = model.forward(blobs.samples, false);
    const Tensor& recon = out.at("recon");
    double mse = 0.0;
    for (int64_t i = 0; i < recon.numel(); ++i) {
        double r = recon[i] - blobs.samples[i];
        mse += r * r;
    }
    mse /= static_cast<double>(recon.numel());
    CHECK(mse < 0.01);
}

TEST_CASE("plant_outliers: split sizes, label counts, no duplicated source index") {
    Dataset in = make_indist(InDistFamily::kBlobs, 1000, {1, 8, 8}, 9);
    Dataset out = synth_noise(NoiseKind::kUniform, 64, {1, 8, 8}, 10);
    SplitPlan plan;
    plan.seed = 77;
    Splits s = plant_outliers(in, out, plan);
    CHECK(s.train.size() == 600);
    CHECK(s.valid.size() == 200);
    CHECK(s.test.size() == 200);
    CHECK(s.train.labels.empty());
    CHECK(std::count(s.valid.labels.begin(), s.valid.labels.end(), 1) == 10);
    CHECK(std::count(s.test.labels.begin(), s.test.labels.end(), 1) == 10);

    // sample values are carried bit-exactly; each source row used at most once
    auto row_key = [&](const Dataset& d, int i) {
        auto shape = d.sample_shape();
        int64_t pl = static_cast<int64_t>(shape[0]) * shape[1] * shape[2];
        return std::vector<double>(d.samples.data.begin() + i * pl,
                                   d.samples.data.begin() + (i + 1) * pl);
    };
    std::set<std::vector<double>> sources;
    for (int i = 0; i < in.size(); ++i) sources.insert(row_key(in, i));
    for (int i = 0; i < out.size(); ++i) sources.insert(row_key(out, i));
    std::set<std::vector<double>> used;
    for (const Dataset* d : {&s.train, &s.valid, &s.test}) {
        for (int i = 0; i < d->size(); ++i) {
            auto key = row_key(*d, i);
            CHECK(sources.count(key) == 1);
            CHECK(used.insert(key).second);  // no duplicates across splits
        }
    }
}

TEST_CASE("plant_outliers: insufficient outliers is a contract error with counts") {
    Dataset in = make_indist(InDistFamily::kBlobs, 200, {1, 8, 8}, 9);
    Dataset out = synth_noise(NoiseKind::kUniform, 1, {1, 8, 8}, 10);
    SplitPlan plan;
    CHECK_THROWS_WITH_AS(plant_outliers(in, out, plan), doctest::Contains("need"),
                         ContractError);
}

TEST_CASE("synth_defects: masks and patch statistics") {
    Dataset d = synth_defects(40, {1, 16, 16}, 12);
    REQUIRE(d.masks.size() == 40);
    int defective = 0;
    for (int i = 0; i < d.size(); ++i) {
        const Tensor& m = d.masks[static_cast<size_t>(i)];
        double area = 0.0;
        for (double v : m.data) area += v;
        if (d.labels[static_cast<size_t>(i)] == 0) {
            CHECK(area == 0.0);
            continue;
        }
        ++defective;
        double frac = area / static_cast<double>(m.numel());
        CHECK(frac >= 0.04);
        CHECK(frac <= 0.15);
        // intensity shift inside the patch
        const double* img = d.samples.data.data() + static_cast<int64_t>(i) * 256;
        double in_sum = 0.0, out_sum = 0.0;
        for (int p = 0; p < 256; ++p) (m[p] != 0.0 ? in_sum : out_sum) += img[p];
        double diff = in_sum / area - out_sum / (256.0 - area);
        CHECK(std::fabs(diff) >= 0.2);
    }
    CHECK(defective == 20);
}

TEST_CASE("idx: hand-built fixture decodes to the expected values") {
    auto dir = testsup::scratch_dir("idx");
    auto path = (dir / "fixture.idx").string();
    {
        // magic 0x00000803, dims 2x2x2 big endian, payload 0..7 scaled
        std::ofstream os(path, std::ios::binary);
        const unsigned char bytes[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2,
                                       0, 0, 0, 2, 0, 51, 102, 153, 204, 255, 128, 64};
        os.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
    }
    Tensor t = load_idx(path);
    CHECK(t.shape == std::vector<int>{2, 2, 2});
    CHECK(t[0] == 0.0);
    CHECK(t[1] == doctest::Approx(51.0 / 255.0));
    CHECK(t[5] == 1.0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("idx: truncation reports the byte offset; round trip is identity") {
    auto dir = testsup::scratch_dir("idx2");
    auto path = (dir / "t.idx").string();
    Tensor t({3, 4, 4});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>((i * 7) % 256) / 255.0;
    save_idx(path, t);
    Tensor back = load_idx(path);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);

    std::filesystem::resize_file(path, 20);
    CHECK_THROWS_WITH_AS(load_idx(path), doctest::Contains("offset"), FormatError);

    std::ofstream os(path, std::ios::binary);
    const unsigned char bad[] = {0, 0, 9, 9, 0, 0, 0, 1};
    os.write(reinterpret_cast<const char*>(bad), sizeof(bad));
    os.close();
    CHECK_THROWS_WITH_AS(load_idx(path), doctest::Contains("magic"), FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("dataset persistence: samples, labels, and masks survive the manifest round trip") {
    auto dir = testsup::scratch_dir("ds");
    Dataset d = synth_defects(8, {1, 8, 8}, 3);
    // quantize to the u8 grid so the round trip is exact
    for (auto& v : d.samples.data) v = std::round(v * 255.0) / 255.0;
    save_dataset(dir.string(), "valid", d);
    Dataset back = load_dataset(dir.string(), "valid");
    CHECK(back.samples.shape == d.samples.shape);
    CHECK(back.samples.data == d.samples.data);
    CHECK(back.labels == d.labels);
    REQUIRE(back.masks.size() == d.masks.size());
    CHECK(back.masks[5].data == d.masks[5].data);
    std::filesystem::remove_all(dir);
}
