#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "autood/checkpoint.hpp"
#include "autood/data.hpp"
#include "autood/detector.hpp"
#include "autood/grad_check.hpp"
#include "autood/optim.hpp"
#include "test_support.hpp"

using namespace autood;
using testsup::randn;

namespace {

ModelSpec simple_spec(Hypothesis h, Distance d, int channels = 8, int pool_kernel = 3) {
    ModelSpec spec;
    spec.hypothesis = h;
    spec.distance = d;
    LayerSpec l;
    l.out_channels = channels;
    l.conv_kernel = 3;
    l.pool_type = PoolType::kAverage;
    l.pool_kernel = pool_kernel;
    l.norm = NormType::kNone;
    l.activation = Activation::kRelu;
    spec.layers = {l};
    return spec;
}

}  // namespace

TEST_CASE("build: two builds of the same spec share parameter objects") {
    ParamStore store(1);
    ModelSpec spec = simple_spec(Hypothesis::kReconstruction, Distance::kL2);
    ChildModel a = build(spec, {1, 12, 12}, store);
    size_t n_keys = store.size();
    ChildModel b = build(spec, {1, 12, 12}, store);
    CHECK(store.size() == n_keys);
    REQUIRE(a.trainable_params().size() == b.trainable_params().size());
    for (size_t i = 0; i < a.trainable_params().size(); ++i)
        CHECK(a.trainable_params()[i].get() == b.trainable_params()[i].get());
}

TEST_CASE("build: specs differing only in activation share conv parameters") {
    ParamStore store(1);
    ModelSpec s1 = simple_spec(Hypothesis::kReconstruction, Distance::kL1);
    ModelSpec s2 = s1;
    s2.layers[0].activation = Activation::kTanh;
    ChildModel a = build(s1, {1, 12, 12}, store);
    ChildModel b = build(s2, {1, 12, 12}, store);
    CHECK(a.trainable_params()[0].get() == b.trainable_params()[0].get());
}

TEST_CASE("build: pool kernels of 1 preserve the latent spatial size") {
    ParamStore store(2);
    ModelSpec spec;
    spec.hypothesis = Hypothesis::kReconstruction;
    spec.distance = Distance::kL2;
    for (int i = 0; i < 3; ++i) {
        LayerSpec l;
        l.out_channels = 8;
        l.conv_kernel = 3;
        l.pool_kernel = 1;
        l.norm = NormType::kNone;
        l.activation = Activation::kTanh;
        spec.layers.push_back(l);
    }
    ChildModel m = build(spec, {1, 16, 16}, store);
    CHECK(m.latent_dim() == 8 * 16 * 16);
}

TEST_CASE("build: spatial collapse names the offending layer") {
    ParamStore store(3);
    ModelSpec spec;
    spec.hypothesis = Hypothesis::kReconstruction;
    spec.distance = Distance::kL2;
    for (int i = 0; i < 5; ++i) {
        LayerSpec l;
        l.out_channels = 3;
        l.conv_kernel = 1;
        l.pool_kernel = 3;  // halves every layer: 16,8,4,2,1 -> layer 5 fails
        l.norm = NormType::kNone;
        l.activation = Activation::kLinear;
        spec.layers.push_back(l);
    }
    CHECK_THROWS_WITH_AS(build(spec, {1, 16, 16}, store), doctest::Contains("layer 5"),
                         ShapeError);
}

TEST_CASE("distance: identical inputs give zero under all four metrics") {
    Rng rng(5);
    Tensor x = testsup::rand01(rng, {2, 1, 8, 8});
    for (Distance d : {Distance::kL1, Distance::kL2, Distance::kL21, Distance::kSsim}) {
        DistanceResult r = distance(d, x, x);
        CHECK(r.scalar == doctest::Approx(0.0).epsilon(1e-15));
        for (double v : r.per_sample.data) CHECK(v == doctest::Approx(0.0));
    }
}

TEST_CASE("distance: l21 treats pixel channel vectors as rows") {
    // two pixels with channel vectors (3,4) and (0,0): norm sum = 5
    Tensor x({1, 2, 1, 2}, {3, 0, 4, 0});
    Tensor xhat = Tensor::zeros({1, 2, 1, 2});
    DistanceResult r = distance(Distance::kL21, x, xhat);
    CHECK(r.scalar == doctest::Approx(5.0));
    CHECK(r.per_pixel[0][0] == doctest::Approx(5.0));
    CHECK(r.per_pixel[0][1] == doctest::Approx(0.0));
}

TEST_CASE("distance: l2 equals the naive summation oracle") {
    Rng rng(6);
    Tensor x = testsup::rand01(rng, {3, 2, 8, 8});
    Tensor y = testsup::rand01(rng, {3, 2, 8, 8});
    DistanceResult r = distance(Distance::kL2, x, y);
    for (int b = 0; b < 3; ++b) {
        double ss = 0.0;
        for (int64_t i = 0; i < 128; ++i) {
            double d = x[b * 128 + i] - y[b * 128 + i];
            ss += d * d;
        }
        CHECK(std::fabs(r.per_sample[b] - std::sqrt(ss)) < 1e-12);
    }
}

TEST_CASE("distance: shape mismatch and ssim range are contract errors") {
    Tensor a = Tensor::zeros({1, 1, 4, 4});
    Tensor b = Tensor::zeros({1, 1, 4, 5});
    CHECK_THROWS_AS(distance(Distance::kL1, a, b), ContractError);
    Tensor big = Tensor::full({1, 1, 4, 4}, 2.0);
    CHECK_THROWS_AS(distance(Distance::kSsim, big, a), ContractError);
}

TEST_CASE("regularizer: density with a single matched component") {
    int d = 6;
    DetectorConfig cfg;
    cfg.mixture_k = 1;
    HypothesisState st = init_hypothesis_state(Hypothesis::kDensity, d, cfg);
    Tensor z = Tensor::zeros({3, d});
    st.phi->value[0] = 1.0;
    st.mu->value.zero();
    st.var->value.fill(1.0);
    st.initialized = true;
    auto [per_sample, batch] = regularizer(Hypothesis::kDensity, z, st, cfg);
    double want = 0.5 * d * std::log(2.0 * M_PI);
    for (double v : per_sample.data) CHECK(v == doctest::Approx(want).epsilon(1e-12));
    CHECK(batch == doctest::Approx(want));
}

TEST_CASE("regularizer: centroid hinge vanishes inside the sphere") {
    DetectorConfig cfg;
    HypothesisState st = init_hypothesis_state(Hypothesis::kCentroid, 4, cfg);
    st.center->value.zero();
    st.radius->value[0] = 2.0;
    st.initialized = true;
    Tensor z = Tensor::full({5, 4}, 0.5);  // ||z||^2 = 1 < R^2 = 4
    auto [per_sample, batch] = regularizer(Hypothesis::kCentroid, z, st, cfg);
    for (double v : per_sample.data) CHECK(v == 0.0);
    CHECK(batch == doctest::Approx(4.0));  // R^2 with the hinge inactive
}

TEST_CASE("regularizer: single-centroid cluster assignment is degenerate, KL = 0") {
    DetectorConfig cfg;
    cfg.cluster_j = 1;
    HypothesisState st = init_hypothesis_state(Hypothesis::kCluster, 3, cfg);
    st.centroids->value.fill(0.3);
    st.initialized = true;
    Rng rng(3);
    Tensor z = randn(rng, {6, 3});
    auto [per_sample, batch] = regularizer(Hypothesis::kCluster, z, st, cfg);
    for (double v : per_sample.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(batch == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("regularizer: uninitialized state is a contract error") {
    DetectorConfig cfg;
    HypothesisState st = init_hypothesis_state(Hypothesis::kDensity, 3, cfg);
    Tensor z = Tensor::zeros({4, 3});
    CHECK_THROWS_AS(regularizer(Hypothesis::kDensity, z, st, cfg), ContractError);
}

TEST_CASE("regularizer: non-negativity (density bounded by the sanity floor)") {
    Rng rng(8);
    DetectorConfig cfg;
    Tensor z = randn(rng, {12, 6}, 1.5);
    for (Hypothesis h :
         {Hypothesis::kDensity, Hypothesis::kCluster, Hypothesis::kCentroid}) {
        HypothesisState st = init_hypothesis_state(h, 6, cfg);
        update_state(h, z, st, cfg, true, rng);
        auto [per_sample, batch] = regularizer(h, z, st, cfg);
        for (double v : per_sample.data) {
            if (h == Hypothesis::kDensity) {
                CHECK(v >= -1e3);
            } else {
                CHECK(v >= 0.0);
            }
        }
        (void)batch;
    }
    // reconstruction regularizer on residuals is a sum of squares
    HypothesisState rst = init_hypothesis_state(Hypothesis::kReconstruction, 6, cfg);
    rst.initialized = true;
    auto [rs, rb] = regularizer(Hypothesis::kReconstruction, z, rst, cfg);
    for (double v : rs.data) CHECK(v >= 0.0);
    CHECK(rb >= 0.0);
}

TEST_CASE("regularizer: gradients with respect to the latent pass finite differences") {
    Rng rng(19);
    DetectorConfig cfg;
    cfg.mixture_k = 2;
    cfg.cluster_j = 2;
    Tensor zt = randn(rng, {6, 4});
    for (Hypothesis h :
         {Hypothesis::kDensity, Hypothesis::kCluster, Hypothesis::kCentroid,
          Hypothesis::kReconstruction}) {
        HypothesisState st = init_hypothesis_state(h, 4, cfg);
        if (h != Hypothesis::kReconstruction) update_state(h, zt, st, cfg, true, rng);
        Graph g;
        auto z = make_param("z", zt);
        NodeId zn = g.parameter(z);
        NodeId per_sample = -1;
        switch (h) {
            case Hypothesis::kDensity:
                per_sample = g.gaussian_energy(zn, st.phi, st.mu, st.var);
                break;
            case Hypothesis::kCluster: {
                per_sample = g.cluster_kl(zn, st.centroids);
                const_cast<Node&>(g.node(per_sample)).i0 = 1;  // freeze the target for FD
                g.eval(per_sample);
                break;
            }
            case Hypothesis::kCentroid: {
                NodeId sq = g.per_sample_sum(g.square(g.sub_vec(zn, g.parameter(st.center))));
                per_sample = g.relu(g.sub_scalar(sq, g.square(g.parameter(st.radius))));
                break;
            }
            case Hypothesis::kReconstruction:
                per_sample = g.per_sample_sum(g.square(zn));
                break;
        }
        NodeId loss = g.sum_all(g.mul(per_sample, g.constant(randn(rng, {6}, 1.0))));
        CHECK(grad_check(g, loss, {z}, 1e-5) < 1e-4);
    }
}

TEST_CASE("update_state: EM finds two well-separated blobs") {
    Rng rng(31);
    DetectorConfig cfg;
    cfg.mixture_k = 2;
    Tensor z({60, 2});
    for (int i = 0; i < 60; ++i) {
        double cx = i < 30 ? -3.0 : 3.0;
        z[i * 2] = cx + 0.05 * rng.normal();
        z[i * 2 + 1] = cx + 0.05 * rng.normal();
    }
    HypothesisState st = init_hypothesis_state(Hypothesis::kDensity, 2, cfg);
    for (int sweep = 0; sweep < 10; ++sweep)
        update_state(Hypothesis::kDensity, z, st, cfg, sweep == 0, rng);
    // each blob center matched by one component
    auto close_to = [&](double cx) {
        for (int k = 0; k < 2; ++k) {
            double dx = st.mu->value[k * 2] - cx;
            double dy = st.mu->value[k * 2 + 1] - cx;
            if (std::sqrt(dx * dx + dy * dy) < 0.1) return true;
        }
        return false;
    };
    CHECK(close_to(-3.0));
    CHECK(close_to(3.0));
}

TEST_CASE("update_state: repeated points floor the covariance at sigma_min") {
    Rng rng(37);
    DetectorConfig cfg;
    cfg.mixture_k = 2;
    Tensor z = Tensor::full({8, 3}, 0.7);
    HypothesisState st = init_hypothesis_state(Hypothesis::kDensity, 3, cfg);
    update_state(Hypothesis::kDensity, z, st, cfg, true, rng);
    for (double v : st.var->value.data) CHECK(v == doctest::Approx(cfg.sigma_min));
}

TEST_CASE("update_state: the radius follows the 0.9 quantile convention") {
    Rng rng(41);
    DetectorConfig cfg;
    HypothesisState st = init_hypothesis_state(Hypothesis::kCentroid, 1, cfg);
    // distances 1..10 from the (frozen) center at 0
    st.center_fixed = true;
    st.initialized = true;
    st.center->value.zero();
    Tensor z({10, 1});
    for (int i = 0; i < 10; ++i) z[i] = static_cast<double>(i + 1);
    update_state(Hypothesis::kCentroid, z, st, cfg, false, rng);
    CHECK(st.radius->value[0] > 9.0);
    CHECK(st.radius->value[0] < 10.0);
    CHECK(st.radius->value[0] == doctest::Approx(9.1));
}

TEST_CASE("update_state: contract errors on empty or undersized batches") {
    Rng rng(43);
    DetectorConfig cfg;
    HypothesisState st = init_hypothesis_state(Hypothesis::kDensity, 3, cfg);
    Tensor small = Tensor::zeros({2, 3});  // fewer rows than mixture_k = 4
    CHECK_THROWS_AS(update_state(Hypothesis::kDensity, small, st, cfg, true, rng),
                    ContractError);
}

TEST_CASE("score: perfect reconstruction scores zero under the reconstruction hypothesis") {
    ParamStore store(4);
    ModelSpec spec = simple_spec(Hypothesis::kReconstruction, Distance::kL2, 3, 1);
    spec.layers[0].conv_kernel = 1;
    spec.layers[0].activation = Activation::kLinear;
    ChildModel m = build(spec, {1, 6, 6}, store);
    // force the autoencoder to the identity: enc w = e_0 outer, dec mirrors
    for (const auto& p : m.trainable_params()) {
        p->value.zero();
        if (p->name.find("/conv/") != std::string::npos &&
            p->name.find("bias") == std::string::npos) {
            if (p->name.rfind("enc", 0) == 0) {
                p->value[0] = 1.0;  // first output channel copies the input
            } else {
                p->value[0] = 1.0;  // dec weight [Cin=3,Cout=1,1,1]: channel 0 back out
            }
        }
    }
    Rng rng(2);
    Tensor x = testsup::rand01(rng, {4, 1, 6, 6});
    ScoreMap sm = m.score(x);
    for (double v : sm.per_sample) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    for (const auto& map : sm.per_pixel)
        for (double v : map.data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("score: per-sample score composes distance and weighted regularizer") {
    Dataset blobs = make_indist(InDistFamily::kBlobs, 32, {1, 12, 12}, 21);
    ParamStore store(5);
    DetectorConfig cfg;
    cfg.lambda_reg = 0.1;
    ModelSpec spec = simple_spec(Hypothesis::kReconstruction, Distance::kL1);
    ChildModel m = build(spec, {1, 12, 12}, store, cfg);
    Optimizer opt(OptKind::kAdam, 5e-3, 0.9);
    Rng rng(3);
    train_child(m, blobs, 20, opt, 8, rng);
    Tensor batch = gather_samples(blobs, {0, 1, 2});
    TensorMap out = m.forward(batch, false);
    ScoreMap sm = m.score(batch);
    for (int i = 0; i < 3; ++i) {
        double want = out.at("dist_per_sample")[i] + 0.1 * out.at("reg_per_sample")[i];
        CHECK(sm.per_sample[static_cast<size_t>(i)] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("train_child: zero steps leave parameters unchanged") {
    Dataset blobs = make_indist(InDistFamily::kBlobs, 16, {1, 8, 8}, 2);
    ParamStore store(6);
    ChildModel m = build(simple_spec(Hypothesis::kReconstruction, Distance::kL2), {1, 8, 8},
                         store);
    std::vector<std::vector<double>> before;
    for (const auto& p : m.trainable_params()) before.push_back(p->value.data);
    Optimizer opt(OptKind::kAdam, 1e-2, 0.9);
    Rng rng(1);
    TrainResult tr = train_child(m, blobs, 0, opt, 8, rng);
    CHECK(tr.steps_run == 0);
    for (size_t i = 0; i < before.size(); ++i)
        CHECK(m.trainable_params()[i]->value.data == before[i]);
}

TEST_CASE("train_child: labeled outliers in the training split are rejected") {
    Dataset d = make_indist(InDistFamily::kBlobs, 8, {1, 8, 8}, 2);
    d.labels.assign(8, 0);
    d.labels[3] = 1;
    ParamStore store(7);
    ChildModel m = build(simple_spec(Hypothesis::kReconstruction, Distance::kL2), {1, 8, 8},
                         store);
    Optimizer opt(OptKind::kAdam, 1e-2, 0.9);
    Rng rng(1);
    CHECK_THROWS_AS(train_child(m, d, 4, opt, 4, rng), ContractError);
}

TEST_CASE("train_child: loss decreases on blobs for nearly all random specs" *
          doctest::timeout(300)) {
    Dataset blobs = make_indist(InDistFamily::kBlobs, 48, {1, 8, 8}, 77);
    Rng pick(55);
    auto vocab = vocabularies(1);
    int improved = 0;
    const int kTrials = 20;
    for (int t = 0; t < kTrials; ++t) {
        ActionSequence a;
        for (const auto& slot : vocab)
            a.tokens.push_back(pick.uniform_int(static_cast<int>(slot.choices.size())));
        ParamStore store(1000 + static_cast<uint64_t>(t));
        ChildModel m = build(decode(a), {1, 8, 8}, store);
        Optimizer opt(OptKind::kAdam, 3e-3, 0.9);
        Rng rng(500 + static_cast<uint64_t>(t));
        TrainResult tr = train_child(m, blobs, 200, opt, 16, rng);
        if (!tr.failed && tr.final_loss < tr.first_loss) ++improved;
    }
    CHECK(improved >= static_cast<int>(0.95 * kTrials));
}

TEST_CASE("train_child: second training run continues from shared weights") {
    Dataset blobs = make_indist(InDistFamily::kBlobs, 24, {1, 8, 8}, 3);
    ParamStore store(8);
    ModelSpec spec = simple_spec(Hypothesis::kReconstruction, Distance::kL2);
    ChildModel a = build(spec, {1, 8, 8}, store);
    Optimizer opt_a(OptKind::kAdam, 5e-3, 0.9);
    Rng rng_a(4);
    TrainResult ra = train_child(a, blobs, 30, opt_a, 8, rng_a);

    // the sharing contract: a fresh build reproduces a's loss bit-for-bit
    ChildModel b = build(spec, {1, 8, 8}, store);
    Tensor batch = gather_samples(blobs, {0, 1, 2, 3});
    double loss_a = a.forward(batch, false).at("loss")[0];
    double loss_b = b.forward(batch, false).at("loss")[0];
    CHECK(loss_a == loss_b);
    CHECK(ra.final_loss < ra.first_loss);
}

TEST_CASE("child checkpoints: hypothesis state rides along with hyp/ names") {
    Dataset blobs = make_indist(InDistFamily::kBlobs, 24, {1, 8, 8}, 5);
    auto dir = testsup::scratch_dir("child");
    ParamStore store(9);
    ChildModel m = build(simple_spec(Hypothesis::kDensity, Distance::kL2), {1, 8, 8}, store);
    Optimizer opt(OptKind::kAdam, 5e-3, 0.9);
    Rng rng(6);
    train_child(m, blobs, 12, opt, 8, rng);
    auto path = (dir / "child.aodt").string();
    m.save(path);

    bool saw_hyp = false;
    for (const auto& [name, t] : load_checkpoint(path))
        if (name.rfind("hyp/", 0) == 0) saw_hyp = true;
    CHECK(saw_hyp);

    ParamStore store2(10);
    ChildModel m2 = build(simple_spec(Hypothesis::kDensity, Distance::kL2), {1, 8, 8}, store2);
    m2.load(path);
    Tensor batch = gather_samples(blobs, {0, 1});
    CHECK(m.forward(batch, false).at("loss")[0] ==
          doctest::Approx(m2.forward(batch, false).at("loss")[0]).epsilon(1e-15));
    std::filesystem::remove_all(dir);
}
