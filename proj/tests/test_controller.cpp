#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "autood/checkpoint.hpp"
#include "autood/controller.hpp"
#include "autood/grad_check.hpp"
#include "autood/optim.hpp"
#include "test_support.hpp"

using namespace autood;

namespace {

Controller small_controller(uint64_t seed = 42, int hidden = 10, int embed = 8) {
    ControllerConfig cfg;
    cfg.hidden = hidden;
    cfg.embed = embed;
    return Controller(vocabularies(1), cfg, seed);
}

// chi-square statistic against a uniform distribution over k bins
double chi_square_uniform(const std::vector<int>& counts, int total) {
    double expect = static_cast<double>(total) / counts.size();
    double stat = 0.0;
    for (int c : counts) stat += (c - expect) * (c - expect) / expect;
    return stat;
}

}  // namespace

TEST_CASE("sample_weights: sigma -> 0 collapses the draw onto the mean") {
    ControllerConfig cfg;
    cfg.hidden = 6;
    cfg.embed = 4;
    cfg.sigma_init = 1e-12;
    Controller ctrl(vocabularies(1), cfg, 1);
    Rng rng(2);
    WeightMap phi = ctrl.sample_weights(rng);
    WeightMap mu = ctrl.mean_weights();
    for (const auto& [name, w] : phi)
        for (int64_t i = 0; i < w.numel(); ++i)
            CHECK(std::fabs(w[i] - mu.at(name)[i]) < 1e-9);
}

TEST_CASE("sample_weights: monte-carlo mean matches mu within 3 sigma / 100") {
    Controller ctrl = small_controller(7, 4, 3);
    const std::string name = "lstm/l0/b";
    double mu = ctrl.mean_weights().at(name)[0];
    Rng rng(3);
    double sum = 0.0;
    const int kDraws = 10000;
    for (int i = 0; i < kDraws; ++i) sum += ctrl.sample_weights(rng).at(name)[0];
    double sigma = 0.05;  // sigma_init
    CHECK(std::fabs(sum / kDraws - mu) < 3.0 * sigma / 100.0);
}

TEST_CASE("sample_weights: fixed seed reproduces the draw") {
    Controller ctrl = small_controller();
    Rng a(9), b(9);
    WeightMap w1 = ctrl.sample_weights(a);
    WeightMap w2 = ctrl.sample_weights(b);
    for (const auto& [name, w] : w1) CHECK(w.data == w2.at(name).data);
}

TEST_CASE("sharpen: zero gradient with sigma = sigma_prior gives zero KL") {
    ControllerConfig cfg;
    cfg.hidden = 5;
    cfg.embed = 4;
    cfg.sigma_init = cfg.sigma_prior;
    Controller ctrl(vocabularies(1), cfg, 11);
    Rng rng(1);
    WeightMap phi = ctrl.sample_weights(rng);
    WeightMap zeros;
    for (const auto& [name, w] : phi) zeros[name] = Tensor::zeros(w.shape);
    SharpenResult res = ctrl.sharpen(phi, zeros, rng);
    CHECK_FALSE(res.skipped);
    CHECK(res.kl_sharpen == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sharpen: scalar closed form delta^2 / (2 sigma_prior^2)") {
    // one-parameter check of the diagonal-Gaussian KL: mean shift delta,
    // equal variances leave only the quadratic term
    double sp = 0.1, sigma = 0.1, delta = 0.03;
    double kl = std::log(sp / sigma) + (sigma * sigma + delta * delta) / (2 * sp * sp) - 0.5;
    CHECK(kl == doctest::Approx(delta * delta / (2 * sp * sp)).epsilon(1e-12));
}

TEST_CASE("sharpen: KL matches numeric quadrature on a scalar case") {
    // KL(N(m1,s1^2) || N(m2,s2^2)) by direct integration
    double m1 = 0.2, s1 = 0.07, m2 = 0.0, s2 = 0.1;
    auto log_pdf = [](double x, double m, double s) {
        return -0.5 * std::log(2.0 * M_PI * s * s) - (x - m) * (x - m) / (2 * s * s);
    };
    double kl_quad = 0.0;
    const int kSteps = 400000;
    double lo = -1.5, hi = 1.5, h = (hi - lo) / kSteps;
    for (int i = 0; i < kSteps; ++i) {
        double x = lo + (i + 0.5) * h;
        double p = std::exp(log_pdf(x, m1, s1));
        kl_quad += h * p * (log_pdf(x, m1, s1) - log_pdf(x, m2, s2));
    }
    double kl_closed =
        std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2 * s2 * s2) - 0.5;
    CHECK(std::fabs(kl_closed - kl_quad) < 1e-6);
}

TEST_CASE("sharpen: non-finite gradients skip sharpening, theta = phi, KL = 0") {
    Controller ctrl = small_controller();
    Rng rng(5);
    WeightMap phi = ctrl.sample_weights(rng);
    WeightMap bad;
    for (const auto& [name, w] : phi) bad[name] = Tensor::full(w.shape, std::nan(""));
    SharpenResult res = ctrl.sharpen(phi, bad, rng);
    CHECK(res.skipped);
    CHECK(res.kl_sharpen == 0.0);
    for (const auto& [name, w] : res.theta) CHECK(w.data == phi.at(name).data);
}

TEST_CASE("sample_actions: logits bounded by the tanh constant") {
    Controller ctrl = small_controller(3);
    Rng rng(4);
    SampledPolicy pol = ctrl.sample_actions(ctrl.sample_weights(rng), rng);
    REQUIRE(pol.log_probs.size() == 8);
    // |logit| <= 2.5 bounds the log-prob gap: min prob >= e^-5 / |V|
    for (size_t t = 0; t < pol.log_probs.size(); ++t) {
        double floor = std::exp(-2.0 * 2.5) / 8.0;
        CHECK(std::exp(pol.log_probs[t]) >= floor - 1e-12);
        CHECK(pol.log_probs[t] <= 0.0);
    }
}

TEST_CASE("sample_actions: zeroed heads sample uniformly per slot") {
    Controller ctrl = small_controller(6);
    for (const auto& p : ctrl.params()) {
        if (p->name.find("/head/") != std::string::npos && p->name.rfind("ctrl/mu/", 0) == 0)
            p->value.zero();
        if (p->name.find("/head/") != std::string::npos && p->name.rfind("ctrl/rho/", 0) == 0)
            p->value.fill(-40.0);  // sigma ~ 0: heads stay exactly zero
    }
    WeightMap mean = ctrl.mean_weights();
    Rng rng(8);
    auto vocab = vocabularies(1);
    std::vector<std::vector<int>> counts;
    for (const auto& s : vocab) counts.emplace_back(s.choices.size(), 0);
    const int kDraws = 10000;
    for (int i = 0; i < kDraws; ++i) {
        SampledPolicy pol = ctrl.sample_actions(mean, rng);
        for (size_t t = 0; t < pol.actions.tokens.size(); ++t)
            counts[t][static_cast<size_t>(pol.actions.tokens[t])]++;
    }
    // chi-square at alpha ~ 1e-3: df 7 -> 24.3; df 6 -> 22.5; smaller dfs lower
    std::vector<double> crit = {16.3, 16.3, 22.5, 16.3, 10.8, 16.3, 13.8, 24.3};
    for (size_t t = 0; t < counts.size(); ++t)
        CHECK(chi_square_uniform(counts[t], kDraws) < crit[t]);
}

TEST_CASE("sample_actions: greedy decode is deterministic and rescale-invariant") {
    Controller ctrl = small_controller(12);
    Rng rng(1);
    WeightMap theta = ctrl.sample_weights(rng);
    Rng r1(2), r2(3);
    ActionSequence a = ctrl.sample_actions(theta, r1, nullptr, true).actions;
    ActionSequence b = ctrl.sample_actions(theta, r2, nullptr, true).actions;
    CHECK(a == b);

    // positive rescaling of one slot's head weights preserves the argmax
    WeightMap scaled = theta;
    for (auto& v : scaled.at("head/slot3/w").data) v *= 2.75;
    for (auto& v : scaled.at("head/slot3/b").data) v *= 2.75;
    Rng r3(4);
    ActionSequence c = ctrl.sample_actions(scaled, r3, nullptr, true).actions;
    CHECK(c == a);
}

TEST_CASE("episodes: per-slot probabilities normalize and kl terms are non-negative") {
    Controller ctrl = small_controller(21);
    Rng rng(5);
    Episode ep = ctrl.sample_episode(rng);
    CHECK(ep.policy.kl_sharpen >= 0.0);
    CHECK(ep.graph.eval(ep.kl_prior_node)[0] >= 0.0);
    // exp(log-probs) over each slot's vocabulary sums to one: spot-check
    // via a fresh numeric rollout on the same weights
    WeightMap mean = ctrl.mean_weights();
    Graph g;
    std::map<std::string, NodeId> w;
    for (const auto& [name, t] : mean) w[name] = g.constant(t, name);
    // one LSTM step by hand through the public API: uniform-zero head test
    // already covers normalization; here assert log_probs are <= 0
    for (double lp : ep.policy.log_probs) CHECK(lp <= 0.0);
}

TEST_CASE("variational_loss: KL(q(phi)||N(0,1)) vanishes at mu=0, sigma=1") {
    ControllerConfig cfg;
    cfg.hidden = 4;
    cfg.embed = 3;
    cfg.init_range = 0.0;                       // mu = 0
    cfg.sigma_init = 1.0;                       // sigma = 1 matches the hyperprior
    cfg.sigma_prior = 1.0;
    cfg.eta_lr_init = 0.0;
    Controller ctrl(vocabularies(1), cfg, 2);
    Rng rng(3);
    Episode ep = ctrl.sample_episode(rng);
    double kl_prior = ep.graph.eval(ep.kl_prior_node)[0];
    CHECK(kl_prior == doctest::Approx(0.0).epsilon(1e-10));
    double nll = -ep.graph.eval(ep.logprob_sum)[0];
    // with eta = 0 and matched variances the sharpening KL collapses too
    CHECK(ep.policy.kl_sharpen == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ctrl.variational_loss(ep, 1000000000) == doctest::Approx(nll).epsilon(1e-6));
}

TEST_CASE("variational_loss: a unit mean shift contributes KL = 1/2") {
    double kl = 0.5 * (1.0 * 1.0);  // closed form 0.5 mu^2 at sigma = 1
    CHECK(kl == 0.5);
    // and through the graph: single weight shifted by 1
    ControllerConfig cfg;
    cfg.hidden = 4;
    cfg.embed = 3;
    cfg.init_range = 0.0;
    cfg.sigma_init = 1.0;
    cfg.sigma_prior = 1.0;
    Controller ctrl(vocabularies(1), cfg, 2);
    double before;
    {
        Rng rng(3);
        Episode ep = ctrl.sample_episode(rng);
        before = ep.graph.eval(ep.kl_prior_node)[0];
    }
    for (const auto& p : ctrl.params())
        if (p->name == "ctrl/mu/lstm/l0/b") p->value[0] += 1.0;
    Rng rng(3);
    Episode ep = ctrl.sample_episode(rng);
    CHECK(ep.graph.eval(ep.kl_prior_node)[0] - before == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("variational_loss: finite differences over mu and rho with frozen noise") {
    ControllerConfig cfg;
    cfg.hidden = 4;
    cfg.embed = 3;
    Controller ctrl(vocabularies(1), cfg, 31);
    Rng rng(7);
    Episode ep = ctrl.sample_episode(rng);
    NodeId loss = ctrl.variational_loss_node(ep, 8);
    std::vector<ParamPtr> mu_rho;
    for (const auto& p : ctrl.params())
        if (p->name.rfind("ctrl/mu/", 0) == 0 || p->name.rfind("ctrl/rho/", 0) == 0)
            mu_rho.push_back(p);
    // eps 1e-4 keeps the difference quotient above cancellation noise on
    // the loss's additive KL offset
    Rng coords(9);
    CHECK(grad_check(ep.graph, loss, mu_rho, 1e-4, 4, &coords) < 1e-4);
}

TEST_CASE("variational_loss: eta gradient through the sharpened-draw construction") {
    // the sharpening shift -eta*g enters the loss twice: through the
    // theta draw and through the closed-form KL; replicate that wiring
    // with O(1) data gradients so finite differences condition well
    Rng rng(19);
    Graph g;
    auto mu = make_param("mu", testsup::randn(rng, {6}, 0.3));
    auto rho = make_param("rho", Tensor::full({6}, -2.0));
    auto eta = make_param("eta", testsup::randn(rng, {6}, 0.4));
    NodeId sigma = g.softplus(g.parameter(rho));
    NodeId gd = g.constant(testsup::randn(rng, {6}, 1.2));
    NodeId eps = g.constant(testsup::randn(rng, {6}, 1.0));
    NodeId eps2 = g.constant(testsup::randn(rng, {6}, 1.0));
    NodeId phi = g.add(g.parameter(mu), g.mul(sigma, eps));
    NodeId shift = g.mul(g.parameter(eta), gd);
    NodeId theta = g.add(g.sub(phi, shift), g.mul(sigma, eps2));
    double sp = 0.1;
    NodeId kl = g.sum_all(g.add_const(
        g.sub(g.scale(g.add(g.square(sigma), g.square(shift)), 0.5 / (sp * sp)), g.log(sigma)),
        std::log(sp) - 0.5));
    NodeId nll = g.sum_all(g.mul(g.tanh(theta), g.constant(testsup::randn(rng, {6}, 1.0))));
    NodeId loss = g.add(nll, kl);
    CHECK(grad_check(g, loss, {mu, rho, eta}, 1e-5) < 1e-4);
}

TEST_CASE("variational_loss: convergence when rewards favor one sequence" *
          doctest::timeout(120)) {
    // 2-slot toy landscape; the loss (policy gradient + variational terms)
    // trends down over 200 steps
    ControllerConfig cfg;
    cfg.hidden = 12;
    cfg.embed = 8;
    std::vector<SlotVocabulary> vocab(2);
    vocab[0] = {0, "s0", {"a", "b", "c"}};
    vocab[1] = {1, "s1", {"x", "y"}};
    Controller ctrl(vocab, cfg, 3);
    Optimizer opt(OptKind::kAdam, 5e-3, 0.9);
    Rng rng(5);
    double early = 0.0, late = 0.0;
    const int kSteps = 200;
    for (int step = 0; step < kSteps; ++step) {
        Episode ep = ctrl.sample_episode(rng);
        double r = ep.policy.actions.tokens[0] == 1 && ep.policy.actions.tokens[1] == 0 ? 1.0
                                                                                        : 0.0;
        Graph& g = ep.graph;
        NodeId pg = g.scale(ep.logprob_sum, -r);
        NodeId total = g.add(pg, ctrl.variational_loss_node(ep, 8));
        double v = g.eval(total)[0];
        if (step < 20) early += v;
        if (step >= kSteps - 20) late += v;
        Optimizer::zero_grad(ctrl.params());
        g.backward(total);
        opt.step(ctrl.params());
    }
    CHECK(late / 20.0 < early / 20.0);
}

TEST_CASE("intrinsic_reward: arithmetic, no-exploration wiring, and monotonicity") {
    CHECK(intrinsic_reward(0.7, 123.4, 0.0) == 0.7);
    CHECK(intrinsic_reward(0.9, 0.2, 0.1) == doctest::Approx(0.92));
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        double r = rng.uniform();
        double kl = 10.0 * rng.uniform();
        double eta = rng.uniform();
        CHECK(intrinsic_reward(r, kl, eta) >= r);
    }
    CHECK_THROWS_AS(intrinsic_reward(0.5, 0.1, -0.2), ContractError);
}

TEST_CASE("controller checkpoints: mu/rho/eta prefixes and exact restore") {
    auto dir = testsup::scratch_dir("ctrl");
    Controller a = small_controller(51);
    auto path = (dir / "ctrl.aodt").string();
    a.save(path);
    bool mu = false, rho = false, eta = false;
    for (const auto& [name, t] : load_checkpoint(path)) {
        mu |= name.rfind("ctrl/mu/", 0) == 0;
        rho |= name.rfind("ctrl/rho/", 0) == 0;
        eta |= name.rfind("ctrl/eta/", 0) == 0;
    }
    CHECK(mu);
    CHECK(rho);
    CHECK(eta);

    Controller b = small_controller(999);  // different init
    b.load(path);
    CHECK(b.greedy_actions() == a.greedy_actions());
    std::filesystem::remove_all(dir);
}
