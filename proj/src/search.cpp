#include "autood/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>

#include <json.hpp>

#include "autood/metrics.hpp"

namespace autood {

// --- replay buffer -----------------------------------------------------------

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw ContractError("replay buffer capacity must be >= 1");
}

double ReplayBuffer::min_reward() const {
    if (entries_.empty()) throw ContractError("replay buffer is empty");
    return entries_.back().reward;
}

std::string ReplayBuffer::insert(const ActionSequence& actions, double reward) {
    if (!std::isfinite(reward)) throw ContractError("replay buffer rewards must be finite");
    ++arrivals_;
    auto resort = [&] {
        std::stable_sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
            if (a.reward != b.reward) return a.reward > b.reward;
            return a.arrival < b.arrival;
        });
    };
    for (auto& e : entries_) {
        if (e.actions == actions) {
            if (reward > e.reward) {
                e.reward = reward;
                e.arrival = arrivals_;
                resort();
                return "replaced-dup";
            }
            return "kept-dup";
        }
    }
    if (static_cast<int>(entries_.size()) < capacity_) {
        entries_.push_back({actions, reward, arrivals_});
        resort();
        return "inserted";
    }
    if (reward > entries_.back().reward) {
        entries_.back() = {actions, reward, arrivals_};
        resort();
        return "inserted";
    }
    return "rejected";
}

void update_baseline(Baseline& b, const std::vector<double>& rewards) {
    if (rewards.empty()) throw ContractError("update_baseline: rewards must be non-empty");
    double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                  static_cast<double>(rewards.size());
    b.value = b.decay * b.value + (1.0 - b.decay) * mean;
}

// --- search log ---------------------------------------------------------------

void SearchLog::write_jsonl(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    for (const auto& r : records) {
        nlohmann::json j;
        j["step"] = r.step;
        j["epoch"] = r.epoch;
        j["phase"] = r.phase;
        j["actions"] = r.actions.tokens;
        j["raw_reward"] = r.raw_reward;
        j["kl_bonus"] = r.kl_bonus;
        j["shaped_reward"] = r.shaped_reward;
        j["baseline"] = r.baseline;
        j["buffer_event"] = r.buffer_event;
        j["child_train_loss"] = r.child_train_loss;
        j["child_train_steps"] = r.child_train_steps;
        os << j.dump() << "\n";
    }
    if (!os) throw FormatError("write failed for '" + path + "'");
}

void SearchLog::write_timings_csv(const std::string& path) const {
    std::ofstream os(path);
    os << "step,wall_ms\n";
    for (const auto& r : records) os << r.step << "," << r.wall_ms << "\n";
}

SearchLog SearchLog::read_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open '" + path + "'");
    SearchLog log;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ": " + e.what());
        }
        LogRecord r;
        r.step = j.at("step").get<int>();
        r.epoch = j.at("epoch").get<int>();
        r.phase = j.at("phase").get<std::string>();
        r.actions.tokens = j.at("actions").get<std::vector<int>>();
        r.raw_reward = j.at("raw_reward").get<double>();
        r.kl_bonus = j.at("kl_bonus").get<double>();
        r.shaped_reward = j.at("shaped_reward").get<double>();
        r.baseline = j.at("baseline").get<double>();
        r.buffer_event = j.at("buffer_event").get<std::string>();
        r.child_train_loss = j.at("child_train_loss").get<double>();
        r.child_train_steps = j.value("child_train_steps", 0);
        log.records.push_back(std::move(r));
    }
    return log;
}

int SearchLog::total_child_train_steps() const {
    int total = 0;
    for (const auto& r : records) total += r.child_train_steps;
    return total;
}

std::vector<SummaryRow> summarize(const SearchLog& log, int bucket) {
    if (bucket < 1) throw ContractError("summarize: bucket must be >= 1");
    std::map<int, std::vector<double>> by_bucket;
    for (const auto& r : log.records) by_bucket[(r.epoch / bucket) * bucket].push_back(r.raw_reward);
    std::vector<SummaryRow> rows;
    for (const auto& [start, rewards] : by_bucket) {
        SummaryRow row;
        row.epoch_bucket_start = start;
        row.count = static_cast<int>(rewards.size());
        row.best = *std::max_element(rewards.begin(), rewards.end());
        row.mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / rewards.size();
        double ss = 0.0;
        for (double r : rewards) ss += (r - row.mean) * (r - row.mean);
        row.stddev = std::sqrt(ss / rewards.size());
        rows.push_back(row);
    }
    return rows;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream os(path);
    os << "epoch_bucket,best,mean,std,count\n";
    for (const auto& r : rows)
        os << r.epoch_bucket_start << "," << r.best << "," << r.mean << "," << r.stddev << ","
           << r.count << "\n";
    if (!os) throw FormatError("write failed for '" + path + "'");
}

// --- dataset assembly ----------------------------------------------------------

namespace {

Dataset concat(const Dataset& a, const Dataset& b) {
    Dataset out;
    auto s = a.sample_shape();
    out.samples = Tensor({a.size() + b.size(), s[0], s[1], s[2]});
    std::copy(a.samples.data.begin(), a.samples.data.end(), out.samples.data.begin());
    std::copy(b.samples.data.begin(), b.samples.data.end(),
              out.samples.data.begin() + a.samples.numel());
    out.provenance = a.provenance + "+" + b.provenance;
    out.seed = a.seed;
    return out;
}

}  // namespace

Splits prepare_splits(const DatasetConfig& dc) {
    if (dc.family == "defects") {
        Dataset all = synth_defects(dc.n, dc.shape, dc.seed);
        // defect-free images train; remaining cleans plus all defectives
        // are split evenly into labeled valid/test halves
        std::vector<int> clean, defective;
        for (int i = 0; i < all.size(); ++i)
            (all.labels[static_cast<size_t>(i)] ? defective : clean).push_back(i);
        Rng rng(Rng::mix(dc.seed, 0xdef));
        auto shuffle = [&](std::vector<int>& v) {
            for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
                std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(rng.uniform_int(i + 1))]);
        };
        shuffle(clean);
        shuffle(defective);
        int n_train = static_cast<int>(0.6 * static_cast<double>(clean.size()));
        std::vector<int> rest(clean.begin() + n_train, clean.end());
        rest.insert(rest.end(), defective.begin(), defective.end());
        shuffle(rest);

        auto take = [&](const std::vector<int>& idx, bool labeled) {
            Dataset d;
            d.samples = gather_samples(all, idx);
            d.provenance = all.provenance;
            d.seed = dc.seed;
            if (labeled) {
                for (int i : idx) {
                    d.labels.push_back(all.labels[static_cast<size_t>(i)]);
                    d.masks.push_back(all.masks[static_cast<size_t>(i)]);
                }
            }
            return d;
        };
        Splits s;
        s.train = take({clean.begin(), clean.begin() + n_train}, false);
        std::vector<int> valid_idx(rest.begin(), rest.begin() + static_cast<long>(rest.size() / 2));
        std::vector<int> test_idx(rest.begin() + static_cast<long>(rest.size() / 2), rest.end());
        s.valid = take(valid_idx, true);
        s.test = take(test_idx, true);
        return s;
    }

    InDistFamily fam = dc.family == "blobs" ? InDistFamily::kBlobs : InDistFamily::kTextures;
    InDistFamily other = fam == InDistFamily::kBlobs ? InDistFamily::kTextures
                                                     : InDistFamily::kBlobs;
    Dataset in = make_indist(fam, dc.n, dc.shape, dc.seed);
    int n_split = static_cast<int>(std::floor(0.2 * dc.n));
    int k_out = static_cast<int>(std::floor(dc.contamination * n_split)) * 2;
    int pool = std::max(k_out, 32);
    Dataset out = concat(make_indist(other, pool / 2, dc.shape, Rng::mix(dc.seed, 1)),
                         concat(synth_noise(NoiseKind::kGaussian, pool / 4 + 1, dc.shape,
                                            Rng::mix(dc.seed, 2)),
                                synth_noise(NoiseKind::kUniform, pool / 4 + 1, dc.shape,
                                            Rng::mix(dc.seed, 3))));
    SplitPlan plan;
    plan.contamination = dc.contamination;
    plan.seed = Rng::mix(dc.seed, 4);
    return plant_outliers(in, out, plan);
}

// --- child evaluation -----------------------------------------------------------

ChildOutcome evaluate_child(const ModelSpec& spec, const Splits& splits, int budget_steps,
                            ParamStore& store, const RunConfig& cfg, Rng& child_rng,
                            const std::vector<int>* eval_subset) {
    ChildOutcome out;
    out.train_steps = budget_steps;
    try {
        DetectorConfig dcfg;
        dcfg.lambda_reg = cfg.lambda_reg;
        dcfg.mixture_k = cfg.mixture_k;
        dcfg.cluster_j = cfg.cluster_j;
        dcfg.sigma_min = cfg.sigma_min;
        ChildModel child = build(spec, splits.train.sample_shape(), store, dcfg);
        Optimizer opt(opt_kind_from_string(cfg.child_optimizer), cfg.child_lr, cfg.momentum);
        TrainResult tr = train_child(child, splits.train, budget_steps, opt, cfg.child_batch,
                                     child_rng, cfg.child_lr_drop);
        out.train_loss = tr.final_loss;
        if (tr.failed) {
            out.failed = true;
            out.failure = tr.failure;
            out.reward = 0.0;
            return out;
        }
        std::vector<int> idx;
        if (eval_subset) {
            idx = *eval_subset;
        } else {
            idx.resize(static_cast<size_t>(splits.valid.size()));
            std::iota(idx.begin(), idx.end(), 0);
        }
        ScoreMap sm = child.score(gather_samples(splits.valid, idx));
        if (cfg.reward_metric == "rpro") {
            std::vector<Tensor> maps, masks;
            for (size_t i = 0; i < idx.size(); ++i) {
                maps.push_back(sm.per_pixel[i]);
                masks.push_back(splits.valid.masks[static_cast<size_t>(idx[i])]);
            }
            out.reward = rpro(maps, masks);
        } else {
            LabeledScoreSet set;
            set.scores = sm.per_sample;
            for (int i : idx) set.labels.push_back(splits.valid.labels[static_cast<size_t>(i)]);
            if (cfg.reward_metric == "auroc") {
                out.reward = auroc(set);
            } else {
                out.reward = aupr(set, cfg.reward_metric == "aupr_in" ? PositiveClass::kIn
                                                                      : PositiveClass::kOut);
            }
        }
    } catch (const Error& e) {
        out.failed = true;
        out.failure = e.what();
        out.reward = 0.0;
    }
    return out;
}

// --- controller updates ----------------------------------------------------------

void reinforce_update(Controller& controller, std::vector<Episode>& episodes,
                      const std::vector<double>& shaped_rewards, const Baseline& baseline,
                      Optimizer& opt, int truncation_c) {
    if (episodes.empty() || episodes.size() != shaped_rewards.size())
        throw ContractError("reinforce_update: episodes and rewards must align, n >= 1");
    auto params = controller.params();
    Optimizer::zero_grad(params);
    double n = static_cast<double>(episodes.size());
    for (size_t k = 0; k < episodes.size(); ++k) {
        Episode& ep = episodes[k];
        double advantage = shaped_rewards[k] - baseline.value;
        Graph& g = ep.graph;
        // policy gradient ascends advantage * logprob; the variational
        // loss is descended alongside
        NodeId pg = g.scale(ep.logprob_sum, -advantage / n);
        NodeId var = g.scale(controller.variational_loss_node(ep, truncation_c), 1.0 / n);
        NodeId total = g.add(pg, var);
        g.eval(total);
        g.backward(total);
    }
    opt.step(params);
}

std::vector<ReplayBuffer::Entry> self_imitation_update(Controller& controller,
                                                       const ReplayBuffer& buffer,
                                                       const Baseline& raw_baseline,
                                                       Optimizer& opt, int minibatch, Rng& rng) {
    if (buffer.empty() || minibatch < 1) return {};
    // sample without replacement
    std::vector<int> idx(static_cast<size_t>(buffer.size()));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.uniform_int(i + 1))]);
    int m = std::min<int>(minibatch, buffer.size());
    idx.resize(static_cast<size_t>(m));

    auto params = controller.params();
    Optimizer::zero_grad(params);
    std::vector<ReplayBuffer::Entry> sampled;
    bool any = false;
    for (int i : idx) {
        const auto& entry = buffer.entries()[static_cast<size_t>(i)];
        sampled.push_back(entry);
        double clipped = std::max(0.0, entry.reward - raw_baseline.value);
        if (clipped == 0.0) continue;  // clipped advantage contributes nothing
        Episode ep = controller.replay_episode(entry.actions, rng);
        Graph& g = ep.graph;
        NodeId loss = g.scale(g.neg(ep.logprob_sum), clipped / m);
        g.eval(loss);
        g.backward(loss);
        any = true;
    }
    if (any) opt.step(params);
    return sampled;
}

// --- search loops -------------------------------------------------------------------

namespace {

std::vector<int> stratified_eval_subset(const Dataset& valid, int max_samples, uint64_t seed) {
    std::vector<int> idx(static_cast<size_t>(valid.size()));
    std::iota(idx.begin(), idx.end(), 0);
    if (max_samples <= 0 || max_samples >= valid.size()) return idx;
    std::vector<int> pos, neg;
    for (int i = 0; i < valid.size(); ++i)
        (valid.labels[static_cast<size_t>(i)] ? pos : neg).push_back(i);
    Rng rng(Rng::mix(seed, 0xea1));
    for (int i = static_cast<int>(neg.size()) - 1; i > 0; --i)
        std::swap(neg[static_cast<size_t>(i)], neg[static_cast<size_t>(rng.uniform_int(i + 1))]);
    std::vector<int> subset = pos;  // keep every outlier, fill with inliers
    for (int i : neg) {
        if (static_cast<int>(subset.size()) >= std::max(max_samples, static_cast<int>(pos.size()) + 1))
            break;
        subset.push_back(i);
    }
    std::sort(subset.begin(), subset.end());
    return subset;
}

std::vector<RankedSpec> top5_from_log(const SearchLog& log) {
    std::map<std::vector<int>, double> best;
    for (const auto& r : log.records) {
        auto it = best.find(r.actions.tokens);
        if (it == best.end() || r.raw_reward > it->second) best[r.actions.tokens] = r.raw_reward;
    }
    std::vector<std::pair<std::vector<int>, double>> ranked(best.begin(), best.end());
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<RankedSpec> out;
    for (const auto& [tokens, reward] : ranked) {
        if (out.size() == 5) break;
        RankedSpec rs;
        rs.actions.tokens = tokens;
        rs.spec = decode(rs.actions);
        rs.reward = reward;
        out.push_back(std::move(rs));
    }
    return out;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct EvalJob {
    ModelSpec spec;
    ActionSequence actions;
    uint64_t rng_seed;
};

// evaluates a batch of children; with workers > 1 each child trains on an
// isolated clone and deltas merge back last-writer-wins by sample index
std::vector<ChildOutcome> evaluate_batch(const std::vector<EvalJob>& jobs, const Splits& splits,
                                         ParamStore& store, const RunConfig& cfg,
                                         const std::vector<int>* subset) {
    std::vector<ChildOutcome> outcomes(jobs.size());
    if (cfg.workers <= 1) {
        for (size_t i = 0; i < jobs.size(); ++i) {
            Rng rng(jobs[i].rng_seed);
            outcomes[i] = evaluate_child(jobs[i].spec, splits, cfg.child_budget_steps, store, cfg,
                                         rng, subset);
        }
        return outcomes;
    }
    std::vector<ParamStore> clones;
    clones.reserve(jobs.size());
    for (size_t i = 0; i < jobs.size(); ++i) clones.push_back(store.clone());
    std::vector<std::future<ChildOutcome>> futs;
    for (size_t i = 0; i < jobs.size(); ++i) {
        futs.push_back(std::async(std::launch::async, [&, i] {
            Rng rng(jobs[i].rng_seed);
            return evaluate_child(jobs[i].spec, splits, cfg.child_budget_steps, clones[i], cfg,
                                  rng, subset);
        }));
    }
    for (size_t i = 0; i < jobs.size(); ++i) outcomes[i] = futs[i].get();
    for (size_t i = 0; i < jobs.size(); ++i) store.merge_from(clones[i]);
    return outcomes;
}

}  // namespace

SearchResult run_search(const RunConfig& cfg, const Splits& splits) {
    cfg.validate();
    ControllerConfig ccfg;
    ccfg.hidden = cfg.hidden;
    ccfg.embed = cfg.embed;
    ccfg.temperature = cfg.temperature;
    ccfg.tanh_constant = cfg.tanh_constant;
    ccfg.sigma_prior = cfg.sigma_prior;
    ccfg.sigma_init = cfg.sigma_init;
    ccfg.eta_lr_init = cfg.eta_lr_init;

    auto controller_ptr = std::make_shared<Controller>(vocabularies(cfg.layers_n), ccfg,
                                                       Rng::mix(cfg.seed, 0xc0));
    Controller& controller = *controller_ptr;
    Optimizer ctrl_opt(OptKind::kAdam, cfg.controller_lr, 0.9);
    auto store_ptr = std::make_shared<ParamStore>(Rng::mix(cfg.seed, 0x57));
    ParamStore& store = *store_ptr;
    ReplayBuffer buffer(cfg.buffer_capacity);
    Baseline pg_baseline{0.0, cfg.baseline_decay};   // tracks shaped rewards
    Baseline raw_baseline{0.0, cfg.baseline_decay};  // tracks raw rewards; clips replays
    Rng ctrl_rng(Rng::mix(cfg.seed, 0x11));
    Rng sil_rng(Rng::mix(cfg.seed, 0x22));

    std::vector<int> subset =
        stratified_eval_subset(splits.valid, cfg.eval_max_samples, cfg.seed);
    const std::vector<int>* subset_ptr = &subset;

    int truncation_c = cfg.children_per_step + cfg.sil_batch;
    std::vector<Tensor> carried_hidden;
    SearchLog log;
    int step = 0;

    auto log_child = [&](int epoch, const char* phase, const ActionSequence& actions,
                         const ChildOutcome& oc, double kl_bonus, double shaped,
                         const std::string& buffer_event, double wall) {
        LogRecord r;
        r.step = step++;
        r.epoch = epoch;
        r.phase = phase;
        r.actions = actions;
        r.raw_reward = oc.reward;
        r.kl_bonus = kl_bonus;
        r.shaped_reward = shaped;
        r.baseline = pg_baseline.value;
        r.buffer_event = buffer_event;
        r.child_train_loss = oc.failed ? -1.0 : oc.train_loss;
        r.child_train_steps = oc.train_steps;
        r.wall_ms = wall;
        log.records.push_back(std::move(r));
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<Tensor>* init_hidden =
            carried_hidden.empty() ? nullptr : &carried_hidden;

        // curiosity-guided search: sample n children, train omega, shape
        // rewards with the information-gain bonus, update theta
        std::vector<Episode> episodes;
        std::vector<EvalJob> jobs;
        for (int k = 0; k < cfg.children_per_step; ++k) {
            episodes.push_back(controller.sample_episode(ctrl_rng, init_hidden));
            EvalJob job;
            job.actions = episodes.back().policy.actions;
            job.spec = decode(job.actions);
            job.rng_seed = Rng::mix(cfg.seed, 0x77770000ULL + static_cast<uint64_t>(step) + k);
            jobs.push_back(std::move(job));
        }
        double t0 = now_ms();
        std::vector<ChildOutcome> outcomes = evaluate_batch(jobs, splits, store, cfg, subset_ptr);
        double t1 = now_ms();
        std::vector<double> shaped(outcomes.size());
        std::vector<double> raw(outcomes.size());
        for (size_t k = 0; k < outcomes.size(); ++k) {
            raw[k] = outcomes[k].reward;
            shaped[k] = intrinsic_reward(outcomes[k].reward, episodes[k].policy.kl_sharpen,
                                         cfg.eta_explore);
            std::string ev = buffer.insert(jobs[k].actions, raw[k]);
            log_child(epoch, "reinforce", jobs[k].actions, outcomes[k],
                      episodes[k].policy.kl_sharpen, shaped[k], ev,
                      (t1 - t0) / static_cast<double>(outcomes.size()));
        }
        reinforce_update(controller, episodes, shaped, pg_baseline, ctrl_opt, truncation_c);
        update_baseline(pg_baseline, shaped);
        update_baseline(raw_baseline, raw);

        // self-imitation sweep: replay high-reward sequences and retrain
        // their children on the train split
        if (cfg.sil_batch > 0 && !buffer.empty()) {
            auto sampled = self_imitation_update(controller, buffer, raw_baseline, ctrl_opt,
                                                 cfg.sil_batch, sil_rng);
            for (const auto& entry : sampled) {
                EvalJob job;
                job.actions = entry.actions;
                job.spec = decode(entry.actions);
                job.rng_seed = Rng::mix(cfg.seed, 0x51100000ULL + static_cast<uint64_t>(step));
                double s0 = now_ms();
                Rng rng(job.rng_seed);
                ChildOutcome oc = evaluate_child(job.spec, splits, cfg.child_budget_steps, store,
                                                 cfg, rng, subset_ptr);
                double s1 = now_ms();
                std::string ev = buffer.insert(job.actions, oc.reward);
                log_child(epoch, "imitation", job.actions, oc, 0.0, oc.reward, ev, s1 - s0);
            }
        }

        // candidate scan: sample M, evaluate, carry the top-K hidden
        // states into the next iteration's initial controller state
        std::vector<SampledPolicy> cand_policies;
        std::vector<EvalJob> cand_jobs;
        for (int m = 0; m < cfg.candidates_m; ++m) {
            WeightMap phi = controller.sample_weights(ctrl_rng);
            cand_policies.push_back(controller.sample_actions(phi, ctrl_rng, init_hidden));
            EvalJob job;
            job.actions = cand_policies.back().actions;
            job.spec = decode(job.actions);
            job.rng_seed = Rng::mix(cfg.seed, 0xca000000ULL + static_cast<uint64_t>(step) + m);
            cand_jobs.push_back(std::move(job));
        }
        double c0 = now_ms();
        std::vector<ChildOutcome> cand_out =
            evaluate_batch(cand_jobs, splits, store, cfg, subset_ptr);
        double c1 = now_ms();
        for (size_t m = 0; m < cand_out.size(); ++m) {
            std::string ev = buffer.insert(cand_jobs[m].actions, cand_out[m].reward);
            log_child(epoch, "candidate", cand_jobs[m].actions, cand_out[m], 0.0,
                      cand_out[m].reward, ev, (c1 - c0) / static_cast<double>(cand_out.size()));
        }
        // top-K selection: reward descending, ties broken by sample index
        std::vector<size_t> order(cand_out.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return cand_out[a].reward > cand_out[b].reward;
        });
        int k_carry = std::min<int>(cfg.top_k, static_cast<int>(order.size()));
        if (k_carry > 0) {
            std::vector<Tensor> avg;
            for (int h = 0; h < 4; ++h) {
                Tensor acc = cand_policies[order[0]].final_hidden[static_cast<size_t>(h)];
                for (int k = 1; k < k_carry; ++k) {
                    const Tensor& t =
                        cand_policies[order[static_cast<size_t>(k)]].final_hidden[static_cast<size_t>(h)];
                    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += t[i];
                }
                for (auto& v : acc.data) v /= k_carry;
                avg.push_back(std::move(acc));
            }
            carried_hidden = std::move(avg);
        }
    }

    SearchResult res;
    res.log = std::move(log);
    res.top5 = top5_from_log(res.log);
    res.store = store_ptr;
    res.controller = controller_ptr;
    return res;
}

SearchResult run_random_search(const RunConfig& cfg, const Splits& splits) {
    cfg.validate();
    auto store_ptr = std::make_shared<ParamStore>(Rng::mix(cfg.seed, 0x57));
    ParamStore& store = *store_ptr;
    Rng rng(Rng::mix(cfg.seed, 0x99));
    auto vocab = vocabularies(cfg.layers_n);
    std::vector<int> subset =
        stratified_eval_subset(splits.valid, cfg.eval_max_samples, cfg.seed);

    // same per-epoch child count and per-child budget as run_search
    int children_per_epoch = cfg.children_per_step + cfg.sil_batch + cfg.candidates_m;
    SearchLog log;
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<EvalJob> jobs;
        for (int k = 0; k < children_per_epoch; ++k) {
            EvalJob job;
            for (const auto& slot : vocab)
                job.actions.tokens.push_back(rng.uniform_int(static_cast<int>(slot.choices.size())));
            job.spec = decode(job.actions);
            job.rng_seed = Rng::mix(cfg.seed, 0x77770000ULL + static_cast<uint64_t>(step) + k);
            jobs.push_back(std::move(job));
        }
        double t0 = now_ms();
        std::vector<ChildOutcome> outcomes = evaluate_batch(jobs, splits, store, cfg, &subset);
        double t1 = now_ms();
        for (size_t k = 0; k < outcomes.size(); ++k) {
            LogRecord r;
            r.step = step++;
            r.epoch = epoch;
            r.phase = "random";
            r.actions = jobs[k].actions;
            r.raw_reward = outcomes[k].reward;
            r.shaped_reward = outcomes[k].reward;
            r.child_train_loss = outcomes[k].failed ? -1.0 : outcomes[k].train_loss;
            r.child_train_steps = outcomes[k].train_steps;
            r.wall_ms = (t1 - t0) / static_cast<double>(outcomes.size());
            log.records.push_back(std::move(r));
        }
    }
    SearchResult res;
    res.log = std::move(log);
    res.top5 = top5_from_log(res.log);
    res.store = store_ptr;
    return res;
}

}  // namespace autood
