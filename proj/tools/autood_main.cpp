#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "autood/detector.hpp"
#include "autood/metrics.hpp"
#include "autood/search.hpp"

namespace fs = std::filesystem;
using namespace autood;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    int workers = 0;
    int budget = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "run configuration JSON");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--seed", f.seed, "master seed override");
    cmd->add_option("--workers", f.workers, "parallel child evaluations");
    cmd->add_option("--budget", f.budget, "per-child training steps override");
}

RunConfig resolve_config(const CommonFlags& f) {
    RunConfig cfg = f.config_path.empty() ? RunConfig{} : RunConfig::from_file(f.config_path);
    if (const char* env = std::getenv("AUTOOD_OUT")) cfg.out_dir = env;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (f.seed >= 0) cfg.seed = static_cast<uint64_t>(f.seed);
    if (f.workers > 0) cfg.workers = f.workers;
    if (f.budget > 0) cfg.child_budget_steps = f.budget;
    cfg.validate();
    return cfg;
}

void write_top5(const fs::path& path, const std::vector<RankedSpec>& top5) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : top5) {
        nlohmann::json j;
        j["reward"] = t.reward;
        j["actions"] = t.actions.tokens;
        j["spec"] = nlohmann::json::parse(t.spec.to_json());
        arr.push_back(std::move(j));
    }
    std::ofstream os(path);
    os << arr.dump(2) << "\n";
}

void write_artifacts(const RunConfig& cfg, const SearchResult& res) {
    fs::path out(cfg.out_dir);
    fs::create_directories(out / "checkpoints");
    cfg.write((out / "config.json").string());
    res.log.write_jsonl((out / "searchlog.jsonl").string());
    res.log.write_timings_csv((out / "timings.csv").string());
    write_summary_csv((out / "summary.csv").string(), summarize(res.log));
    write_top5(out / "top5.json", res.top5);
    if (res.store) res.store->save((out / "checkpoints" / "store.aodt").string());
    if (res.controller) res.controller->save((out / "checkpoints" / "controller.aodt").string());
}

int cmd_search(const CommonFlags& f, bool random) {
    RunConfig cfg = resolve_config(f);
    Splits splits = prepare_splits(cfg.dataset);
    SearchResult res = random ? run_random_search(cfg, splits) : run_search(cfg, splits);
    write_artifacts(cfg, res);
    double best = res.top5.empty() ? 0.0 : res.top5.front().reward;
    std::cout << (random ? "random-search" : "search") << " done: "
              << res.log.records.size() << " evaluations, best reward " << best << "\n";
    return 0;
}

ModelSpec read_spec_file(const std::string& path) {
    std::ifstream is(path);
    if (is) {
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        return ModelSpec::from_json(text);
    }
    throw ConfigError("cannot open spec file '" + path + "'");
}

int cmd_train_one(const CommonFlags& f, const std::string& spec_path) {
    RunConfig cfg = resolve_config(f);
    ModelSpec spec = read_spec_file(spec_path);
    Splits splits = prepare_splits(cfg.dataset);

    ParamStore store(Rng::mix(cfg.seed, 0x57));
    DetectorConfig dcfg;
    dcfg.lambda_reg = cfg.lambda_reg;
    dcfg.mixture_k = cfg.mixture_k;
    dcfg.cluster_j = cfg.cluster_j;
    dcfg.sigma_min = cfg.sigma_min;
    ChildModel child = build(spec, splits.train.sample_shape(), store, dcfg);
    Optimizer opt(opt_kind_from_string(cfg.child_optimizer), cfg.child_lr, cfg.momentum);
    Rng rng(Rng::mix(cfg.seed, 0x7e));
    TrainResult tr = train_child(child, splits.train, cfg.child_budget_steps, opt, cfg.child_batch,
                                 rng, cfg.child_lr_drop);
    if (tr.failed) {
        std::cerr << "training failed: " << tr.failure << "\n";
        return 3;
    }
    fs::path out(cfg.out_dir);
    fs::create_directories(out / "model");
    cfg.write((out / "config.json").string());
    {
        std::ofstream os(out / "model" / "spec.json");
        os << spec.to_json() << "\n";
    }
    child.save((out / "model" / "weights.aodt").string());
    std::cout << "trained " << tr.steps_run << " steps, loss " << tr.first_loss << " -> "
              << tr.final_loss << "; checkpoint in " << (out / "model").string() << "\n";
    return 0;
}

int cmd_evaluate(const CommonFlags& f, const std::string& checkpoint, const std::string& split) {
    RunConfig cfg = resolve_config(f);
    if (split != "valid" && split != "test") throw ConfigError("--split must be valid or test");
    fs::path ckpt(checkpoint);
    ModelSpec spec = read_spec_file((ckpt / "spec.json").string());
    Splits splits = prepare_splits(cfg.dataset);
    const Dataset& data = split == "valid" ? splits.valid : splits.test;

    ParamStore store(Rng::mix(cfg.seed, 0x57));
    DetectorConfig dcfg;
    dcfg.lambda_reg = cfg.lambda_reg;
    dcfg.mixture_k = cfg.mixture_k;
    dcfg.cluster_j = cfg.cluster_j;
    dcfg.sigma_min = cfg.sigma_min;
    ChildModel child = build(spec, data.sample_shape(), store, dcfg);
    child.load((ckpt / "weights.aodt").string());

    ScoreMap sm = child.score(data.samples);
    LabeledScoreSet set{sm.per_sample, data.labels};
    int n_pos = 0;
    for (int l : data.labels) n_pos += l != 0;
    int n_neg = data.size() - n_pos;

    fs::path out(cfg.out_dir);
    fs::create_directories(out);
    std::ofstream os(out / ("metrics_" + split + ".csv"));
    os << "metric,value,n_pos,n_neg\n";
    auto emit = [&](const std::string& name, double value) {
        os << name << "," << value << "," << n_pos << "," << n_neg << "\n";
        std::cout << name << " = " << value << "\n";
    };
    emit("auroc", auroc(set));
    emit("aupr_in", aupr(set, PositiveClass::kIn));
    emit("aupr_out", aupr(set, PositiveClass::kOut));
    if (data.has_masks()) {
        std::vector<Tensor> maps, masks;
        for (int i = 0; i < data.size(); ++i) {
            maps.push_back(sm.per_pixel[static_cast<size_t>(i)]);
            masks.push_back(data.masks[static_cast<size_t>(i)]);
        }
        emit("rpro", rpro(maps, masks));
    }
    return 0;
}

int cmd_report(const std::string& log_dir) {
    fs::path dir(log_dir);
    SearchLog log = SearchLog::read_jsonl((dir / "searchlog.jsonl").string());
    auto rows = summarize(log);
    write_summary_csv((dir / "summary.csv").string(), rows);
    std::cout << "epoch_bucket,best,mean,std,count\n";
    for (const auto& r : rows)
        std::cout << r.epoch_bucket_start << "," << r.best << "," << r.mean << "," << r.stddev
                  << "," << r.count << "\n";

    // top-5 table
    std::map<std::vector<int>, double> best;
    for (const auto& r : log.records) {
        auto it = best.find(r.actions.tokens);
        if (it == best.end() || r.raw_reward > it->second) best[r.actions.tokens] = r.raw_reward;
    }
    std::vector<std::pair<std::vector<int>, double>> ranked(best.begin(), best.end());
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.second > b.second; });
    std::cout << "\nrank,reward,hypothesis,distance,actions\n";
    for (size_t i = 0; i < ranked.size() && i < 5; ++i) {
        ActionSequence a{ranked[i].first};
        ModelSpec spec = decode(a);
        std::cout << i + 1 << "," << ranked[i].second << ","
                  << hypothesis_names()[static_cast<size_t>(spec.hypothesis)] << ","
                  << distance_names()[static_cast<size_t>(spec.distance)] << ",\"";
        for (size_t t = 0; t < a.tokens.size(); ++t)
            std::cout << (t ? " " : "") << a.tokens[t];
        std::cout << "\"\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"automated outlier-detection search"};
    app.require_subcommand(1);

    CommonFlags sf, rf, tf, ef;
    std::string spec_path, checkpoint, split = "valid", log_dir;

    CLI::App* search = app.add_subcommand("search", "run the curiosity-guided search");
    add_common(search, sf);
    CLI::App* random = app.add_subcommand("random-search", "run the random-search baseline");
    add_common(random, rf);
    CLI::App* train = app.add_subcommand("train-one", "train a single model from a spec file");
    add_common(train, tf);
    train->add_option("--spec", spec_path, "model spec JSON")->required();
    CLI::App* eval = app.add_subcommand("evaluate", "evaluate a trained checkpoint");
    add_common(eval, ef);
    eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    eval->add_option("--split", split, "valid or test");
    CLI::App* report = app.add_subcommand("report", "summarize a search log");
    report->add_option("--log", log_dir, "directory containing searchlog.jsonl")->required();

    try {
        app.parse(argc, argv);
        if (search->parsed()) return cmd_search(sf, false);
        if (random->parsed()) return cmd_search(rf, true);
        if (train->parsed()) return cmd_train_one(tf, spec_path);
        if (eval->parsed()) return cmd_evaluate(ef, checkpoint, split);
        if (report->parsed()) return cmd_report(log_dir);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
