#pragma once

#include <optional>
#include <string>
#include <vector>

#include "autood/config.hpp"
#include "autood/controller.hpp"
#include "autood/data.hpp"
#include "autood/detector.hpp"
#include "autood/optim.hpp"
#include "autood/param_store.hpp"
#include "autood/search_space.hpp"

namespace autood {

// Top-10 past experiences, reward-sorted, distinct by action sequence.
class ReplayBuffer {
public:
    struct Entry {
        ActionSequence actions;
        double reward;
        int arrival;
    };

    explicit ReplayBuffer(int capacity = 10);

    // "inserted" | "rejected" | "replaced-dup" | "kept-dup"
    std::string insert(const ActionSequence& actions, double reward);

    int size() const { return static_cast<int>(entries_.size()); }
    int capacity() const { return capacity_; }
    bool empty() const { return entries_.empty(); }
    double min_reward() const;
    const std::vector<Entry>& entries() const { return entries_; }  // reward descending

private:
    int capacity_;
    int arrivals_ = 0;
    std::vector<Entry> entries_;
};

// Exponential moving average of batch-mean rewards.
struct Baseline {
    double value = 0.0;
    double decay = 0.95;
};

void update_baseline(Baseline& b, const std::vector<double>& rewards);

struct LogRecord {
    int step = 0;   // global child-evaluation index
    int epoch = 0;
    std::string phase;  // reinforce | candidate | imitation | random
    ActionSequence actions;
    double raw_reward = 0.0;
    double kl_bonus = 0.0;
    double shaped_reward = 0.0;
    double baseline = 0.0;
    std::string buffer_event = "none";
    double child_train_loss = 0.0;
    int child_train_steps = 0;
    double wall_ms = 0.0;  // kept out of the JSONL so logs stay bit-reproducible
};

struct SearchLog {
    std::vector<LogRecord> records;

    void write_jsonl(const std::string& path) const;
    void write_timings_csv(const std::string& path) const;
    static SearchLog read_jsonl(const std::string& path);

    int total_child_train_steps() const;
};

struct SummaryRow {
    int epoch_bucket_start = 0;  // inclusive, 20-epoch buckets
    double best = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};
std::vector<SummaryRow> summarize(const SearchLog& log, int bucket = 20);
void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);

struct RankedSpec {
    ModelSpec spec;
    ActionSequence actions;
    double reward = 0.0;
};

struct ChildOutcome {
    double reward = 0.0;
    double train_loss = 0.0;
    int train_steps = 0;
    bool failed = false;
    std::string failure;
};

// build + train + score one candidate; failures are contained as reward 0
ChildOutcome evaluate_child(const ModelSpec& spec, const Splits& splits, int budget_steps,
                            ParamStore& store, const RunConfig& cfg, Rng& child_rng,
                            const std::vector<int>* eval_subset = nullptr);

// ascend (1/n) sum_k (r_k - b) grad log pi, combined with the variational
// loss descent; one optimizer step over mu/rho/eta
void reinforce_update(Controller& controller, std::vector<Episode>& episodes,
                      const std::vector<double>& shaped_rewards, const Baseline& baseline,
                      Optimizer& opt, int truncation_c);

// clipped-advantage behavior cloning of replayed sequences; entries with
// r <= b contribute exactly zero gradient. Returns the sampled entries.
std::vector<ReplayBuffer::Entry> self_imitation_update(Controller& controller,
                                                       const ReplayBuffer& buffer,
                                                       const Baseline& raw_baseline,
                                                       Optimizer& opt, int minibatch, Rng& rng);

struct SearchResult {
    SearchLog log;
    std::vector<RankedSpec> top5;
    std::shared_ptr<ParamStore> store;          // final shared weights
    std::shared_ptr<Controller> controller;     // null for random search
};

SearchResult run_search(const RunConfig& cfg, const Splits& splits);
SearchResult run_random_search(const RunConfig& cfg, const Splits& splits);

// dataset assembly from a config (in-distribution family + mixed
// out-distribution contamination, or the defect-segmentation task)
Splits prepare_splits(const DatasetConfig& dc);

}  // namespace autood
