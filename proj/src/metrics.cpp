#include "autood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace autood {

namespace {

void check_set(const LabeledScoreSet& set) {
    if (set.scores.size() != set.labels.size())
        throw ContractError("scores and labels must have equal length");
    if (set.scores.empty()) throw ContractError("empty score set");
    for (double s : set.scores)
        if (!std::isfinite(s)) throw ContractError("scores must be finite");
    int pos = 0;
    for (int l : set.labels) pos += l != 0;
    if (pos == 0 || pos == static_cast<int>(set.labels.size()))
        throw ContractError("both classes must be present");
}

double quantile(std::vector<double> sorted, double q) {
    double idx = q * static_cast<double>(sorted.size() - 1);
    size_t lo = static_cast<size_t>(std::floor(idx));
    size_t hi = static_cast<size_t>(std::ceil(idx));
    double w = idx - static_cast<double>(lo);
    return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

}  // namespace

double auroc(const LabeledScoreSet& set) {
    check_set(set);
    size_t n = set.scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return set.scores[a] < set.scores[b]; });

    // midranks over tie groups
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
        double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    int64_t n_pos = 0;
    for (size_t k = 0; k < n; ++k) {
        if (set.labels[k] != 0) {
            pos_rank_sum += rank[k];
            ++n_pos;
        }
    }
    int64_t n_neg = static_cast<int64_t>(n) - n_pos;
    double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double aupr(const LabeledScoreSet& set, PositiveClass positive) {
    check_set(set);
    size_t n = set.scores.size();
    std::vector<std::pair<double, int>> pts(n);
    for (size_t k = 0; k < n; ++k) {
        bool is_pos = positive == PositiveClass::kOut ? set.labels[k] != 0 : set.labels[k] == 0;
        double s = positive == PositiveClass::kOut ? set.scores[k] : -set.scores[k];
        pts[k] = {s, is_pos ? 1 : 0};
    }
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    int64_t total_pos = 0;
    for (const auto& [s, l] : pts) total_pos += l;

    double area = 0.0;
    double prev_recall = 0.0;
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && pts[j + 1].first == pts[i].first) ++j;
        for (size_t k = i; k <= j; ++k) {
            tp += pts[k].second;
            fp += 1 - pts[k].second;
        }
        double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return area;
}

double rpro(const std::vector<Tensor>& score_maps, const std::vector<Tensor>& truth_masks,
            int n_thresholds) {
    if (score_maps.size() != truth_masks.size() || score_maps.empty())
        throw ContractError("rpro: maps and masks must align");
    if (n_thresholds < 1) throw ContractError("rpro: need at least one threshold");

    // regions: per mask, list of pixel index lists (4-connectivity)
    struct Region {
        size_t map_idx;
        std::vector<int> pixels;
    };
    std::vector<Region> regions;
    std::vector<double> pooled;
    for (size_t m = 0; m < score_maps.size(); ++m) {
        const Tensor& s = score_maps[m];
        const Tensor& t = truth_masks[m];
        if (s.shape != t.shape || s.rank() != 2)
            throw ContractError("rpro: each map/mask must be a matching [H,W] pair");
        pooled.insert(pooled.end(), s.data.begin(), s.data.end());
        int H = t.shape[0], W = t.shape[1];
        std::vector<char> seen(static_cast<size_t>(H) * W, 0);
        for (int p = 0; p < H * W; ++p) {
            if (t[p] == 0.0 || seen[static_cast<size_t>(p)]) continue;
            Region r;
            r.map_idx = m;
            std::queue<int> q;
            q.push(p);
            seen[static_cast<size_t>(p)] = 1;
            while (!q.empty()) {
                int cur = q.front();
                q.pop();
                r.pixels.push_back(cur);
                int y = cur / W, x = cur % W;
                const int dy[4] = {-1, 1, 0, 0};
                const int dx[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    int ny = y + dy[d], nx = x + dx[d];
                    if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                    int np = ny * W + nx;
                    if (t[np] != 0.0 && !seen[static_cast<size_t>(np)]) {
                        seen[static_cast<size_t>(np)] = 1;
                        q.push(np);
                    }
                }
            }
            regions.push_back(std::move(r));
        }
    }
    if (regions.empty()) throw ContractError("rpro: no positive region in any mask");

    std::sort(pooled.begin(), pooled.end());
    double total = 0.0;
    for (int t = 0; t < n_thresholds; ++t) {
        double tau = quantile(pooled, (static_cast<double>(t) + 0.5) / n_thresholds);
        double sum_overlap = 0.0;
        for (const Region& r : regions) {
            const Tensor& s = score_maps[r.map_idx];
            int covered = 0;
            for (int p : r.pixels) covered += s[p] > tau;
            sum_overlap += static_cast<double>(covered) / static_cast<double>(r.pixels.size());
        }
        total += sum_overlap / static_cast<double>(regions.size());
    }
    return total / n_thresholds;
}

}  // namespace autood
