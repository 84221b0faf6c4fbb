#include "pals/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace pals {
namespace {

int resolve_threads(int requested, std::size_t work_items) {
    int threads = requested;
    if (threads <= 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
        if (const char* cap = std::getenv("PALS_THREADS")) {
            const int limit = std::atoi(cap);
            if (limit > 0) threads = std::min(threads, limit);
        }
    }
    threads = std::max(threads, 1);
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads),
                                                  std::max<std::size_t>(work_items, 1)));
}

std::vector<double> row_norms(const Matrix& m) {
    std::vector<double> norms(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (double v : m.row(i)) s += v * v;
        norms[i] = std::sqrt(s);
    }
    return norms;
}

// Top-k of row i against all bank rows; exclude == i skips self-matches.
void topk_for_row(const Matrix& queries, const Matrix& bank,
                  const std::vector<double>& query_norms, const std::vector<double>& bank_norms,
                  std::size_t i, long exclude, int k, int* out_idx, double* out_sim) {
    const std::size_t n = bank.rows;
    std::vector<std::pair<double, int>> scored;
    scored.reserve(n);
    const auto q = queries.row(i);
    const double qn = query_norms[i];
    for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<long>(j) == exclude) continue;
        double dot = 0.0;
        const auto b = bank.row(j);
        for (std::size_t t = 0; t < q.size(); ++t) dot += q[t] * b[t];
        const double denom = qn * bank_norms[j];
        scored.emplace_back(denom > 0.0 ? dot / denom : 0.0, static_cast<int>(j));
    }
    const auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);
    for (int j = 0; j < k; ++j) {
        out_idx[j] = scored[static_cast<std::size_t>(j)].second;
        out_sim[j] = scored[static_cast<std::size_t>(j)].first;
    }
}

NeighborList knn_impl(const Matrix& queries, const Matrix& bank, int k, bool self_exclude,
                      int num_threads) {
    const std::size_t nq = queries.rows;
    NeighborList out;
    out.k = k;
    out.index.resize(nq * static_cast<std::size_t>(k));
    out.sim.resize(nq * static_cast<std::size_t>(k));

    const std::vector<double> bank_norms = row_norms(bank);
    const std::vector<double> query_norms = (&queries == &bank) ? bank_norms : row_norms(queries);

    const int threads = resolve_threads(num_threads, nq);
    auto worker = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            topk_for_row(queries, bank, query_norms, bank_norms, i,
                         self_exclude ? static_cast<long>(i) : -1, k,
                         out.index.data() + i * static_cast<std::size_t>(k),
                         out.sim.data() + i * static_cast<std::size_t>(k));
        }
    };
    if (threads == 1) {
        worker(0, nq);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (nq + static_cast<std::size_t>(threads) - 1) /
                                  static_cast<std::size_t>(threads);
        for (int t = 0; t < threads; ++t) {
            const std::size_t lo = static_cast<std::size_t>(t) * chunk;
            const std::size_t hi = std::min(nq, lo + chunk);
            if (lo < hi) pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

int argmax_low_tie(std::span<const double> scores) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(scores.size()); ++c)
        if (scores[c] > scores[best]) best = c;
    return best;
}

}  // namespace

NeighborList knn_search(const Matrix& bank, int k, int num_threads) {
    if (k < 1) throw std::invalid_argument("knn_search: k must be positive");
    if (static_cast<std::size_t>(k) >= bank.rows)
        throw std::invalid_argument("knn_search: k must be smaller than the bank size");
    return knn_impl(bank, bank, k, /*self_exclude=*/true, num_threads);
}

NeighborList knn_cross(const Matrix& queries, const Matrix& bank, int k, int num_threads) {
    if (k < 1) throw std::invalid_argument("knn_cross: k must be positive");
    if (static_cast<std::size_t>(k) > bank.rows)
        throw std::invalid_argument("knn_cross: k exceeds the bank size");
    if (queries.cols != bank.cols)
        throw std::invalid_argument("knn_cross: dimension mismatch");
    return knn_impl(queries, bank, k, /*self_exclude=*/false, num_threads);
}

std::vector<int> weighted_pseudo_labels(const NeighborList& nbrs,
                                        const std::vector<CandidateSet>& candidates,
                                        int num_classes) {
    const std::size_t n = nbrs.count();
    std::vector<int> labels(n);
    std::vector<double> scores(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(scores.begin(), scores.end(), 0.0);
        for (int j = 0; j < nbrs.k; ++j) {
            const double w = nbrs.similarity(i, j);
            for (int c : candidates[static_cast<std::size_t>(nbrs.neighbor(i, j))].members())
                scores[static_cast<std::size_t>(c)] += w;
        }
        labels[i] = argmax_low_tie(scores);
    }
    return labels;
}

std::vector<int> majority_vote_labels(const NeighborList& nbrs,
                                      const std::vector<CandidateSet>& candidates,
                                      int num_classes) {
    const std::size_t n = nbrs.count();
    std::vector<int> labels(n);
    std::vector<double> counts(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(counts.begin(), counts.end(), 0.0);
        for (int j = 0; j < nbrs.k; ++j)
            for (int c : candidates[static_cast<std::size_t>(nbrs.neighbor(i, j))].members())
                counts[static_cast<std::size_t>(c)] += 1.0;
        labels[i] = argmax_low_tie(counts);
    }
    return labels;
}

Matrix knn_posteriors(const NeighborList& nbrs, const std::vector<int>& pseudo_labels,
                      int num_classes) {
    const std::size_t n = nbrs.count();
    Matrix post(n, static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < n; ++i) {
        auto row = post.row(i);
        double z = 0.0;
        for (int j = 0; j < nbrs.k; ++j) {
            const double w = nbrs.similarity(i, j);
            row[static_cast<std::size_t>(pseudo_labels[static_cast<std::size_t>(nbrs.neighbor(i, j))])] += w;
            z += w;
        }
        if (z <= 1e-12) {
            const double u = 1.0 / num_classes;
            for (auto& v : row) v = u;
        } else {
            for (auto& v : row) v /= z;
        }
    }
    return post;
}

ClassBudget class_budget(const Matrix& posteriors, const std::vector<CandidateSet>& candidates,
                         double delta) {
    if (delta < 0.0 || delta > 1.0)
        throw std::invalid_argument("class_budget: delta must be in [0,1]");
    const int c = static_cast<int>(posteriors.cols);
    ClassBudget out;
    out.agreements.assign(static_cast<std::size_t>(c), 0);
    for (std::size_t i = 0; i < posteriors.rows; ++i) {
        const int top = argmax_low_tie(posteriors.row(i));
        if (candidates[i].contains(top)) ++out.agreements[static_cast<std::size_t>(top)];
    }
    std::vector<long> sorted = out.agreements;
    std::sort(sorted.begin(), sorted.end());
    // Lower nearest-rank quantile: delta=0 picks the minimum.
    const auto rank = static_cast<std::size_t>(std::floor(delta * (c - 1)));
    out.budget = sorted[rank];
    return out;
}

std::vector<ReliablePair> select_reliable(const Matrix& posteriors,
                                          const std::vector<CandidateSet>& candidates,
                                          long budget) {
    const std::size_t n = posteriors.rows;
    const int c = static_cast<int>(posteriors.cols);
    std::vector<ReliablePair> pairs;
    if (budget <= 0) return pairs;

    // claimed[i] = (best posterior, class) among classes that selected i.
    std::vector<std::pair<double, int>> claimed(n, {0.0, -1});
    std::vector<std::pair<double, int>> eligible;  // (posterior, sample)
    for (int cls = 0; cls < c; ++cls) {
        eligible.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (candidates[i].contains(cls))
                eligible.emplace_back(posteriors(i, static_cast<std::size_t>(cls)),
                                      static_cast<int>(i));
        const std::size_t take = std::min<std::size_t>(eligible.size(),
                                                       static_cast<std::size_t>(budget));
        const auto better = [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        };
        std::partial_sort(eligible.begin(), eligible.begin() + static_cast<long>(take),
                          eligible.end(), better);
        for (std::size_t j = 0; j < take; ++j) {
            const auto [score, sample] = eligible[j];
            auto& slot = claimed[static_cast<std::size_t>(sample)];
            // Conflicts keep the highest posterior; ties keep the lower class.
            if (slot.second < 0 || score > slot.first) slot = {score, cls};
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (claimed[i].second >= 0)
            pairs.push_back({static_cast<int>(i), claimed[i].second});
    return pairs;
}

}  // namespace pals
