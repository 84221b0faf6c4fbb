#pragma once

#include <vector>

#include "pals/dataset.hpp"
#include "pals/matrix.hpp"

namespace pals {

// K nearest neighbours per sample under cosine similarity, sorted by
// descending similarity (ties toward the lower index). The query sample is
// excluded from its own list.
struct NeighborList {
    int k = 0;
    std::vector<int> index;     // n*k
    std::vector<double> sim;    // n*k

    std::size_t count() const { return k == 0 ? 0 : index.size() / static_cast<std::size_t>(k); }
    int neighbor(std::size_t i, int j) const { return index[i * static_cast<std::size_t>(k) + j]; }
    double similarity(std::size_t i, int j) const {
        return sim[i * static_cast<std::size_t>(k) + j];
    }
};

// Exact O(n^2) search over the feature bank. Zero-norm rows get similarity 0
// to everything. num_threads <= 0 means auto (hardware, capped by the
// PALS_THREADS environment variable); the result is schedule-independent.
NeighborList knn_search(const Matrix& bank, int k, int num_threads = 0);

// K nearest rows of `bank` for each row of `queries` (no self-exclusion).
NeighborList knn_cross(const Matrix& queries, const Matrix& bank, int k, int num_threads = 0);

// Weighted vote over the neighbours' candidate sets; argmax ties go to the
// lower class index.
std::vector<int> weighted_pseudo_labels(const NeighborList& nbrs,
                                        const std::vector<CandidateSet>& candidates,
                                        int num_classes);

// Unweighted majority vote over neighbour candidate sets (KNN baseline).
std::vector<int> majority_vote_labels(const NeighborList& nbrs,
                                      const std::vector<CandidateSet>& candidates,
                                      int num_classes);

// Similarity-weighted class posterior from neighbour pseudo-labels; rows with
// |normalizer| <= 1e-12 fall back to uniform.
Matrix knn_posteriors(const NeighborList& nbrs, const std::vector<int>& pseudo_labels,
                      int num_classes);

struct ClassBudget {
    std::vector<long> agreements;  // a_c per class
    long budget = 0;               // m
};

// a_c counts samples whose posterior argmax is c with c in the candidate set;
// m is the lower nearest-rank delta-quantile of the sorted agreement counts.
ClassBudget class_budget(const Matrix& posteriors, const std::vector<CandidateSet>& candidates,
                         double delta);

struct ReliablePair {
    int sample = 0;
    int label = 0;
    bool operator==(const ReliablePair&) const = default;
};

// Per class, the top-m eligible samples by posterior; samples claimed by
// several classes keep only their highest-posterior class. Output is sorted
// by sample index.
std::vector<ReliablePair> select_reliable(const Matrix& posteriors,
                                          const std::vector<CandidateSet>& candidates, long budget);

}  // namespace pals
