#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pals/matrix.hpp"

namespace pals {

// At most 64 classes; candidate sets are bitmasks.
inline constexpr int kMaxClasses = 64;

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Subset of the C classes attached to one sample.
class CandidateSet {
public:
    CandidateSet() = default;
    static CandidateSet singleton(int label) { return CandidateSet(1ULL << label); }

    bool contains(int label) const { return (bits_ >> label) & 1ULL; }
    void insert(int label) { bits_ |= 1ULL << label; }
    void remove(int label) { bits_ &= ~(1ULL << label); }
    CandidateSet unite(CandidateSet other) const { return CandidateSet(bits_ | other.bits_); }

    int size() const { return __builtin_popcountll(bits_); }
    bool empty() const { return bits_ == 0; }
    std::uint64_t bits() const { return bits_; }

    std::vector<int> members() const {
        std::vector<int> out;
        for (std::uint64_t b = bits_; b != 0; b &= b - 1) out.push_back(__builtin_ctzll(b));
        return out;
    }

    bool operator==(const CandidateSet&) const = default;

private:
    explicit CandidateSet(std::uint64_t bits) : bits_(bits) {}
    std::uint64_t bits_ = 0;
};

// Feature matrix, hidden true labels (evaluation only), and per-sample
// candidate label sets.
struct Dataset {
    Matrix features;                       // n x d
    std::vector<int> true_labels;          // n, each in [0, C)
    std::vector<CandidateSet> candidates;  // n, all non-empty
    int num_classes = 0;
    std::string split_tag = "train";

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
    void validate() const;
};

struct GenSpec {
    double partial_rate = 0.0;     // q
    double noise_rate = 0.0;       // eta
    int num_classes = 2;           // C
    int samples_per_class = 1;
    double class_mean_scale = 1.0;
    int feature_dim = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// Gaussian class blobs: C means uniform on the unit sphere scaled by
// class_mean_scale, unit normal noise per dimension, singleton candidates.
// Class means depend on the seed only, so train/test splits generated with
// the same seed share geometry.
Dataset synth_gaussian_dataset(const GenSpec& spec, const std::string& split_tag = "train");

// Independent per sample: each incorrect label joins with probability q,
// the true label is dropped with probability eta; an emptied set is repaired
// with one uniformly random incorrect label.
Dataset apply_partial_noise(const Dataset& ds, double q, double eta, std::uint64_t seed);

std::string serialize_dataset(const Dataset& ds);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset parse_dataset(const std::string& text);
Dataset load_dataset(const std::string& path);

// FNV-1a over the serialized form; used to guard report aggregation.
std::uint64_t dataset_hash(const Dataset& ds);

}  // namespace pals
