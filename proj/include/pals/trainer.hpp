#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pals/dataset.hpp"
#include "pals/loss.hpp"
#include "pals/model.hpp"
#include "pals/pseudo.hpp"

namespace pals {

struct RunConfig {
    int knn_k = 15;
    double delta = 0.25;
    double zeta = 1.0;
    double smoothing = 0.5;        // r
    double lambda_max = 0.45;
    double lambda_min = 0.35;
    double partial_rate = 0.3;     // q (dataset metadata, echoed in summaries)
    double noise_rate = 0.3;       // eta
    int epochs = 150;              // T_max
    int batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-3;
    bool mixup = true;
    bool consistency = true;
    std::uint64_t seed = 1;
    std::vector<int> hidden = {64, 32};
    double weak_sigma = 0.05;
    double strong_sigma = 0.2;
    double drop_fraction = 0.25;

    void validate() const;
};

// Paper-scale schedule kept as a named preset (500 epochs, lr 0.1).
RunConfig paper_scale_preset();

struct EpochMetrics {
    int epoch = 0;            // 1-based
    double lambda = 0.0;
    long budget = 0;          // m
    long n_selected = 0;      // |T|
    long n_correct = 0;       // selected pairs matching the hidden truth
    double pseudo_acc = 0.0;  // over all n samples
    double train_loss = 0.0;
    double test_acc = 0.0;
};

// Linear decay from lambda_max at t=1 to lambda_min at t=t_max.
double lambda_schedule(int t, int t_max, double lambda_max, double lambda_min);

// Next-epoch working sets, always rebuilt from the original candidates:
// add the confident top-1 prediction on a weakly augmented view.
std::vector<CandidateSet> augment_candidates(const Model& model, const Matrix& features,
                                             const std::vector<CandidateSet>& original,
                                             double lambda, const AugSpec& aug, Rng& rng);

// Top-1 accuracy against hidden true labels, no augmentation.
double evaluate(const Model& model, const Dataset& test);

struct TrainResult {
    Model model;
    std::vector<EpochMetrics> series;
};

TrainResult run_training(const RunConfig& config, const Dataset& train, const Dataset& test);

// Baselines. naive: LS-CE on one uniformly drawn candidate per sample per
// epoch; supervised: hidden true labels (oracle upper bound); knn_majority:
// single-pass unweighted neighbour vote on raw input features.
TrainResult baseline_supervised(const RunConfig& config, const Dataset& train,
                                const Dataset& test);
TrainResult baseline_naive_ce(const RunConfig& config, const Dataset& train, const Dataset& test);
double baseline_knn_majority(const RunConfig& config, const Dataset& train, const Dataset& test);

// CSV: one row per epoch, columns
// epoch,lambda,m,n_selected,n_correct,pseudo_acc,train_loss,test_acc
std::string metrics_csv(const std::vector<EpochMetrics>& series);
void write_metrics_csv(const std::vector<EpochMetrics>& series, const std::string& path);

}  // namespace pals
