#pragma once

#include <span>
#include <vector>

#include "pals/matrix.hpp"
#include "pals/model.hpp"
#include "pals/rng.hpp"

namespace pals {

// (1-r)*onehot(y) + (r/C)*uniform.
std::vector<double> smooth_label(int label, double rate, int num_classes);

// -sum_j target_j * log(max(p_j, 1e-12)).
double ls_cross_entropy(std::span<const double> probs, std::span<const double> target);

// Vector-space augmentations; sigmas are relative to the per-dimension
// feature standard deviation so they are dataset-scale-free.
struct AugSpec {
    double weak_sigma = 0.05;
    double strong_sigma = 0.2;
    double drop_fraction = 0.25;        // fraction of coordinates zeroed (strong)
    std::vector<double> feature_std;    // per-dimension, from the training set

    void validate() const;
};

std::vector<double> per_dimension_std(const Matrix& features);

enum class AugKind { Weak, Strong };

// Weak: additive Gaussian noise. Strong: larger noise, then exactly
// floor(drop_fraction*d) random coordinates zeroed (cutout analog).
void augment(std::span<const double> x, std::span<double> out, AugKind kind, const AugSpec& spec,
             Rng& rng);

void mixup_pair(std::span<const double> xi, std::span<const double> xj, double alpha,
                std::span<double> out);

// alpha*CE(p, target_i) + (1-alpha)*CE(p, target_j).
double mixup_loss(std::span<const double> probs_mix, std::span<const double> target_i,
                  std::span<const double> target_j, double alpha);

struct LossFlags {
    bool mixup = true;
    bool consistency = true;
    double mix_zeta = 1.0;  // Beta parameter for the mixup draw
};

// One training term: already-augmented mixed inputs and their mixed targets.
// With consistency on there are two terms (weak and strong views, independent
// mixup pairings); off, a single unaugmented term. With mixup off alpha is
// forced to 1.
struct BatchPlan {
    std::vector<Matrix> inputs;
    std::vector<Matrix> targets;
};

BatchPlan build_batch_plan(const Matrix& x_batch, const Matrix& targets, const AugSpec& aug,
                           const LossFlags& flags, Rng& rng);

// Sum over terms of the mean per-sample cross-entropy; accumulates exact
// analytical gradients when grads is non-null. Empty plans are a no-op
// returning 0.
double batch_loss(const Model& model, const BatchPlan& plan, Gradients* grads);

}  // namespace pals
