#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pals/matrix.hpp"

namespace pals {

struct Layer {
    Matrix weight;               // out x in
    std::vector<double> bias;    // out
};

// MLP encoder with rectifier activations plus a linear-softmax classifier.
// The last encoder layer's activation is the feature representation used for
// KNN. sizes = {input, hidden..., num_classes}; the classifier is the final
// transition, everything before it is the encoder.
struct Model {
    std::vector<Layer> layers;   // encoder layers + classifier (last)
    std::vector<int> sizes;

    static Model init(const std::vector<int>& sizes, std::uint64_t seed);

    int input_dim() const { return sizes.front(); }
    int num_classes() const { return sizes.back(); }
    int feature_dim() const { return sizes[sizes.size() - 2]; }
    std::size_t num_params() const;
};

struct ForwardCache {
    std::vector<Matrix> activations;  // per layer input: x, h1, ..., features
    Matrix probs;                     // batch x C, softmax rows
};

// Features come back as cache.activations.back(); probabilities in
// cache.probs (max-subtracted softmax).
void forward(const Model& model, const Matrix& batch, ForwardCache& cache);

struct Gradients {
    std::vector<Layer> layers;
    static Gradients zeros_like(const Model& model);
    void accumulate(const Gradients& other, double scale = 1.0);
};

// Backprop from dLoss/dlogits (one row per batch sample).
void backward(const Model& model, const ForwardCache& cache, const Matrix& dlogits,
              Gradients& grads);

struct OptState {
    std::vector<Layer> velocity;
    double base_lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-3;
    int t_max = 150;

    static OptState init(const Model& model, double lr, double momentum, double weight_decay,
                         int t_max);
    // Cosine decay from base_lr at t=0 to 0 at t=t_max.
    double lr_at(int t) const;
};

// v <- mu*v + (grad + wd*param); param <- param - lr*v.
// Weight decay applies to weights only.
void sgd_step(Model& model, const Gradients& grads, OptState& opt, double lr);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace pals
