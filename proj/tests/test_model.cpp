#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "pals/dataset.hpp"
#include "pals/loss.hpp"
#include "pals/model.hpp"
#include "pals/rng.hpp"
#include "pals/trainer.hpp"

using namespace pals;

namespace {

Matrix random_batch(std::size_t n, std::size_t d, Rng& rng) {
    Matrix m(n, d);
    for (auto& v : m.data) v = rng.normal();
    return m;
}

std::vector<double*> param_view(Model& m) {
    std::vector<double*> out;
    for (auto& layer : m.layers) {
        for (auto& w : layer.weight.data) out.push_back(&w);
        for (auto& b : layer.bias) out.push_back(&b);
    }
    return out;
}

std::vector<double> grad_flat(const Gradients& g) {
    std::vector<double> out;
    for (const auto& layer : g.layers) {
        out.insert(out.end(), layer.weight.data.begin(), layer.weight.data.end());
        out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    }
    return out;
}

// Central finite differences against batch_loss over every parameter.
double max_relative_grad_error(Model& model, const BatchPlan& plan) {
    Gradients grads = Gradients::zeros_like(model);
    batch_loss(model, plan, &grads);
    const std::vector<double> analytic = grad_flat(grads);
    const auto params = param_view(model);
    const double eps = 1e-5;
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double saved = *params[p];
        *params[p] = saved + eps;
        const double up = batch_loss(model, plan, nullptr);
        *params[p] = saved - eps;
        const double down = batch_loss(model, plan, nullptr);
        *params[p] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[p]), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic[p]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("zero parameters give uniform probabilities") {
    Model m = Model::init({5, 8, 4}, 0);
    for (auto& layer : m.layers) {
        layer.weight.fill(0.0);
        layer.bias.assign(layer.bias.size(), 0.0);
    }
    Rng rng(3);
    ForwardCache cache;
    forward(m, random_batch(6, 5, rng), cache);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 4; ++c) CHECK(cache.probs(i, c) == doctest::Approx(0.25));
}

TEST_CASE("probability rows sum to one") {
    Rng rng(4);
    Model m = Model::init({7, 16, 8, 5}, 12);
    ForwardCache cache;
    forward(m, random_batch(10, 7, rng), cache);
    for (std::size_t i = 0; i < 10; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) s += cache.probs(i, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("softmax is shift invariant") {
    Rng rng(5);
    Model m = Model::init({4, 6, 3}, 9);
    const Matrix batch = random_batch(4, 4, rng);
    ForwardCache a;
    forward(m, batch, a);
    for (auto& b : m.layers.back().bias) b += 100.0;  // shifts every logit equally
    ForwardCache shifted;
    forward(m, batch, shifted);
    for (std::size_t i = 0; i < a.probs.data.size(); ++i)
        CHECK(a.probs.data[i] == doctest::Approx(shifted.probs.data[i]).epsilon(1e-12));
}

TEST_CASE("width mismatch raises a shape error") {
    Model m = Model::init({4, 6, 3}, 9);
    Rng rng(6);
    ForwardCache cache;
    CHECK_THROWS_AS(forward(m, random_batch(2, 5, rng), cache), std::invalid_argument);
}

TEST_CASE("backward matches finite differences on plain LS-CE") {
    Rng rng(42);
    Model m = Model::init({6, 10, 6, 4}, 77);
    const Matrix batch = random_batch(8, 6, rng);
    Matrix targets(8, 4);
    for (std::size_t i = 0; i < 8; ++i) {
        const auto t = smooth_label(static_cast<int>(rng.below(4)), 0.5, 4);
        std::copy(t.begin(), t.end(), targets.row(i).begin());
    }
    BatchPlan plan;
    plan.inputs = {batch};
    plan.targets = {targets};
    CHECK(max_relative_grad_error(m, plan) < 1e-5);
}

TEST_CASE("zero loss gradient means zero parameter gradients") {
    Model m = Model::init({3, 5, 2}, 8);
    Rng rng(9);
    const Matrix batch = random_batch(4, 3, rng);
    ForwardCache cache;
    forward(m, batch, cache);
    Gradients grads = Gradients::zeros_like(m);
    backward(m, cache, Matrix(4, 2), grads);
    for (double g : grad_flat(grads)) CHECK(g == 0.0);
}

TEST_CASE("duplicated samples double their gradient contribution") {
    Model m = Model::init({3, 4, 2}, 15);
    Rng rng(10);
    const Matrix one = random_batch(1, 3, rng);
    Matrix two(2, 3);
    std::copy(one.row(0).begin(), one.row(0).end(), two.row(0).begin());
    std::copy(one.row(0).begin(), one.row(0).end(), two.row(1).begin());

    Matrix d1(1, 2);
    d1(0, 0) = 0.3;
    d1(0, 1) = -0.3;
    Matrix d2(2, 2);
    for (std::size_t i = 0; i < 2; ++i) {
        d2(i, 0) = 0.3;
        d2(i, 1) = -0.3;
    }
    ForwardCache c1;
    ForwardCache c2;
    forward(m, one, c1);
    forward(m, two, c2);
    Gradients g1 = Gradients::zeros_like(m);
    Gradients g2 = Gradients::zeros_like(m);
    backward(m, c1, d1, g1);
    backward(m, c2, d2, g2);
    const auto f1 = grad_flat(g1);
    const auto f2 = grad_flat(g2);
    for (std::size_t i = 0; i < f1.size(); ++i)
        CHECK(f2[i] == doctest::Approx(2.0 * f1[i]).epsilon(1e-12));
}

TEST_CASE("sgd without momentum or decay is a plain gradient step") {
    Model m = Model::init({2, 3, 2}, 1);
    const Model before = m;
    Gradients g = Gradients::zeros_like(m);
    for (auto& layer : g.layers)
        for (auto& w : layer.weight.data) w = 0.5;
    OptState opt = OptState::init(m, 0.1, 0.0, 0.0, 10);
    sgd_step(m, g, opt, 0.1);
    for (std::size_t l = 0; l < m.layers.size(); ++l)
        for (std::size_t i = 0; i < m.layers[l].weight.data.size(); ++i)
            CHECK(m.layers[l].weight.data[i] ==
                  doctest::Approx(before.layers[l].weight.data[i] - 0.05));
}

TEST_CASE("cosine schedule endpoints") {
    Model m = Model::init({2, 2}, 1);
    OptState opt = OptState::init(m, 0.05, 0.9, 1e-3, 150);
    CHECK(opt.lr_at(0) == doctest::Approx(0.05));
    CHECK(opt.lr_at(150) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(opt.lr_at(75) == doctest::Approx(0.025));
}

TEST_CASE("momentum unrolls to the hand-computed displacement") {
    // Two steps, mu=0.9, wd=0, constant gradient: total displacement
    // lr*(1 + 1.9)*g.
    Model m = Model::init({1, 1}, 2);
    m.layers[0].weight(0, 0) = 1.0;
    Gradients g = Gradients::zeros_like(m);
    g.layers[0].weight(0, 0) = 0.2;
    OptState opt = OptState::init(m, 0.1, 0.9, 0.0, 10);
    sgd_step(m, g, opt, 0.1);
    sgd_step(m, g, opt, 0.1);
    CHECK(m.layers[0].weight(0, 0) == doctest::Approx(1.0 - 0.1 * 2.9 * 0.2).epsilon(1e-12));
}

TEST_CASE("identical seeds give identical initializations") {
    const Model a = Model::init({5, 8, 3}, 123);
    const Model b = Model::init({5, 8, 3}, 123);
    const Model c = Model::init({5, 8, 3}, 124);
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        CHECK(a.layers[l].weight.data == b.layers[l].weight.data);
    CHECK(a.layers[0].weight.data != c.layers[0].weight.data);
}

TEST_CASE("supervised training reaches 99% train accuracy on separable data") {
    GenSpec spec;
    spec.num_classes = 4;
    spec.samples_per_class = 50;
    spec.feature_dim = 8;
    spec.class_mean_scale = 6.0;
    spec.seed = 31;
    const Dataset train = synth_gaussian_dataset(spec);
    RunConfig config;
    config.epochs = 100;
    config.batch_size = 32;
    config.hidden = {64, 32};
    const TrainResult result = baseline_supervised(config, train, train);
    CHECK(evaluate(result.model, train) >= 0.99);
}

TEST_CASE("model checkpoint round trip is exact") {
    const Model m = Model::init({6, 12, 5, 3}, 55);
    const std::string path = "model_roundtrip.txt";
    save_model(m, path);
    const Model back = load_model(path);
    CHECK(back.sizes == m.sizes);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK(back.layers[l].weight.data == m.layers[l].weight.data);
        CHECK(back.layers[l].bias == m.layers[l].bias);
    }
    std::remove(path.c_str());
}
