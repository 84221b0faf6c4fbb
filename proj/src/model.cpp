#include "pals/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pals/rng.hpp"

namespace pals {
namespace {

void matvec_forward(const Layer& layer, const Matrix& in, Matrix& out, bool relu) {
    out = Matrix(in.rows, layer.weight.rows);
    for (std::size_t i = 0; i < in.rows; ++i) {
        const auto x = in.row(i);
        auto y = out.row(i);
        for (std::size_t o = 0; o < layer.weight.rows; ++o) {
            double acc = layer.bias[o];
            const auto w = layer.weight.row(o);
            for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
            y[o] = relu ? std::max(acc, 0.0) : acc;
        }
    }
}

void append_double(std::string& out, double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, end);
}

}  // namespace

Model Model::init(const std::vector<int>& sizes, std::uint64_t seed) {
    if (sizes.size() < 2) throw std::invalid_argument("model needs at least input and output sizes");
    for (int s : sizes)
        if (s < 1) throw std::invalid_argument("layer sizes must be positive");
    Model m;
    m.sizes = sizes;
    Rng rng{Rng::mix(seed, 0x4d4f44454cULL)};
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Layer layer;
        const auto fan_in = static_cast<std::size_t>(sizes[l]);
        const auto fan_out = static_cast<std::size_t>(sizes[l + 1]);
        layer.weight = Matrix(fan_out, fan_in);
        layer.bias.assign(fan_out, 0.0);
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& w : layer.weight.data) w = stddev * rng.normal();
        m.layers.push_back(std::move(layer));
    }
    return m;
}

std::size_t Model::num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
    return n;
}

void forward(const Model& model, const Matrix& batch, ForwardCache& cache) {
    if (batch.cols != static_cast<std::size_t>(model.input_dim()))
        throw std::invalid_argument("forward: batch width does not match model input dim");
    cache.activations.clear();
    cache.activations.push_back(batch);
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        Matrix next;
        matvec_forward(model.layers[l], cache.activations.back(), next, /*relu=*/true);
        cache.activations.push_back(std::move(next));
    }
    Matrix logits;
    matvec_forward(model.layers.back(), cache.activations.back(), logits, /*relu=*/false);
    cache.probs = std::move(logits);
    for (std::size_t i = 0; i < cache.probs.rows; ++i) {
        auto row = cache.probs.row(i);
        const double peak = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (auto& v : row) {
            v = std::exp(v - peak);
            z += v;
        }
        for (auto& v : row) v /= z;
    }
}

Gradients Gradients::zeros_like(const Model& model) {
    Gradients g;
    for (const auto& l : model.layers) {
        Layer zero;
        zero.weight = Matrix(l.weight.rows, l.weight.cols);
        zero.bias.assign(l.bias.size(), 0.0);
        g.layers.push_back(std::move(zero));
    }
    return g;
}

void Gradients::accumulate(const Gradients& other, double scale) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t i = 0; i < layers[l].weight.data.size(); ++i)
            layers[l].weight.data[i] += scale * other.layers[l].weight.data[i];
        for (std::size_t i = 0; i < layers[l].bias.size(); ++i)
            layers[l].bias[i] += scale * other.layers[l].bias[i];
    }
}

void backward(const Model& model, const ForwardCache& cache, const Matrix& dlogits,
              Gradients& grads) {
    Matrix delta = dlogits;  // dLoss/d(pre-activation) of the current layer
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        const Matrix& input = cache.activations[l];
        Layer& g = grads.layers[l];
        for (std::size_t i = 0; i < delta.rows; ++i) {
            const auto d = delta.row(i);
            const auto x = input.row(i);
            for (std::size_t o = 0; o < d.size(); ++o) {
                g.bias[o] += d[o];
                auto gw = g.weight.row(o);
                for (std::size_t j = 0; j < x.size(); ++j) gw[j] += d[o] * x[j];
            }
        }
        if (l == 0) break;
        const Layer& layer = model.layers[l];
        Matrix prev(delta.rows, layer.weight.cols);
        for (std::size_t i = 0; i < delta.rows; ++i) {
            const auto d = delta.row(i);
            auto p = prev.row(i);
            for (std::size_t o = 0; o < d.size(); ++o) {
                const auto w = layer.weight.row(o);
                for (std::size_t j = 0; j < p.size(); ++j) p[j] += d[o] * w[j];
            }
            // Rectifier gate: the cached activation is the post-ReLU output.
            const auto act = input.row(i);
            for (std::size_t j = 0; j < p.size(); ++j)
                if (act[j] <= 0.0) p[j] = 0.0;
        }
        delta = std::move(prev);
    }
}

OptState OptState::init(const Model& model, double lr, double momentum, double weight_decay,
                        int t_max) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    OptState opt;
    opt.base_lr = lr;
    opt.momentum = momentum;
    opt.weight_decay = weight_decay;
    opt.t_max = t_max;
    opt.velocity = Gradients::zeros_like(model).layers;
    return opt;
}

double OptState::lr_at(int t) const {
    if (t_max <= 0) return base_lr;
    const double frac = static_cast<double>(t) / static_cast<double>(t_max);
    return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

void sgd_step(Model& model, const Gradients& grads, OptState& opt, double lr) {
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        Layer& p = model.layers[l];
        const Layer& g = grads.layers[l];
        Layer& v = opt.velocity[l];
        for (std::size_t i = 0; i < p.weight.data.size(); ++i) {
            v.weight.data[i] = opt.momentum * v.weight.data[i] +
                               (g.weight.data[i] + opt.weight_decay * p.weight.data[i]);
            p.weight.data[i] -= lr * v.weight.data[i];
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            v.bias[i] = opt.momentum * v.bias[i] + g.bias[i];
            p.bias[i] -= lr * v.bias[i];
        }
    }
}

void save_model(const Model& model, const std::string& path) {
    std::string out = "pals-model v1 layers=" + std::to_string(model.sizes.size());
    for (int s : model.sizes) out += " " + std::to_string(s);
    out += "\n";
    for (const auto& layer : model.layers) {
        for (std::size_t i = 0; i < layer.weight.data.size(); ++i) {
            if (i) out += ' ';
            append_double(out, layer.weight.data[i]);
        }
        out += '\n';
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            if (i) out += ' ';
            append_double(out, layer.bias[i]);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

Model load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::string header;
    std::getline(f, header);
    std::istringstream hs(header);
    std::string magic;
    std::string version;
    std::string layers_field;
    hs >> magic >> version >> layers_field;
    if (magic != "pals-model" || version != "v1" || layers_field.rfind("layers=", 0) != 0)
        throw std::runtime_error("not a pals-model v1 file");
    const int count = std::stoi(layers_field.substr(7));
    std::vector<int> sizes(static_cast<std::size_t>(count));
    for (auto& s : sizes)
        if (!(hs >> s)) throw std::runtime_error("truncated model header");

    Model m = Model::init(sizes, 0);
    for (auto& layer : m.layers) {
        for (auto& w : layer.weight.data)
            if (!(f >> w)) throw std::runtime_error("truncated model weights");
        for (auto& b : layer.bias)
            if (!(f >> b)) throw std::runtime_error("truncated model biases");
    }
    return m;
}

}  // namespace pals
