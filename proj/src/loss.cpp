#include "pals/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pals {
namespace {

constexpr double kLogClamp = 1e-12;

// Mixed inputs/targets for one loss term. alpha=1 and kind=Weak with zero
// noise leaves the batch untouched.
void build_term(const Matrix& x_batch, const Matrix& targets, const AugSpec& aug, AugKind kind,
                bool apply_aug, bool mixup, double zeta, Rng& rng, Matrix& out_x,
                Matrix& out_t) {
    const std::size_t n = x_batch.rows;
    Matrix views(n, x_batch.cols);
    for (std::size_t i = 0; i < n; ++i) {
        if (apply_aug) {
            augment(x_batch.row(i), views.row(i), kind, aug, rng);
        } else {
            std::copy(x_batch.row(i).begin(), x_batch.row(i).end(), views.row(i).begin());
        }
    }
    const auto perm = rng.permutation(n);
    const double alpha = mixup ? rng.beta(zeta, zeta) : 1.0;

    out_x = Matrix(n, x_batch.cols);
    out_t = Matrix(n, targets.cols);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = perm[i];
        mixup_pair(views.row(i), views.row(j), alpha, out_x.row(i));
        // Cross-entropy is linear in the target, so the mixup loss equals
        // plain CE against the alpha-mixed target.
        mixup_pair(targets.row(i), targets.row(j), alpha, out_t.row(i));
    }
}

}  // namespace

std::vector<double> smooth_label(int label, double rate, int num_classes) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("smoothing rate must be in [0,1)");
    if (label < 0 || label >= num_classes) throw std::invalid_argument("label out of range");
    std::vector<double> out(static_cast<std::size_t>(num_classes), rate / num_classes);
    out[static_cast<std::size_t>(label)] += 1.0 - rate;
    return out;
}

double ls_cross_entropy(std::span<const double> probs, std::span<const double> target) {
    double loss = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j)
        loss -= target[j] * std::log(std::max(probs[j], kLogClamp));
    return loss;
}

void AugSpec::validate() const {
    if (!(weak_sigma >= 0.0) || !(strong_sigma >= 0.0) || weak_sigma >= strong_sigma)
        throw std::invalid_argument("augmentation requires 0 <= weak_sigma < strong_sigma");
    if (drop_fraction < 0.0 || drop_fraction >= 1.0)
        throw std::invalid_argument("drop_fraction must be in [0,1)");
}

std::vector<double> per_dimension_std(const Matrix& features) {
    std::vector<double> mean(features.cols, 0.0);
    std::vector<double> sq(features.cols, 0.0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto row = features.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            mean[j] += row[j];
            sq[j] += row[j] * row[j];
        }
    }
    const double n = static_cast<double>(features.rows);
    std::vector<double> out(features.cols);
    for (std::size_t j = 0; j < features.cols; ++j) {
        const double m = mean[j] / n;
        out[j] = std::sqrt(std::max(sq[j] / n - m * m, 0.0));
    }
    return out;
}

void augment(std::span<const double> x, std::span<double> out, AugKind kind, const AugSpec& spec,
             Rng& rng) {
    const double sigma = kind == AugKind::Weak ? spec.weak_sigma : spec.strong_sigma;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double unit = spec.feature_std.empty() ? 1.0 : spec.feature_std[j];
        out[j] = x[j] + sigma * unit * rng.normal();
    }
    if (kind == AugKind::Strong) {
        const auto drop = static_cast<std::size_t>(spec.drop_fraction *
                                                   static_cast<double>(x.size()));
        // Partial Fisher-Yates over the coordinate indices.
        std::vector<std::uint32_t> idx(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) idx[j] = static_cast<std::uint32_t>(j);
        for (std::size_t j = 0; j < drop; ++j) {
            const std::size_t pick = j + static_cast<std::size_t>(rng.below(x.size() - j));
            std::swap(idx[j], idx[pick]);
            out[idx[j]] = 0.0;
        }
    }
}

void mixup_pair(std::span<const double> xi, std::span<const double> xj, double alpha,
                std::span<double> out) {
    for (std::size_t j = 0; j < xi.size(); ++j) out[j] = alpha * xi[j] + (1.0 - alpha) * xj[j];
}

double mixup_loss(std::span<const double> probs_mix, std::span<const double> target_i,
                  std::span<const double> target_j, double alpha) {
    return alpha * ls_cross_entropy(probs_mix, target_i) +
           (1.0 - alpha) * ls_cross_entropy(probs_mix, target_j);
}

BatchPlan build_batch_plan(const Matrix& x_batch, const Matrix& targets, const AugSpec& aug,
                           const LossFlags& flags, Rng& rng) {
    BatchPlan plan;
    if (x_batch.rows == 0) return plan;
    if (flags.consistency) {
        plan.inputs.resize(2);
        plan.targets.resize(2);
        build_term(x_batch, targets, aug, AugKind::Weak, true, flags.mixup, flags.mix_zeta, rng,
                   plan.inputs[0], plan.targets[0]);
        build_term(x_batch, targets, aug, AugKind::Strong, true, flags.mixup, flags.mix_zeta, rng,
                   plan.inputs[1], plan.targets[1]);
    } else {
        plan.inputs.resize(1);
        plan.targets.resize(1);
        build_term(x_batch, targets, aug, AugKind::Weak, false, flags.mixup, flags.mix_zeta, rng,
                   plan.inputs[0], plan.targets[0]);
    }
    return plan;
}

double batch_loss(const Model& model, const BatchPlan& plan, Gradients* grads) {
    double total = 0.0;
    ForwardCache cache;
    for (std::size_t term = 0; term < plan.inputs.size(); ++term) {
        const Matrix& x = plan.inputs[term];
        const Matrix& t = plan.targets[term];
        if (x.rows == 0) continue;
        forward(model, x, cache);
        const double inv_n = 1.0 / static_cast<double>(x.rows);
        for (std::size_t i = 0; i < x.rows; ++i)
            total += inv_n * ls_cross_entropy(cache.probs.row(i), t.row(i));
        if (grads) {
            // d(mean CE)/dlogits = (p - target)/n for normalized targets.
            Matrix dlogits(x.rows, t.cols);
            for (std::size_t i = 0; i < x.rows; ++i) {
                const auto p = cache.probs.row(i);
                const auto tr = t.row(i);
                auto d = dlogits.row(i);
                for (std::size_t j = 0; j < t.cols; ++j) d[j] = inv_n * (p[j] - tr[j]);
            }
            backward(model, cache, dlogits, *grads);
        }
    }
    return total;
}

}  // namespace pals
