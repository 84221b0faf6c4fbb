#include "pals/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace pals {
namespace {

constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kPlanStream = 3;
constexpr std::uint64_t kAugCandStream = 4;
constexpr std::uint64_t kNaiveDrawStream = 5;

int argmax_low_tie(std::span<const double> row) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(row.size()); ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

void append_double(std::string& out, double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, end);
}

std::vector<int> model_sizes(const RunConfig& config, const Dataset& train) {
    std::vector<int> sizes;
    sizes.push_back(static_cast<int>(train.dim()));
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(train.num_classes);
    return sizes;
}

AugSpec make_aug_spec(const RunConfig& config, const Dataset& train) {
    AugSpec aug;
    aug.weak_sigma = config.weak_sigma;
    aug.strong_sigma = config.strong_sigma;
    aug.drop_fraction = config.drop_fraction;
    aug.feature_std = per_dimension_std(train.features);
    aug.validate();
    return aug;
}

// Shared scaffolding for the gradient baselines: per-epoch label assignment
// differs, everything else matches the main loop's optimizer setup.
template <typename LabelFn>
TrainResult gradient_baseline(const RunConfig& config, const Dataset& train, const Dataset& test,
                              LabelFn&& label_for) {
    config.validate();
    train.validate();
    const Rng master(config.seed);
    Model model = Model::init(model_sizes(config, train), Rng::mix(config.seed, kModelStream));
    OptState opt = OptState::init(model, config.lr, config.momentum, config.weight_decay,
                                  config.epochs);
    const std::size_t n = train.size();
    const int c = train.num_classes;

    TrainResult result{std::move(model), {}};
    AugSpec no_aug;  // plain LS-CE: no augmentation, no mixup
    LossFlags flags{.mixup = false, .consistency = false, .mix_zeta = config.zeta};

    for (int t = 1; t <= config.epochs; ++t) {
        Rng shuffle_rng = master.fork(Rng::mix(kShuffleStream, static_cast<std::uint64_t>(t)));
        Rng draw_rng = master.fork(Rng::mix(kNaiveDrawStream, static_cast<std::uint64_t>(t)));
        const auto order = shuffle_rng.permutation(n);
        const double lr = opt.lr_at(t - 1);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            Matrix x(stop - start, train.dim());
            Matrix targets(stop - start, static_cast<std::size_t>(c));
            for (std::size_t b = 0; b < stop - start; ++b) {
                const std::size_t i = order[start + b];
                std::copy(train.features.row(i).begin(), train.features.row(i).end(),
                          x.row(b).begin());
                const auto smoothed = smooth_label(label_for(i, draw_rng), config.smoothing, c);
                std::copy(smoothed.begin(), smoothed.end(), targets.row(b).begin());
            }
            Rng plan_rng = master.fork(Rng::mix(kPlanStream, Rng::mix(t, start)));
            const BatchPlan plan = build_batch_plan(x, targets, no_aug, flags, plan_rng);
            Gradients grads = Gradients::zeros_like(result.model);
            loss_sum += batch_loss(result.model, plan, &grads);
            sgd_step(result.model, grads, opt, lr);
            ++batches;
        }
        EpochMetrics em;
        em.epoch = t;
        em.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
        em.test_acc = evaluate(result.model, test);
        result.series.push_back(em);
    }
    return result;
}

}  // namespace

void RunConfig::validate() const {
    if (knn_k < 1) throw ConfigError("knn_k must be positive");
    if (delta < 0.0 || delta > 1.0) throw ConfigError("delta must be in [0,1]");
    if (!(zeta > 0.0)) throw ConfigError("zeta must be positive");
    if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("smoothing must be in [0,1)");
    if (lambda_max < lambda_min) throw ConfigError("lambda_max must be >= lambda_min");
    if (partial_rate < 0.0 || partial_rate >= 1.0) throw ConfigError("partial_rate must be in [0,1)");
    if (noise_rate < 0.0 || noise_rate >= 1.0) throw ConfigError("noise_rate must be in [0,1)");
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (batch_size < 1 || (mixup && batch_size < 2))
        throw ConfigError("batch_size must be >= 2 with mixup enabled");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    for (int h : hidden)
        if (h < 1) throw ConfigError("hidden sizes must be positive");
    if (weak_sigma < 0.0 || weak_sigma >= strong_sigma)
        throw ConfigError("need 0 <= weak_sigma < strong_sigma");
    if (drop_fraction < 0.0 || drop_fraction >= 1.0)
        throw ConfigError("drop_fraction must be in [0,1)");
}

RunConfig paper_scale_preset() {
    RunConfig c;
    c.epochs = 500;
    c.lr = 0.1;
    return c;
}

double lambda_schedule(int t, int t_max, double lambda_max, double lambda_min) {
    if (t_max <= 1) return lambda_max;
    return lambda_max - (lambda_max - lambda_min) * static_cast<double>(t - 1) /
                            static_cast<double>(t_max - 1);
}

std::vector<CandidateSet> augment_candidates(const Model& model, const Matrix& features,
                                             const std::vector<CandidateSet>& original,
                                             double lambda, const AugSpec& aug, Rng& rng) {
    Matrix views(features.rows, features.cols);
    for (std::size_t i = 0; i < features.rows; ++i)
        augment(features.row(i), views.row(i), AugKind::Weak, aug, rng);
    ForwardCache cache;
    forward(model, views, cache);

    std::vector<CandidateSet> working = original;
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto p = cache.probs.row(i);
        const int top = argmax_low_tie(p);
        if (p[static_cast<std::size_t>(top)] > lambda) working[i].insert(top);
    }
    return working;
}

double evaluate(const Model& model, const Dataset& test) {
    ForwardCache cache;
    forward(model, test.features, cache);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (argmax_low_tie(cache.probs.row(i)) == test.true_labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

TrainResult run_training(const RunConfig& config, const Dataset& train, const Dataset& test) {
    config.validate();
    train.validate();
    test.validate();
    if (train.size() <= static_cast<std::size_t>(config.knn_k))
        throw ConfigError("knn_k must be smaller than the training set");

    const Rng master(config.seed);
    Model model = Model::init(model_sizes(config, train), Rng::mix(config.seed, kModelStream));
    OptState opt = OptState::init(model, config.lr, config.momentum, config.weight_decay,
                                  config.epochs);
    const AugSpec aug = make_aug_spec(config, train);
    const LossFlags flags{.mixup = config.mixup, .consistency = config.consistency,
                          .mix_zeta = config.zeta};
    const std::size_t n = train.size();
    const int c = train.num_classes;

    std::vector<CandidateSet> working = train.candidates;
    TrainResult result{std::move(model), {}};
    ForwardCache cache;

    for (int t = 1; t <= config.epochs; ++t) {
        // Feature bank from the current encoder, evaluation mode.
        forward(result.model, train.features, cache);
        const Matrix& bank = cache.activations.back();

        const NeighborList nbrs = knn_search(bank, config.knn_k);
        const std::vector<int> pseudo = weighted_pseudo_labels(nbrs, working, c);
        const Matrix posteriors = knn_posteriors(nbrs, pseudo, c);
        const ClassBudget budget = class_budget(posteriors, working, config.delta);
        std::vector<ReliablePair> pairs = select_reliable(posteriors, working, budget.budget);

        EpochMetrics em;
        em.epoch = t;
        em.lambda = lambda_schedule(t, config.epochs, config.lambda_max, config.lambda_min);
        em.budget = budget.budget;
        em.n_selected = static_cast<long>(pairs.size());
        for (const auto& pair : pairs)
            if (pair.label == train.true_labels[static_cast<std::size_t>(pair.sample)])
                ++em.n_correct;
        std::size_t pseudo_hits = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (pseudo[i] == train.true_labels[i]) ++pseudo_hits;
        em.pseudo_acc = static_cast<double>(pseudo_hits) / static_cast<double>(n);

        // Mini-batch training on the reliable set; skipped when empty.
        const double lr = opt.lr_at(t - 1);
        Rng shuffle_rng = master.fork(Rng::mix(kShuffleStream, static_cast<std::uint64_t>(t)));
        const auto order = shuffle_rng.permutation(pairs.size());
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < pairs.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(pairs.size(), start + static_cast<std::size_t>(config.batch_size));
            Matrix x(stop - start, train.dim());
            Matrix targets(stop - start, static_cast<std::size_t>(c));
            for (std::size_t b = 0; b < stop - start; ++b) {
                const ReliablePair& pair = pairs[order[start + b]];
                const auto row = train.features.row(static_cast<std::size_t>(pair.sample));
                std::copy(row.begin(), row.end(), x.row(b).begin());
                const auto smoothed = smooth_label(pair.label, config.smoothing, c);
                std::copy(smoothed.begin(), smoothed.end(), targets.row(b).begin());
            }
            Rng plan_rng = master.fork(Rng::mix(kPlanStream, Rng::mix(t, start)));
            const BatchPlan plan = build_batch_plan(x, targets, aug, flags, plan_rng);
            Gradients grads = Gradients::zeros_like(result.model);
            loss_sum += batch_loss(result.model, plan, &grads);
            sgd_step(result.model, grads, opt, lr);
            ++batches;
        }
        em.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;

        // Partial label augmentation for the next epoch, from the original sets.
        Rng aug_rng = master.fork(Rng::mix(kAugCandStream, static_cast<std::uint64_t>(t)));
        working = augment_candidates(result.model, train.features, train.candidates, em.lambda,
                                     aug, aug_rng);

        em.test_acc = evaluate(result.model, test);
        result.series.push_back(em);
    }
    return result;
}

TrainResult baseline_supervised(const RunConfig& config, const Dataset& train,
                                const Dataset& test) {
    return gradient_baseline(config, train, test,
                             [&](std::size_t i, Rng&) { return train.true_labels[i]; });
}

TrainResult baseline_naive_ce(const RunConfig& config, const Dataset& train, const Dataset& test) {
    return gradient_baseline(config, train, test, [&](std::size_t i, Rng& rng) {
        const auto members = train.candidates[i].members();
        return members[static_cast<std::size_t>(rng.below(members.size()))];
    });
}

double baseline_knn_majority(const RunConfig& config, const Dataset& train, const Dataset& test) {
    const NeighborList nbrs = knn_cross(test.features, train.features, config.knn_k);
    const std::vector<int> votes = majority_vote_labels(nbrs, train.candidates, train.num_classes);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (votes[i] == test.true_labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::string metrics_csv(const std::vector<EpochMetrics>& series) {
    std::string out = "epoch,lambda,m,n_selected,n_correct,pseudo_acc,train_loss,test_acc\n";
    for (const auto& em : series) {
        out += std::to_string(em.epoch) + ",";
        append_double(out, em.lambda);
        out += "," + std::to_string(em.budget) + "," + std::to_string(em.n_selected) + "," +
               std::to_string(em.n_correct) + ",";
        append_double(out, em.pseudo_acc);
        out += ",";
        append_double(out, em.train_loss);
        out += ",";
        append_double(out, em.test_acc);
        out += "\n";
    }
    return out;
}

void write_metrics_csv(const std::vector<EpochMetrics>& series, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    const std::string text = metrics_csv(series);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace pals
