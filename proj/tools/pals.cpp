#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pals/dataset.hpp"
#include "pals/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct GenArgs {
    pals::GenSpec spec;
    int test_per_class = 100;
    std::string out_prefix = "dataset";
};

int run_gen(const GenArgs& args) {
    pals::Dataset train = pals::synth_gaussian_dataset(args.spec, "train");
    train = pals::apply_partial_noise(train, args.spec.partial_rate, args.spec.noise_rate,
                                      pals::Rng::mix(args.spec.seed, 0x4e4f495345ULL));
    pals::GenSpec test_spec = args.spec;
    test_spec.samples_per_class = args.test_per_class;
    const pals::Dataset test = pals::synth_gaussian_dataset(test_spec, "test");

    const std::string train_path = args.out_prefix + "_train.txt";
    const std::string test_path = args.out_prefix + "_test.txt";
    pals::save_dataset(train, train_path);
    pals::save_dataset(test, test_path);
    std::cout << "wrote " << train_path << " (n=" << train.size() << ") and " << test_path
              << " (n=" << test.size() << ")\n";
    return 0;
}

json config_json(const pals::RunConfig& c) {
    return json{{"knn_k", c.knn_k},
                {"delta", c.delta},
                {"zeta", c.zeta},
                {"smoothing", c.smoothing},
                {"lambda_max", c.lambda_max},
                {"lambda_min", c.lambda_min},
                {"partial_rate", c.partial_rate},
                {"noise_rate", c.noise_rate},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr", c.lr},
                {"momentum", c.momentum},
                {"weight_decay", c.weight_decay},
                {"mixup", c.mixup},
                {"consistency", c.consistency},
                {"seed", c.seed},
                {"hidden", c.hidden},
                {"weak_sigma", c.weak_sigma},
                {"strong_sigma", c.strong_sigma},
                {"drop_fraction", c.drop_fraction}};
}

struct TrainArgs {
    std::string train_path;
    std::string test_path;
    std::string out_dir = ".";
    std::string method = "pals";  // pals|supervised|naive|knn
    pals::RunConfig config;
};

int run_train(const TrainArgs& args) {
    const pals::Dataset train = pals::load_dataset(args.train_path);
    const pals::Dataset test = pals::load_dataset(args.test_path);
    fs::create_directories(args.out_dir);

    const auto started = std::chrono::steady_clock::now();
    double final_acc = 0.0;
    std::vector<pals::EpochMetrics> series;
    bool have_model = false;
    pals::Model model;

    if (args.method == "pals") {
        auto result = pals::run_training(args.config, train, test);
        final_acc = result.series.empty() ? pals::evaluate(result.model, test)
                                          : result.series.back().test_acc;
        series = std::move(result.series);
        model = std::move(result.model);
        have_model = true;
    } else if (args.method == "supervised" || args.method == "naive") {
        auto result = args.method == "supervised"
                          ? pals::baseline_supervised(args.config, train, test)
                          : pals::baseline_naive_ce(args.config, train, test);
        final_acc = result.series.empty() ? pals::evaluate(result.model, test)
                                          : result.series.back().test_acc;
        series = std::move(result.series);
        model = std::move(result.model);
        have_model = true;
    } else if (args.method == "knn") {
        final_acc = pals::baseline_knn_majority(args.config, train, test);
    } else {
        throw pals::ConfigError("unknown method '" + args.method + "'");
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                            .count();

    const fs::path out(args.out_dir);
    if (!series.empty()) pals::write_metrics_csv(series, (out / "metrics.csv").string());
    if (have_model) pals::save_model(model, (out / "model.txt").string());

    json summary{{"format", "pals-summary v1"},
                 {"method", args.method},
                 {"baseline", args.method != "pals"},
                 {"final_accuracy", final_acc},
                 {"epochs_run", series.size()},
                 {"wall_time_seconds", wall},
                 {"seed", args.config.seed},
                 {"num_classes", train.num_classes},
                 {"dataset_hash", pals::dataset_hash(train)},
                 {"config", config_json(args.config)}};
    std::ofstream sf(out / "summary.json");
    sf << summary.dump(2) << "\n";
    if (!sf) throw std::runtime_error("write failed for summary.json");

    std::cout << "method=" << args.method << " final_accuracy=" << final_acc << " outputs in "
              << args.out_dir << "\n";
    return 0;
}

struct GroupKey {
    std::string method;
    double q;
    double eta;
    bool operator<(const GroupKey& o) const {
        return std::tie(method, q, eta) < std::tie(o.method, o.q, o.eta);
    }
};

struct GroupStats {
    std::vector<double> accs;
    int num_classes = -1;
    std::uint64_t dataset_hash = 0;
};

int run_report(const std::string& dir) {
    if (!fs::exists(dir)) throw std::runtime_error("no such directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::map<GroupKey, GroupStats> groups;
    for (const auto& path : files) {
        std::ifstream f(path);
        json j;
        try {
            f >> j;
        } catch (const json::exception&) {
            continue;  // unrelated JSON file
        }
        if (!j.contains("format") || j["format"] != "pals-summary v1") continue;
        GroupKey key{j["method"], j["config"]["partial_rate"], j["config"]["noise_rate"]};
        GroupStats& g = groups[key];
        const int c = j["num_classes"];
        const std::uint64_t hash = j["dataset_hash"];
        if (g.accs.empty()) {
            g.num_classes = c;
            g.dataset_hash = hash;
        } else if (g.num_classes != c || g.dataset_hash != hash) {
            throw std::runtime_error("aggregation error: runs for method=" + key.method +
                                     " mix different datasets (hash or class count differs)");
        }
        g.accs.push_back(j["final_accuracy"]);
    }
    if (groups.empty()) throw std::runtime_error("no runs found under " + dir);

    std::cout << "method\tq\teta\truns\tmean_acc\tstd\n";
    for (const auto& [key, g] : groups) {
        double mean = 0.0;
        for (double a : g.accs) mean += a;
        mean /= static_cast<double>(g.accs.size());
        double var = 0.0;
        for (double a : g.accs) var += (a - mean) * (a - mean);
        const double stdev =
            g.accs.size() > 1 ? std::sqrt(var / static_cast<double>(g.accs.size() - 1)) : 0.0;
        std::cout << key.method << "\t" << key.q << "\t" << key.eta << "\t" << g.accs.size()
                  << "\t" << mean << "\t" << stdev << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PALS: noisy partial label learning via KNN pseudo-labelling"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* cmd_gen = app.add_subcommand("gen", "synthesize a noisy partial-label benchmark");
    cmd_gen->add_option("--classes", gen.spec.num_classes, "number of classes")
        ->check(CLI::Range(2, 64));
    cmd_gen->add_option("--per-class", gen.spec.samples_per_class, "train samples per class")
        ->check(CLI::PositiveNumber);
    cmd_gen->add_option("--test-per-class", gen.test_per_class, "test samples per class")
        ->check(CLI::PositiveNumber);
    cmd_gen->add_option("--dim", gen.spec.feature_dim, "feature dimension")
        ->check(CLI::PositiveNumber);
    cmd_gen->add_option("--scale", gen.spec.class_mean_scale, "class mean scale")
        ->check(CLI::PositiveNumber)
        ->default_val(6.0);
    cmd_gen->add_option("--q", gen.spec.partial_rate, "partial rate")
        ->check(CLI::Range(0.0, 0.999));
    cmd_gen->add_option("--eta", gen.spec.noise_rate, "noise rate")
        ->check(CLI::Range(0.0, 0.999));
    cmd_gen->add_option("--seed", gen.spec.seed, "generation seed");
    cmd_gen->add_option("--out", gen.out_prefix, "output file prefix");

    TrainArgs train;
    bool no_mixup = false;
    bool no_cr = false;
    bool paper_preset = false;
    auto* cmd_train = app.add_subcommand("train", "run PALS or a baseline on a dataset");
    cmd_train->set_config("--config", "", "key=value config file (flags take precedence)");
    cmd_train->add_option("--train", train.train_path, "training dataset file")->required();
    cmd_train->add_option("--test", train.test_path, "test dataset file")->required();
    cmd_train->add_option("--out", train.out_dir, "output directory");
    cmd_train->add_option("--baseline", train.method,
                          "method: pals (default), supervised, naive, knn")
        ->check(CLI::IsMember({"pals", "supervised", "naive", "knn"}));
    cmd_train->add_flag("--preset-paper-scale", paper_preset, "500 epochs, lr 0.1");
    cmd_train->add_option("--k", train.config.knn_k, "KNN neighbours")->check(CLI::PositiveNumber);
    cmd_train->add_option("--delta", train.config.delta, "budget quantile")
        ->check(CLI::Range(0.0, 1.0));
    cmd_train->add_option("--zeta", train.config.zeta, "mixup beta parameter")
        ->check(CLI::PositiveNumber);
    cmd_train->add_option("--r", train.config.smoothing, "label smoothing rate")
        ->check(CLI::Range(0.0, 0.999));
    cmd_train->add_option("--lambda-max", train.config.lambda_max, "augmentation threshold start");
    cmd_train->add_option("--lambda-min", train.config.lambda_min, "augmentation threshold end");
    cmd_train->add_option("--q", train.config.partial_rate, "partial rate (metadata)")
        ->check(CLI::Range(0.0, 0.999));
    cmd_train->add_option("--eta", train.config.noise_rate, "noise rate (metadata)")
        ->check(CLI::Range(0.0, 0.999));
    cmd_train->add_option("--epochs", train.config.epochs, "training epochs")
        ->check(CLI::NonNegativeNumber);
    cmd_train->add_option("--batch-size", train.config.batch_size, "mini-batch size")
        ->check(CLI::PositiveNumber);
    cmd_train->add_option("--lr", train.config.lr, "base learning rate")
        ->check(CLI::PositiveNumber);
    cmd_train->add_option("--momentum", train.config.momentum, "SGD momentum");
    cmd_train->add_option("--weight-decay", train.config.weight_decay, "weight decay");
    cmd_train->add_flag("--no-mixup", no_mixup, "disable mixup");
    cmd_train->add_flag("--no-cr", no_cr, "disable consistency regularization");
    cmd_train->add_option("--seed", train.config.seed, "run seed");
    cmd_train->add_option("--hidden", train.config.hidden, "encoder hidden sizes");
    cmd_train->add_option("--weak-sigma", train.config.weak_sigma, "weak augmentation scale");
    cmd_train->add_option("--strong-sigma", train.config.strong_sigma,
                          "strong augmentation scale");
    cmd_train->add_option("--drop-fraction", train.config.drop_fraction,
                          "strong augmentation dropout fraction");

    std::string report_dir = ".";
    auto* cmd_report = app.add_subcommand("report", "aggregate run summaries into a table");
    cmd_report->add_option("--dir", report_dir, "directory scanned recursively for summaries");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_gen) {
            gen.spec.validate();
            return run_gen(gen);
        }
        if (*cmd_train) {
            if (paper_preset) {
                const pals::RunConfig preset = pals::paper_scale_preset();
                train.config.epochs = preset.epochs;
                train.config.lr = preset.lr;
            }
            if (no_mixup) train.config.mixup = false;
            if (no_cr) train.config.consistency = false;
            train.config.validate();
            return run_train(train);
        }
        return run_report(report_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
