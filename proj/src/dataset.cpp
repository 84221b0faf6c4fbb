#include "pals/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pals/rng.hpp"

namespace pals {
namespace {

constexpr std::uint64_t kMeanStreamTag = 0x4d45414eULL;   // class-mean draws
constexpr std::uint64_t kSampleStreamTag = 0x53414d50ULL; // per-sample noise

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void append_double(std::string& out, double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, end);
}

double parse_double(std::string_view tok, std::size_t line_no, const char* field) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad " + field + " value '" +
                         std::string(tok) + "'");
    return v;
}

long parse_long(std::string_view tok, std::size_t line_no, const char* field) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad " + field + " value '" +
                         std::string(tok) + "'");
    return v;
}

// "key=value" field extractor; value runs to the next space or end.
std::string_view expect_field(std::string_view& rest, std::string_view key,
                              std::size_t line_no) {
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    if (!rest.starts_with(key) || rest.size() <= key.size() || rest[key.size()] != '=')
        throw ParseError("line " + std::to_string(line_no) + ": expected field '" +
                         std::string(key) + "='");
    rest.remove_prefix(key.size() + 1);
    const std::size_t end = rest.find(' ');
    std::string_view value = rest.substr(0, end);
    rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    return value;
}

}  // namespace

void Dataset::validate() const {
    if (size() == 0 || dim() == 0) throw SchemaError("dataset must be non-empty");
    if (num_classes < 2 || num_classes > kMaxClasses)
        throw SchemaError("num_classes must be in [2, 64]");
    if (true_labels.size() != size() || candidates.size() != size())
        throw SchemaError("label/candidate count does not match sample count");
    for (std::size_t i = 0; i < size(); ++i) {
        if (true_labels[i] < 0 || true_labels[i] >= num_classes)
            throw SchemaError("sample " + std::to_string(i) + ": true label out of range");
        if (candidates[i].empty())
            throw SchemaError("sample " + std::to_string(i) + ": empty candidate set");
        if (candidates[i].bits() >> num_classes)
            throw SchemaError("sample " + std::to_string(i) + ": candidate label out of range");
    }
}

void GenSpec::validate() const {
    if (partial_rate < 0.0 || partial_rate >= 1.0)
        throw ConfigError("partial_rate must be in [0,1)");
    if (noise_rate < 0.0 || noise_rate >= 1.0) throw ConfigError("noise_rate must be in [0,1)");
    if (num_classes < 2 || num_classes > kMaxClasses)
        throw ConfigError("num_classes must be in [2, 64]");
    if (samples_per_class < 1) throw ConfigError("samples_per_class must be positive");
    if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
    if (!(class_mean_scale > 0.0)) throw ConfigError("class_mean_scale must be positive");
}

Dataset synth_gaussian_dataset(const GenSpec& spec, const std::string& split_tag) {
    spec.validate();
    const int c = spec.num_classes;
    const int d = spec.feature_dim;
    const std::size_t n = static_cast<std::size_t>(c) * spec.samples_per_class;

    const Rng root(spec.seed);
    Rng mean_rng = root.fork(kMeanStreamTag);
    Matrix means(static_cast<std::size_t>(c), static_cast<std::size_t>(d));
    for (int k = 0; k < c; ++k) {
        double norm_sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = mean_rng.normal();
            means(k, j) = v;
            norm_sq += v * v;
        }
        const double scale = spec.class_mean_scale / std::sqrt(norm_sq);
        for (int j = 0; j < d; ++j) means(k, j) *= scale;
    }

    Dataset ds;
    ds.features = Matrix(n, static_cast<std::size_t>(d));
    ds.true_labels.resize(n);
    ds.candidates.resize(n);
    ds.num_classes = c;
    ds.split_tag = split_tag;

    const std::uint64_t split_seed = Rng::mix(Rng::mix(spec.seed, kSampleStreamTag), fnv1a(split_tag));
    std::size_t i = 0;
    for (int k = 0; k < c; ++k) {
        for (int s = 0; s < spec.samples_per_class; ++s, ++i) {
            Rng sample_rng{Rng::mix(split_seed, i)};
            for (int j = 0; j < d; ++j) ds.features(i, j) = means(k, j) + sample_rng.normal();
            ds.true_labels[i] = k;
            ds.candidates[i] = CandidateSet::singleton(k);
        }
    }
    return ds;
}

Dataset apply_partial_noise(const Dataset& ds, double q, double eta, std::uint64_t seed) {
    Dataset out = ds;
    const int c = ds.num_classes;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Rng rng{Rng::mix(seed, i)};
        const int truth = ds.true_labels[i];
        CandidateSet set = CandidateSet::singleton(truth);
        for (int label = 0; label < c; ++label) {
            if (label == truth) continue;
            if (rng.bernoulli(q)) set.insert(label);
        }
        if (rng.bernoulli(eta)) set.remove(truth);
        if (set.empty()) {
            // Repair: one uniformly random incorrect label keeps the sample noisy.
            int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(c - 1)));
            if (pick >= truth) ++pick;
            set.insert(pick);
        }
        out.candidates[i] = set;
    }
    return out;
}

std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    out.reserve(ds.size() * (ds.dim() * 12 + 32));
    out += "pals-dataset v1 n=" + std::to_string(ds.size()) + " d=" + std::to_string(ds.dim()) +
           " C=" + std::to_string(ds.num_classes) + " split=" + ds.split_tag + "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out += "label=" + std::to_string(ds.true_labels[i]) + " cand=";
        bool first = true;
        for (int label : ds.candidates[i].members()) {
            if (!first) out += ',';
            out += std::to_string(label);
            first = false;
        }
        out += " feat=";
        const auto row = ds.features.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ' ';
            append_double(out, row[j]);
        }
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    const std::string text = serialize_dataset(ds);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

Dataset parse_dataset(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("line 1: missing header");
    std::string_view rest = line;
    if (!rest.starts_with("pals-dataset v1"))
        throw ParseError("line 1: not a pals-dataset v1 file");
    rest.remove_prefix(std::string_view("pals-dataset v1").size());
    const long n = parse_long(expect_field(rest, "n", 1), 1, "n");
    const long d = parse_long(expect_field(rest, "d", 1), 1, "d");
    const long c = parse_long(expect_field(rest, "C", 1), 1, "C");
    std::string_view split = expect_field(rest, "split", 1);
    if (n <= 0 || d <= 0) throw SchemaError("header: n and d must be positive");
    if (c < 2 || c > kMaxClasses) throw SchemaError("header: C must be in [2, 64]");

    Dataset ds;
    ds.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
    ds.true_labels.resize(static_cast<std::size_t>(n));
    ds.candidates.resize(static_cast<std::size_t>(n));
    ds.num_classes = static_cast<int>(c);
    ds.split_tag = std::string(split);

    for (long i = 0; i < n; ++i) {
        const std::size_t line_no = static_cast<std::size_t>(i) + 2;
        if (!std::getline(in, line))
            throw ParseError("line " + std::to_string(line_no) + ": unexpected end of file");
        std::string_view row = line;
        const long label = parse_long(expect_field(row, "label", line_no), line_no, "label");
        if (label < 0 || label >= c)
            throw SchemaError("row " + std::to_string(i) + ": true label out of range");
        ds.true_labels[static_cast<std::size_t>(i)] = static_cast<int>(label);

        std::string_view cand = expect_field(row, "cand", line_no);
        if (cand.empty())
            throw SchemaError("row " + std::to_string(i) + ": empty candidate set");
        CandidateSet set;
        while (!cand.empty()) {
            const std::size_t comma = cand.find(',');
            const long member = parse_long(cand.substr(0, comma), line_no, "cand");
            if (member < 0 || member >= c)
                throw SchemaError("row " + std::to_string(i) + ": candidate label out of range");
            set.insert(static_cast<int>(member));
            cand.remove_prefix(comma == std::string_view::npos ? cand.size() : comma + 1);
        }
        ds.candidates[static_cast<std::size_t>(i)] = set;

        while (!row.empty() && row.front() == ' ') row.remove_prefix(1);
        if (!row.starts_with("feat="))
            throw ParseError("line " + std::to_string(line_no) + ": expected field 'feat='");
        std::string_view feats = row.substr(5);  // runs to end of line
        for (long j = 0; j < d; ++j) {
            while (!feats.empty() && feats.front() == ' ') feats.remove_prefix(1);
            const std::size_t space = feats.find(' ');
            std::string_view tok = feats.substr(0, space);
            if (tok.empty())
                throw ParseError("line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(d) + " features, got " + std::to_string(j));
            ds.features(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                parse_double(tok, line_no, "feat");
            feats.remove_prefix(space == std::string_view::npos ? feats.size() : space);
        }
        while (!feats.empty() && feats.front() == ' ') feats.remove_prefix(1);
        if (!feats.empty())
            throw SchemaError("row " + std::to_string(i) + ": more features than header d");
    }
    ds.validate();
    return ds;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_dataset(buf.str());
}

std::uint64_t dataset_hash(const Dataset& ds) { return fnv1a(serialize_dataset(ds)); }

}  // namespace pals
