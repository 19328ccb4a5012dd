#include "lbc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <Eigen/Dense>

namespace lbc::synthgen {

void SynthSpec::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw Error("synth spec: " + field + " " + why);
    };
    if (num_classes < 1) fail("num_classes", "must be >= 1");
    if (!(core_gain > 0)) fail("core_gain", "must be > 0");
    if (!(spurious_gain > 0)) fail("spurious_gain", "must be > 0");
    if (!(noise_std >= 0)) fail("noise_std", "must be >= 0");
    if (static_cast<int>(group_counts.size()) != num_classes) fail("group_counts", "needs one row per class");
    const int s = num_spurious();
    if (s < 1) fail("group_counts", "needs at least one spurious attribute");
    for (int c = 0; c < num_classes; ++c) {
        const auto& row = group_counts[static_cast<std::size_t>(c)];
        if (static_cast<int>(row.size()) != s) fail("group_counts", "rows must have equal length");
        long total = 0;
        for (int n : row) {
            if (n < 0) fail("group_counts", "entries must be >= 0");
            total += n;
        }
        if (total == 0) fail("group_counts", "class " + std::to_string(c + 1) + " has no samples");
    }
    if (static_cast<int>(val_counts.size()) != num_classes) fail("val_counts", "needs one entry per class");
    if (static_cast<int>(test_counts.size()) != num_classes) fail("test_counts", "needs one entry per class");
    for (int n : val_counts) if (n < 0) fail("val_counts", "entries must be >= 0");
    for (int n : test_counts) if (n < 0) fail("test_counts", "entries must be >= 0");
    if (static_cast<int>(spurious_names.size()) != s) fail("spurious_names", "needs one name per spurious attribute");
    if (nuisance_attributes < 0) fail("nuisance_attributes", "must be >= 0");
    if (nuisance_rate < 0 || nuisance_rate > 1) fail("nuisance_rate", "must lie in [0,1]");
    if (nuisance_decay < 0 || nuisance_decay > 1) fail("nuisance_decay", "must lie in [0,1]");
    std::set<std::string> names(spurious_names.begin(), spurious_names.end());
    if (names.size() != spurious_names.size()) fail("spurious_names", "must be distinct");
    for (const auto& w : nuisance_names(nuisance_attributes)) {
        if (names.count(w)) fail("spurious_names", "collides with nuisance word " + w);
    }
    if (feature_dim < num_classes + s) throw Error("insufficient feature dimension");
}

std::vector<std::string> nuisance_names(int count) {
    static const char* const kWords[] = {"branch", "sky",   "grass", "tree",  "rock",   "flower",
                                         "cloud",  "bush",  "fence", "sand",  "leaf",   "pole",
                                         "log",    "field", "snow",  "wall",  "stone",  "road"};
    constexpr int kNamed = static_cast<int>(std::size(kWords));
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) {
        if (i < kNamed) {
            out.emplace_back(kWords[i]);
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "filler%03d", i - kNamed);
            out.emplace_back(buf);
        }
    }
    return out;
}

std::vector<int> planted_attribute_per_class(const SynthSpec& spec) {
    std::vector<int> out;
    for (const auto& row : spec.group_counts)
        out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    return out;
}

namespace {

struct Generator {
    const SynthSpec& spec;
    Rng rng;
    Eigen::MatrixXd directions;  // columns: u_1..u_C, v_1..v_S
    std::vector<std::string> nuisance;
    std::normal_distribution<double> gauss{0.0, 1.0};
    std::uniform_real_distribution<double> unit{0.0, 1.0};

    explicit Generator(const SynthSpec& s) : spec(s), rng(make_rng(s.seed, "synth")) {
        const int d = spec.feature_dim;
        Eigen::MatrixXd random(d, d);
        for (int j = 0; j < d; ++j)
            for (int i = 0; i < d; ++i) random(i, j) = gauss(rng);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(random);
        directions = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
        nuisance = nuisance_names(spec.nuisance_attributes);
    }

    void emit(const std::string& split, int c, int s, int n, std::vector<corpus::Sample>& out,
              std::vector<corpus::AnnotationRecord>& records, int& serial) {
        const int d = spec.feature_dim;
        const int nc = spec.num_classes;
        for (int k = 0; k < n; ++k) {
            corpus::Sample sample;
            char id[64];
            std::snprintf(id, sizeof id, "%s-%06d", split.c_str(), serial++);
            sample.id = id;
            sample.label = c;
            sample.group = group_of(c, s, spec.num_spurious());
            sample.features.resize(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) {
                sample.features[static_cast<std::size_t>(i)] = spec.core_gain * directions(i, c - 1) +
                                                                spec.spurious_gain * directions(i, nc + s) +
                                                                spec.noise_std * gauss(rng);
            }
            corpus::AnnotationRecord record{sample.id, {spec.spurious_names[static_cast<std::size_t>(s)]}};
            double rate = spec.nuisance_rate;
            for (const auto& w : nuisance) {
                if (unit(rng) < rate) record.words.push_back(w);
                rate *= spec.nuisance_decay;
            }
            out.push_back(std::move(sample));
            records.push_back(std::move(record));
        }
    }

    void balanced(const std::string& split, const std::vector<int>& per_class, std::vector<corpus::Sample>& out,
                  std::vector<corpus::AnnotationRecord>& records) {
        const int groups = spec.num_spurious();
        int serial = 0;
        for (int c = 1; c <= spec.num_classes; ++c) {
            const int total = per_class[static_cast<std::size_t>(c - 1)];
            for (int s = 0; s < groups; ++s) {
                const int n = total / groups + (s < total % groups ? 1 : 0);
                emit(split, c, s, n, out, records, serial);
            }
        }
    }
};

}  // namespace

SynthData generate(const SynthSpec& spec) {
    spec.validate();
    Generator gen(spec);
    SynthData data;
    int serial = 0;
    for (int c = 1; c <= spec.num_classes; ++c) {
        const auto& row = spec.group_counts[static_cast<std::size_t>(c - 1)];
        for (int s = 0; s < spec.num_spurious(); ++s)
            gen.emit("train", c, s, row[static_cast<std::size_t>(s)], data.train, data.records, serial);
    }
    gen.balanced("val", spec.val_counts, data.val, data.records);
    gen.balanced("test", spec.test_counts, data.test, data.records);
    return data;
}

}  // namespace lbc::synthgen
