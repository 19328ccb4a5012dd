#include "lbc/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace lbc::harness {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

// Reads keys off a KeyValues while remembering which ones were consumed.
class Reader {
public:
    explicit Reader(const KeyValues& kv) : kv_(kv) {}

    bool has(const std::string& key) const { return kv_.has(key); }

    std::string text(const std::string& key) {
        used_.insert(key);
        return kv_.get(key);
    }

    template <class T>
    void read(const std::string& key, T& target) {
        if (!kv_.has(key)) return;
        target = parse<T>(key, text(key));
    }

    template <class T>
    void read_list(const std::string& key, std::vector<T>& target) {
        if (!kv_.has(key)) return;
        target.clear();
        const std::string raw = text(key);
        if (raw.empty()) return;
        for (const auto& item : split(raw, ',')) target.push_back(parse<T>(key, item));
    }

    void read_matrix(const std::string& key, std::vector<std::vector<int>>& target) {
        if (!kv_.has(key)) return;
        target.clear();
        for (const auto& row : split(text(key), ';')) {
            std::vector<int> r;
            for (const auto& item : split(row, ',')) r.push_back(parse<int>(key, item));
            target.push_back(std::move(r));
        }
    }

    void reject_unused(const std::set<std::string>& also_allowed = {}) const {
        for (const auto& [key, value] : kv_.entries()) {
            if (!used_.count(key) && !also_allowed.count(key)) throw Error("unknown config key: " + key);
        }
    }

    template <class T>
    static T parse(const std::string& key, const std::string& raw) {
        T value{};
        if constexpr (std::is_same_v<T, std::string>) {
            return raw;
        } else if constexpr (std::is_same_v<T, double>) {
            try {
                std::size_t pos = 0;
                value = std::stod(raw, &pos);
                if (pos != raw.size()) throw std::invalid_argument(raw);
            } catch (const std::exception&) {
                throw Error("config key " + key + ": expected a number, got '" + raw + "'");
            }
        } else {
            const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
            if (ec != std::errc() || ptr != raw.data() + raw.size())
                throw Error("config key " + key + ": expected an integer, got '" + raw + "'");
        }
        return value;
    }

private:
    const KeyValues& kv_;
    std::set<std::string> used_;
};

template <class T>
std::string join(const std::vector<T>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_same_v<T, double>) out += format_real(items[i]);
        else if constexpr (std::is_same_v<T, std::string>) out += items[i];
        else out += std::to_string(items[i]);
    }
    return out;
}

void read_synth(Reader& r, synthgen::SynthSpec& s) {
    r.read("synth.num_classes", s.num_classes);
    r.read("synth.feature_dim", s.feature_dim);
    r.read("synth.core_gain", s.core_gain);
    r.read("synth.spurious_gain", s.spurious_gain);
    r.read("synth.noise_std", s.noise_std);
    r.read_matrix("synth.group_counts", s.group_counts);
    r.read_list("synth.val_counts", s.val_counts);
    r.read_list("synth.test_counts", s.test_counts);
    r.read_list("synth.spurious_names", s.spurious_names);
    r.read("synth.nuisance_attributes", s.nuisance_attributes);
    r.read("synth.nuisance_rate", s.nuisance_rate);
    r.read("synth.nuisance_decay", s.nuisance_decay);
}

void write_synth(KeyValues& kv, const synthgen::SynthSpec& s) {
    kv.set("synth.num_classes", std::to_string(s.num_classes));
    kv.set("synth.feature_dim", std::to_string(s.feature_dim));
    kv.set("synth.core_gain", format_real(s.core_gain));
    kv.set("synth.spurious_gain", format_real(s.spurious_gain));
    kv.set("synth.noise_std", format_real(s.noise_std));
    std::string rows;
    for (std::size_t i = 0; i < s.group_counts.size(); ++i) rows += (i ? ";" : "") + join(s.group_counts[i]);
    kv.set("synth.group_counts", rows);
    kv.set("synth.val_counts", join(s.val_counts));
    kv.set("synth.test_counts", join(s.test_counts));
    kv.set("synth.spurious_names", join(s.spurious_names));
    kv.set("synth.nuisance_attributes", std::to_string(s.nuisance_attributes));
    kv.set("synth.nuisance_rate", format_real(s.nuisance_rate));
    kv.set("synth.nuisance_decay", format_real(s.nuisance_decay));
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw Error(origin + ":" + std::to_string(lineno) + ": empty key");
        if (kv.has(key)) throw Error(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
        kv.set(key, trim(line.substr(eq + 1)));
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

const std::string& KeyValues::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("missing config key: " + key);
    return it->second;
}

std::string KeyValues::render() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
    return out;
}

std::uint64_t ExperimentConfig::erm_seed() const { return derive_seed(seed, "erm"); }
std::uint64_t ExperimentConfig::model_seed() const { return derive_seed(seed, "model"); }
std::uint64_t ExperimentConfig::lbc_seed() const { return derive_seed(seed, "lbc"); }

void ExperimentConfig::reseed(std::uint64_t s) {
    seed = s;
    synth.seed = s;
    erm.seed = erm_seed();
    lbc.train.seed = lbc_seed();
}

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.erm = nnet::TrainConfig{.learning_rate = 0.01, .momentum = 0.9, .weight_decay = 1e-4, .batch_size = 128,
                              .epochs = 30, .batches_per_epoch = 0};
    c.lbc.train = nnet::TrainConfig{.learning_rate = 1e-3, .momentum = 0.9, .weight_decay = 1e-4, .batch_size = 128};
    c.reseed(0);
    return c;
}

synthgen::SynthSpec synth_spec_from(const KeyValues& kv) {
    synthgen::SynthSpec s = default_config().synth;
    Reader r(kv);
    r.read("seed", s.seed);
    read_synth(r, s);
    r.reject_unused();
    s.validate();
    return s;
}

KeyValues to_key_values(const synthgen::SynthSpec& spec) {
    KeyValues kv;
    kv.set("seed", std::to_string(spec.seed));
    write_synth(kv, spec);
    return kv;
}

ExperimentConfig config_from(const KeyValues& kv) {
    ExperimentConfig c = default_config();
    Reader r(kv);
    r.read("seed", c.seed);
    if (r.has("data.source")) {
        const std::string src = r.text("data.source");
        if (src == "synth") c.source = DataSource::synth;
        else if (src == "files") c.source = DataSource::files;
        else throw Error("config key data.source: expected synth or files, got '" + src + "'");
    }
    std::string path;
    if (r.has("data.train")) c.files.train = r.text("data.train");
    if (r.has("data.val")) c.files.val = r.text("data.val");
    if (r.has("data.test")) c.files.test = r.text("data.test");
    if (r.has("data.annotations")) c.files.annotations = r.text("data.annotations");
    r.read("data.min_frequency", c.min_frequency);
    read_synth(r, c.synth);

    r.read_list("model.hidden", c.hidden);

    r.read("erm.learning_rate", c.erm.learning_rate);
    r.read("erm.momentum", c.erm.momentum);
    r.read("erm.weight_decay", c.erm.weight_decay);
    r.read("erm.batch_size", c.erm.batch_size);
    r.read("erm.epochs", c.erm.epochs);
    r.read("erm.batches_per_epoch", c.erm.batches_per_epoch);
    if (r.has("erm.checkpoint")) {
        const std::string ckpt = r.text("erm.checkpoint");
        if (!ckpt.empty()) c.erm_checkpoint = ckpt;
    }

    r.read("lbc.K", c.lbc.K);
    r.read("lbc.epochs", c.lbc.epochs);
    r.read("lbc.batches_per_epoch", c.lbc.batches_per_epoch);
    r.read("lbc.batch_size", c.lbc.batch_size);
    if (r.has("lbc.variant")) c.lbc.variant = spuriousness::variant_from_string(r.text("lbc.variant"));
    if (r.has("lbc.init_mode")) c.lbc.init_mode = init_mode_from_string(r.text("lbc.init_mode"));
    r.read("lbc.learning_rate", c.lbc.train.learning_rate);
    r.read("lbc.momentum", c.lbc.train.momentum);
    r.read("lbc.weight_decay", c.lbc.train.weight_decay);
    r.read("lbc.kmeans_restarts", c.lbc.kmeans.restarts);
    r.read("lbc.kmeans_max_iterations", c.lbc.kmeans.max_iterations);

    if (r.has("output")) c.output = r.text("output");
    r.read_list("sweep.K", c.k_sweep);
    r.reject_unused();

    c.reseed(c.seed);
    c.lbc.hidden = c.hidden;
    c.lbc.train.batch_size = c.lbc.batch_size;
    if (c.source == DataSource::synth) {
        c.synth.validate();
    } else if (c.files.train.empty() || c.files.val.empty() || c.files.test.empty() || c.files.annotations.empty()) {
        throw Error("data.source = files needs data.train, data.val, data.test and data.annotations");
    }
    if (c.min_frequency < 1) throw Error("config key data.min_frequency: must be >= 1");
    c.erm.validate();
    c.lbc.validate();
    for (int k : c.k_sweep)
        if (k < 2) throw Error("config key sweep.K: entries must be >= 2");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from(KeyValues::load(path)); }

KeyValues to_key_values(const ExperimentConfig& c) {
    KeyValues kv;
    kv.set("seed", std::to_string(c.seed));
    kv.set("data.source", c.source == DataSource::synth ? "synth" : "files");
    if (c.source == DataSource::files) {
        kv.set("data.train", c.files.train.string());
        kv.set("data.val", c.files.val.string());
        kv.set("data.test", c.files.test.string());
        kv.set("data.annotations", c.files.annotations.string());
    } else {
        write_synth(kv, c.synth);
    }
    kv.set("data.min_frequency", std::to_string(c.min_frequency));
    kv.set("model.hidden", join(c.hidden));
    kv.set("erm.learning_rate", format_real(c.erm.learning_rate));
    kv.set("erm.momentum", format_real(c.erm.momentum));
    kv.set("erm.weight_decay", format_real(c.erm.weight_decay));
    kv.set("erm.batch_size", std::to_string(c.erm.batch_size));
    kv.set("erm.epochs", std::to_string(c.erm.epochs));
    kv.set("erm.batches_per_epoch", std::to_string(c.erm.batches_per_epoch));
    if (c.erm_checkpoint) kv.set("erm.checkpoint", c.erm_checkpoint->string());
    kv.set("lbc.K", std::to_string(c.lbc.K));
    kv.set("lbc.epochs", std::to_string(c.lbc.epochs));
    kv.set("lbc.batches_per_epoch", std::to_string(c.lbc.batches_per_epoch));
    kv.set("lbc.batch_size", std::to_string(c.lbc.batch_size));
    kv.set("lbc.variant", spuriousness::to_string(c.lbc.variant));
    kv.set("lbc.init_mode", to_string(c.lbc.init_mode));
    kv.set("lbc.learning_rate", format_real(c.lbc.train.learning_rate));
    kv.set("lbc.momentum", format_real(c.lbc.train.momentum));
    kv.set("lbc.weight_decay", format_real(c.lbc.train.weight_decay));
    kv.set("lbc.kmeans_restarts", std::to_string(c.lbc.kmeans.restarts));
    kv.set("lbc.kmeans_max_iterations", std::to_string(c.lbc.kmeans.max_iterations));
    kv.set("output", c.output.string());
    if (!c.k_sweep.empty()) kv.set("sweep.K", join(c.k_sweep));
    return kv;
}

}  // namespace lbc::harness
