#pragma once

// Experiment configuration in flat `section.key = value` text. Lists are
// comma-separated and matrix rows are separated by ';'. '#' starts a comment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lbc/lbc.hpp"
#include "lbc/nnet.hpp"
#include "lbc/synthgen.hpp"

namespace lbc::harness {

class KeyValues {
public:
    static KeyValues parse(const std::string& text, const std::string& origin = "<config>");
    static KeyValues load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::string& get(const std::string& key) const;
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string render() const;

private:
    std::map<std::string, std::string> values_;
};

enum class DataSource { synth, files };

struct DataFiles {
    std::filesystem::path train, val, test, annotations;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    DataSource source = DataSource::synth;
    synthgen::SynthSpec synth;
    DataFiles files;
    int min_frequency = 10;
    std::vector<int> hidden = {32, 32};
    nnet::TrainConfig erm;
    std::optional<std::filesystem::path> erm_checkpoint;
    LBCConfig lbc;
    std::filesystem::path output = "run";
    std::vector<int> k_sweep;

    // Seeds of the ERM trainer, model initialization and the LBC streams,
    // all derived from `seed`.
    std::uint64_t erm_seed() const;
    std::uint64_t model_seed() const;
    std::uint64_t lbc_seed() const;
    // Sets `seed` and every seed derived from it.
    void reseed(std::uint64_t s);
};

// The checked-in defaults: the synthetic benchmark with a 95% class/attribute correlation.
ExperimentConfig default_config();

// Unknown keys and malformed values raise lbc::Error naming the key.
ExperimentConfig config_from(const KeyValues& kv);
ExperimentConfig load_config(const std::filesystem::path& path);
KeyValues to_key_values(const ExperimentConfig& config);

synthgen::SynthSpec synth_spec_from(const KeyValues& kv);
KeyValues to_key_values(const synthgen::SynthSpec& spec);

}  // namespace lbc::harness
