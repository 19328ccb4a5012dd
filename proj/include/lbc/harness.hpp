#pragma once

// Experiment commands behind the `lbc` CLI. Each command writes its artifacts
// under an output directory and returns what it computed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbc/config.hpp"
#include "lbc/corpus.hpp"
#include "lbc/lbc.hpp"

namespace lbc::harness {

corpus::Splits load_data(const ExperimentConfig& config);

nlohmann::json to_json(const GroupReport& report);

struct PlantedScore {
    int cls = 0;
    std::string attribute;
    double erm = 0;
    double lbc = 0;
};

struct SweepEntry {
    int K = 0;
    GroupReport test;
    double best_pseudo_unbiased = 0;
};

struct RunReport {
    GroupReport erm;
    GroupReport lbc;
    int best_epoch = 0;
    double best_pseudo_unbiased = 0;
    std::vector<PlantedScore> planted;  // synthetic sources only
    double erm_embedding_norm = 0;      // mean spuriousness-embedding norm on train
    double lbc_embedding_norm = 0;
    std::vector<SweepEntry> sweep;
    std::filesystem::path history, attribute_accuracies, erm_scores, lbc_scores, config_echo, best_checkpoint;
    double wall_seconds = 0;

    nlohmann::json to_json() const;
};

// Generates a synthetic benchmark from a spec file (seed + synth.* keys).
void cmd_synth(const std::filesystem::path& spec_file, const std::filesystem::path& out,
               std::optional<std::uint64_t> seed = std::nullopt);

// Builds the vocabulary and writes it with per-split attribute statistics.
nlohmann::json cmd_ingest(const ExperimentConfig& config);

// Trains (or loads) the ERM model and evaluates it on the test split.
nnet::Classifier cmd_train_erm(const ExperimentConfig& config);

// ERM (or its checkpoint), then LBC, then group evaluation on test.
RunReport cmd_train(const ExperimentConfig& config);

GroupReport cmd_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

// Full score matrix plus the per-class top-10 list.
spuriousness::SpuriousnessMatrix cmd_scores(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                                            spuriousness::ScoreVariant variant);

// Training-set embeddings with class and cluster columns; returns the mean embedding norm.
double cmd_embed(const ExperimentConfig& config, const std::filesystem::path& checkpoint, std::optional<int> K);

// Human-readable summary of a finished run directory.
std::string cmd_report(const std::filesystem::path& run_dir);

}  // namespace lbc::harness
