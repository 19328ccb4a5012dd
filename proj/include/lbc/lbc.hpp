#pragma once

// Iterative debiasing over a (K·C)-way head: each epoch re-scores every
// class-attribute pair on the current model, clusters the training samples by
// spuriousness embedding, relabels them with fine labels and trains on
// cluster-balanced batches. The checkpoint with the best pseudo-unbiased
// validation accuracy is kept.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lbc/corpus.hpp"
#include "lbc/grouping.hpp"
#include "lbc/nnet.hpp"
#include "lbc/sampler.hpp"
#include "lbc/spuriousness.hpp"

namespace lbc {

enum class InitMode { erm_checkpoint, random };

std::string to_string(InitMode m);
InitMode init_mode_from_string(const std::string& s);

struct LBCConfig {
    int K = 3;
    int epochs = 50;
    int batches_per_epoch = 20;
    int batch_size = 128;
    spuriousness::ScoreVariant variant = spuriousness::ScoreVariant::tanh_abs_log;
    nnet::TrainConfig train{.learning_rate = 1e-3, .momentum = 0.9, .weight_decay = 1e-4};
    InitMode init_mode = InitMode::erm_checkpoint;
    std::vector<int> hidden = {32, 32};  // backbone widths for random initialization
    grouping::KMeansOptions kmeans;

    void validate() const;
};

// ceil(j / K) for the 1-based argmax output j.
int predict_class(const nnet::Classifier& model, const Eigen::VectorXd& features, int K);

struct AttributeAccuracy {
    int attribute = 0;
    std::size_t count = 0;
    std::size_t correct = 0;
    double accuracy = 0;
};

struct PseudoUnbiased {
    double value = 0;
    std::vector<AttributeAccuracy> per_attribute;  // attributes with nonempty validation subsets
};

// Mean class accuracy over the validation subsets carrying each attribute in
// `attributes`; empty subsets are skipped.
PseudoUnbiased pseudo_unbiased_accuracy(const nnet::Classifier& model, const corpus::AnnotatedDataset& val,
                                        std::span<const int> attributes, int K);

// Over every vocabulary attribute.
PseudoUnbiased pseudo_unbiased_accuracy(const nnet::Classifier& model, const corpus::AnnotatedDataset& val, int K);

struct GroupReport {
    std::map<int, double> per_group;       // group id -> accuracy
    std::map<int, std::size_t> group_size;
    double worst = 0;
    double average = 0;
    double gap = 0;
};

// Class accuracy per ground-truth group; K is the model's heads per class.
GroupReport evaluate_groups(const nnet::Classifier& model, const corpus::AnnotatedDataset& test, int K);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double pseudo_unbiased = 0;
    std::optional<GroupReport> val_groups;
    std::vector<int> top_attribute;  // per class, highest-γ attribute of this epoch's scores
    std::vector<AttributeAccuracy> per_attribute;
    sampler::BatchPlan plan;
};

struct SelectionState {
    double best_metric = 0;
    int best_epoch = 0;
    nnet::Classifier best_checkpoint;
    std::vector<std::pair<int, double>> history;
};

struct LBCResult {
    nnet::Classifier best;
    SelectionState selection;
    std::vector<EpochRecord> epochs;
    spuriousness::SpuriousnessMatrix last_scores;
};

// Called after every epoch with the record and the model just trained.
using EpochObserver = std::function<void(const EpochRecord&, const nnet::Classifier&)>;

LBCResult run_lbc(const nnet::Classifier& erm_model, const corpus::AnnotatedDataset& train,
                  const corpus::AnnotatedDataset& val, const LBCConfig& config, const EpochObserver& observer = {});

// CSV: epoch,train_loss,pseudo_unbiased,val_worst,val_average,val_gap,top_class1..top_classC
void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& epochs,
                   const corpus::AttributeVocabulary& vocabulary, int num_classes);

// CSV: epoch,attribute,count,correct,accuracy
void write_attribute_accuracies(const std::filesystem::path& path, const std::vector<EpochRecord>& epochs,
                                const corpus::AttributeVocabulary& vocabulary);

}  // namespace lbc
