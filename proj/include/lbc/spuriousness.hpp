#pragma once

// Spuriousness of class-attribute pairs and per-sample spuriousness embeddings.
//
// For class c and attribute a the training samples of c split into those with
// and without a; M_with and M_without are the classifier's class accuracies on
// the two halves. The default score is tanh(|ln(M_with / M_without)|), and it
// is exactly 0 whenever either half is empty.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lbc/corpus.hpp"
#include "lbc/nnet.hpp"

namespace lbc::spuriousness {

enum class ScoreVariant { tanh_abs_log, tanh_log, abs_log, log, abs_diff, diff };

inline constexpr ScoreVariant kAllVariants[] = {ScoreVariant::tanh_abs_log, ScoreVariant::tanh_log,
                                                ScoreVariant::abs_log,      ScoreVariant::log,
                                                ScoreVariant::abs_diff,     ScoreVariant::diff};

std::string to_string(ScoreVariant v);
ScoreVariant variant_from_string(const std::string& s);

// Accuracies are floored at this value before any logarithm of their ratio.
inline constexpr double kAccuracyFloor = 1e-6;

// The variant applied to a pair of accuracies; no corner-case handling.
double apply_variant(ScoreVariant variant, double m_with, double m_without);

struct PairStats {
    std::size_t n_with = 0;
    std::size_t n_without = 0;
    double m_with = 0;     // 0 when n_with == 0
    double m_without = 0;  // 0 when n_without == 0
    double score = 0;

    bool corner_case() const { return n_with == 0 || n_without == 0; }
};

// Score given the per-half statistics: 0 on a corner case, the variant otherwise.
double score_from_stats(ScoreVariant variant, const PairStats& stats);

class SpuriousnessMatrix {
public:
    SpuriousnessMatrix() = default;
    SpuriousnessMatrix(int num_classes, std::size_t num_attributes, ScoreVariant variant, int epoch_tag = 0);

    int num_classes() const { return num_classes_; }
    std::size_t num_attributes() const { return num_attributes_; }
    ScoreVariant variant() const { return variant_; }
    int epoch_tag() const { return epoch_tag_; }

    // Class c is 1-based, attribute a is a vocabulary index.
    double value(int c, int a) const { return stats(c, a).score; }
    const PairStats& stats(int c, int a) const;
    PairStats& stats(int c, int a);

private:
    int num_classes_ = 0;
    std::size_t num_attributes_ = 0;
    ScoreVariant variant_ = ScoreVariant::tanh_abs_log;
    int epoch_tag_ = 0;
    std::vector<PairStats> cells_;  // row-major [class][attribute]
};

// Single pair, partitioning the dataset directly. The model's head may be
// C-wide or (K·C)-wide; classes come from the ceiling rule.
double score(const nnet::Classifier& model, const corpus::AnnotatedDataset& dataset, int c, int a,
             ScoreVariant variant = ScoreVariant::tanh_abs_log);

// All C × N_A pairs from one set of class predictions (aligned with dataset.samples).
SpuriousnessMatrix score_matrix(const corpus::AnnotatedDataset& dataset, std::span<const int> predicted_classes,
                                ScoreVariant variant, int epoch_tag = 0);

// All pairs after a single prediction pass of `model` over the dataset.
SpuriousnessMatrix score_matrix(const nnet::Classifier& model, const corpus::AnnotatedDataset& dataset,
                                ScoreVariant variant = ScoreVariant::tanh_abs_log, int epoch_tag = 0);

// SE(x,y)[i_a] = γ(a,y) if the sample carries a, else 0.
Eigen::VectorXd embed(const corpus::Sample& sample, const SpuriousnessMatrix& matrix);

// Row i is the embedding of dataset.samples[i].
Eigen::MatrixXd embed_all(const corpus::AnnotatedDataset& dataset, const SpuriousnessMatrix& matrix);

// Attributes sorted by γ(·,c) descending, ties broken lexicographically; at most n.
std::vector<int> top_attributes(const SpuriousnessMatrix& matrix, const corpus::AttributeVocabulary& vocabulary,
                                int c, std::size_t n);

// Attributes that avoid the corner case for at least one class of the
// training set; the rest carry no spuriousness information and are dropped
// from attribute-conditioned validation.
std::vector<int> informative_attributes(const corpus::AnnotatedDataset& train);

// CSV: class,attribute,variant,score,n_with,n_without,m_with,m_without
void write_score_report(const std::filesystem::path& path, const SpuriousnessMatrix& matrix,
                        const corpus::AttributeVocabulary& vocabulary);

// CSV: sample_id,class[,cluster],<one column per attribute>
void write_embeddings(const std::filesystem::path& path, const corpus::AnnotatedDataset& dataset,
                      const SpuriousnessMatrix& matrix, std::span<const int> clusters = {});

}  // namespace lbc::spuriousness
