#pragma once

// Data model for annotated classification corpora: samples carrying feature
// vectors, 1-based class labels and detected attribute sets, plus the
// attribute vocabulary shared by every split of an experiment.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lbc/common.hpp"

namespace lbc::corpus {

class AttributeVocabulary {
public:
    AttributeVocabulary() = default;
    // Index i_a is the position of the word in `words`; duplicates are rejected.
    AttributeVocabulary(std::vector<std::string> words, int min_frequency);

    std::size_t size() const { return words_.size(); }
    bool empty() const { return words_.empty(); }
    const std::string& word(std::size_t index) const { return words_.at(index); }
    const std::vector<std::string>& words() const { return words_; }
    std::optional<int> index_of(const std::string& word) const;
    int min_frequency() const { return min_frequency_; }

    bool operator==(const AttributeVocabulary&) const = default;

private:
    std::vector<std::string> words_;
    std::map<std::string, int> index_;
    int min_frequency_ = 1;
};

struct Sample {
    std::string id;
    std::vector<double> features;
    int label = 1;                 // 1..C
    std::vector<int> attributes;   // sorted vocabulary indices
    std::optional<int> group;      // ground-truth group, evaluation only

    bool has_attribute(int a) const;
    bool operator==(const Sample&) const = default;
};

struct AnnotatedDataset {
    std::vector<Sample> samples;
    AttributeVocabulary vocabulary;
    int num_classes = 0;

    std::size_t size() const { return samples.size(); }
    std::size_t feature_dim() const { return samples.empty() ? 0 : samples.front().features.size(); }
    std::vector<std::size_t> class_counts() const;  // index c-1 holds |class c|

    bool operator==(const AnnotatedDataset&) const = default;
};

struct AnnotationRecord {
    std::string sample_id;
    std::vector<std::string> words;  // distinct within a record
};

// Raised when frequency filtering leaves nothing; callers may lower the threshold.
class EmptyVocabularyError : public Error {
public:
    EmptyVocabularyError() : Error("no usable attributes after frequency filtering") {}
};

// Words contained in at least `min_frequency` records (one count per record).
AttributeVocabulary build_vocabulary(std::span<const AnnotationRecord> records, int min_frequency = 10);

// Replaces every sample's attribute set with the in-vocabulary words of its
// record; samples without a record end up with an empty set.
AnnotatedDataset attach_annotations(const AnnotatedDataset& dataset,
                                    std::span<const AnnotationRecord> records);

struct Partition {
    std::vector<std::size_t> with;     // class c, attribute present
    std::vector<std::size_t> without;  // class c, attribute absent
};

// Sample indices of class `c` split on presence of attribute `a`.
Partition partition(const AnnotatedDataset& dataset, int c, int a);

// Checks labels, feature dimensions and attribute indices. Training splits
// must additionally contain every class.
void validate(const AnnotatedDataset& dataset, bool require_all_classes);

// --- JSON-lines I/O ---------------------------------------------------------

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, std::span<const AnnotationRecord> records);
AnnotationRecord parse_annotation_line(const std::string& line);

// Samples are returned without attributes; attach them with attach_annotations.
std::vector<Sample> read_samples(const std::filesystem::path& path);
void write_samples(const std::filesystem::path& path, std::span<const Sample> samples);

// Annotation records reconstructed from a dataset's attribute sets.
std::vector<AnnotationRecord> annotations_of(const AnnotatedDataset& dataset);

void write_vocabulary(const std::filesystem::path& path, const AttributeVocabulary& vocabulary);
AttributeVocabulary read_vocabulary(const std::filesystem::path& path, int min_frequency = 1);

}  // namespace lbc::corpus

namespace lbc::corpus {

struct Splits {
    AnnotatedDataset train;
    AnnotatedDataset val;
    AnnotatedDataset test;
};

// Builds the vocabulary from the records of training samples only and attaches
// it to every split. Records may cover any split; ids outside all three are an
// error. `num_classes` of 0 infers C from the largest training label.
Splits ingest(std::vector<Sample> train, std::vector<Sample> val, std::vector<Sample> test,
              std::span<const AnnotationRecord> records, int min_frequency, int num_classes = 0);

}  // namespace lbc::corpus
