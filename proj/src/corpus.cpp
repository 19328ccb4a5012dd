#include "lbc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace lbc::corpus {

using nlohmann::json;

AttributeVocabulary::AttributeVocabulary(std::vector<std::string> words, int min_frequency)
    : words_(std::move(words)), min_frequency_(min_frequency) {
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!index_.emplace(words_[i], static_cast<int>(i)).second)
            throw Error("duplicate attribute in vocabulary: " + words_[i]);
    }
}

std::optional<int> AttributeVocabulary::index_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

bool Sample::has_attribute(int a) const {
    return std::binary_search(attributes.begin(), attributes.end(), a);
}

std::vector<std::size_t> AnnotatedDataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
    for (const auto& s : samples) {
        if (s.label >= 1 && s.label <= num_classes) ++counts[static_cast<std::size_t>(s.label - 1)];
    }
    return counts;
}

AttributeVocabulary build_vocabulary(std::span<const AnnotationRecord> records, int min_frequency) {
    if (records.empty()) throw Error("build_vocabulary: no annotation records");
    if (min_frequency < 1) throw Error("build_vocabulary: min_frequency must be >= 1");

    std::map<std::string, int> frequency;  // ordered, so the result is lexicographic
    for (const auto& record : records) {
        std::set<std::string_view> seen;
        for (const auto& w : record.words) {
            if (seen.insert(w).second) ++frequency[w];
        }
    }
    std::vector<std::string> kept;
    for (const auto& [word, count] : frequency) {
        if (count >= min_frequency) kept.push_back(word);
    }
    if (kept.empty()) throw EmptyVocabularyError();
    return AttributeVocabulary(std::move(kept), min_frequency);
}

AnnotatedDataset attach_annotations(const AnnotatedDataset& dataset,
                                    std::span<const AnnotationRecord> records) {
    std::unordered_map<std::string, std::size_t> position;
    position.reserve(dataset.samples.size());
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) position.emplace(dataset.samples[i].id, i);

    AnnotatedDataset out = dataset;
    for (auto& s : out.samples) s.attributes.clear();
    for (const auto& record : records) {
        auto it = position.find(record.sample_id);
        if (it == position.end()) throw Error("annotation for unknown sample id: " + record.sample_id);
        auto& attrs = out.samples[it->second].attributes;
        for (const auto& w : record.words) {
            if (auto idx = dataset.vocabulary.index_of(w)) attrs.push_back(*idx);
        }
        std::sort(attrs.begin(), attrs.end());
        attrs.erase(std::unique(attrs.begin(), attrs.end()), attrs.end());
    }
    return out;
}

Partition partition(const AnnotatedDataset& dataset, int c, int a) {
    if (c < 1 || c > dataset.num_classes) throw Error("partition: class out of range");
    if (a < 0 || static_cast<std::size_t>(a) >= dataset.vocabulary.size())
        throw Error("partition: attribute out of range");
    Partition p;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        if (s.label != c) continue;
        (s.has_attribute(a) ? p.with : p.without).push_back(i);
    }
    return p;
}

void validate(const AnnotatedDataset& dataset, bool require_all_classes) {
    if (dataset.num_classes < 1) throw Error("dataset has no classes");
    const std::size_t dim = dataset.feature_dim();
    const auto n_attr = static_cast<int>(dataset.vocabulary.size());
    for (const auto& s : dataset.samples) {
        if (s.label < 1 || s.label > dataset.num_classes)
            throw Error("sample " + s.id + ": label " + std::to_string(s.label) + " outside 1.." +
                        std::to_string(dataset.num_classes));
        if (s.features.size() != dim) throw Error("sample " + s.id + ": feature dimension mismatch");
        for (int a : s.attributes) {
            if (a < 0 || a >= n_attr) throw Error("sample " + s.id + ": attribute index out of range");
        }
    }
    if (require_all_classes) {
        auto counts = dataset.class_counts();
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] == 0) throw Error("class " + std::to_string(c + 1) + " has no training samples");
        }
    }
}

// --- JSON-lines -------------------------------------------------------------

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

template <class F>
void for_each_line(const std::filesystem::path& path, F&& f) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            f(line);
        } catch (const json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace

AnnotationRecord parse_annotation_line(const std::string& line) {
    const json j = json::parse(line);
    AnnotationRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.words = j.at("attributes").get<std::vector<std::string>>();
    std::unordered_set<std::string> seen;
    for (const auto& w : r.words) {
        if (!seen.insert(w).second) throw Error("duplicate attribute '" + w + "' in record " + r.sample_id);
    }
    return r;
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
    std::vector<AnnotationRecord> records;
    for_each_line(path, [&](const std::string& line) { records.push_back(parse_annotation_line(line)); });
    return records;
}

void write_annotations(const std::filesystem::path& path, std::span<const AnnotationRecord> records) {
    auto out = open_out(path);
    for (const auto& r : records) {
        json j;
        j["sample_id"] = r.sample_id;
        j["attributes"] = r.words;
        out << j.dump() << '\n';
    }
}

std::vector<Sample> read_samples(const std::filesystem::path& path) {
    std::vector<Sample> samples;
    for_each_line(path, [&](const std::string& line) {
        const json j = json::parse(line);
        Sample s;
        s.id = j.at("sample_id").get<std::string>();
        s.features = j.at("features").get<std::vector<double>>();
        s.label = j.at("label").get<int>();
        if (auto it = j.find("group"); it != j.end() && !it->is_null()) s.group = it->get<int>();
        samples.push_back(std::move(s));
    });
    return samples;
}

void write_samples(const std::filesystem::path& path, std::span<const Sample> samples) {
    auto out = open_out(path);
    for (const auto& s : samples) {
        // Hand-rolled so features keep 17 significant digits and re-read bit-exactly.
        out << "{\"sample_id\":" << json(s.id).dump() << ",\"features\":[";
        for (std::size_t i = 0; i < s.features.size(); ++i) {
            if (i) out << ',';
            out << format_real(s.features[i]);
        }
        out << "],\"label\":" << s.label << ",\"group\":";
        if (s.group) out << *s.group; else out << "null";
        out << "}\n";
    }
}

std::vector<AnnotationRecord> annotations_of(const AnnotatedDataset& dataset) {
    std::vector<AnnotationRecord> records;
    records.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) {
        AnnotationRecord r{s.id, {}};
        for (int a : s.attributes) r.words.push_back(dataset.vocabulary.word(static_cast<std::size_t>(a)));
        records.push_back(std::move(r));
    }
    return records;
}

void write_vocabulary(const std::filesystem::path& path, const AttributeVocabulary& vocabulary) {
    auto out = open_out(path);
    for (const auto& w : vocabulary.words()) out << w << '\n';
}

AttributeVocabulary read_vocabulary(const std::filesystem::path& path, int min_frequency) {
    auto in = open_in(path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) words.push_back(line);
    }
    return AttributeVocabulary(std::move(words), min_frequency);
}

}  // namespace lbc::corpus

namespace lbc::corpus {

Splits ingest(std::vector<Sample> train, std::vector<Sample> val, std::vector<Sample> test,
              std::span<const AnnotationRecord> records, int min_frequency, int num_classes) {
    if (num_classes == 0) {
        for (const auto& s : train) num_classes = std::max(num_classes, s.label);
    }
    std::unordered_set<std::string> train_ids;
    for (const auto& s : train) train_ids.insert(s.id);

    std::vector<AnnotationRecord> train_records;
    for (const auto& r : records) {
        if (train_ids.count(r.sample_id)) train_records.push_back(r);
    }
    const AttributeVocabulary vocabulary = build_vocabulary(train_records, min_frequency);

    std::unordered_map<std::string, int> split_of;
    auto note = [&](const std::vector<Sample>& samples, int split) {
        for (const auto& s : samples) {
            if (!split_of.emplace(s.id, split).second) throw Error("sample id appears twice: " + s.id);
        }
    };
    note(train, 0);
    note(val, 1);
    note(test, 2);
    std::vector<AnnotationRecord> per_split[3];
    for (const auto& r : records) {
        auto it = split_of.find(r.sample_id);
        if (it == split_of.end()) throw Error("annotation for unknown sample id: " + r.sample_id);
        per_split[it->second].push_back(r);
    }

    auto assemble = [&](std::vector<Sample> samples, int split, bool require_all) {
        AnnotatedDataset d{std::move(samples), vocabulary, num_classes};
        d = attach_annotations(d, per_split[split]);
        validate(d, require_all);
        return d;
    };
    Splits out;
    out.train = assemble(std::move(train), 0, true);
    out.val = assemble(std::move(val), 1, false);
    out.test = assemble(std::move(test), 2, false);
    return out;
}

}  // namespace lbc::corpus
