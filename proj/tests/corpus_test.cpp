#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lbc/corpus.hpp"
#include "lbc/synthgen.hpp"

using namespace lbc;
using namespace lbc::corpus;

namespace {

std::vector<AnnotationRecord> repeated(const std::string& word, int n, const std::string& prefix) {
    std::vector<AnnotationRecord> out;
    for (int i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i), {word}});
    return out;
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "lbc_corpus_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("vocabulary threshold above corpus size is an empty-vocabulary error") {
    auto records = repeated("water", 3, "s");
    CHECK_THROWS_AS(build_vocabulary(records, 10), EmptyVocabularyError);
}

TEST_CASE("vocabulary keeps words reaching the threshold") {
    auto records = repeated("water", 12, "w");
    auto rare = repeated("frisbee", 3, "f");
    records.insert(records.end(), rare.begin(), rare.end());
    const auto vocab = build_vocabulary(records, 10);
    REQUIRE(vocab.size() == 1);
    CHECK(vocab.word(0) == "water");
    CHECK(vocab.min_frequency() == 10);
}

TEST_CASE("frequency counts records, not occurrences") {
    // duplicate words are rejected at parse, so a word can add at most one per record
    CHECK_THROWS_AS(parse_annotation_line(R"({"sample_id":"a","attributes":["x","x"]})"), Error);
    auto records = repeated("sky", 9, "s");
    CHECK_THROWS_AS(build_vocabulary(records, 10), EmptyVocabularyError);
    records.push_back({"extra", {"sky"}});
    CHECK(build_vocabulary(records, 10).size() == 1);
}

TEST_CASE("vocabulary order is lexicographic and deterministic") {
    std::vector<AnnotationRecord> records = {{"1", {"zebra", "apple"}}, {"2", {"mango", "apple"}},
                                             {"3", {"zebra", "mango"}}};
    const auto v1 = build_vocabulary(records, 1);
    std::reverse(records.begin(), records.end());
    const auto v2 = build_vocabulary(records, 1);
    CHECK(v1 == v2);
    CHECK(v1.words() == std::vector<std::string>{"apple", "mango", "zebra"});
    CHECK(*v1.index_of("mango") == 1);
    CHECK_FALSE(v1.index_of("kiwi").has_value());
}

TEST_CASE("vocabulary rejects duplicate words") {
    CHECK_THROWS_AS(AttributeVocabulary({"a", "b", "a"}, 1), Error);
}

TEST_CASE("out-of-vocabulary words are dropped and unannotated samples keep an empty set") {
    AnnotatedDataset d;
    d.num_classes = 1;
    d.vocabulary = AttributeVocabulary({"water"}, 1);
    d.samples = {{"s1", {0.0}, 1, {}, {}}, {"s2", {0.0}, 1, {0}, {}}};
    std::vector<AnnotationRecord> records = {{"s1", {"water", "frisbee"}}};
    const auto out = attach_annotations(d, records);
    CHECK(out.samples[0].attributes == std::vector<int>{0});
    CHECK(out.samples[1].attributes.empty());
}

TEST_CASE("annotation for an unknown sample is an error") {
    AnnotatedDataset d;
    d.num_classes = 1;
    d.vocabulary = AttributeVocabulary({"water"}, 1);
    d.samples = {{"s1", {0.0}, 1, {}, {}}};
    std::vector<AnnotationRecord> records = {{"nope", {"water"}}};
    CHECK_THROWS_AS(attach_annotations(d, records), Error);
}

TEST_CASE("partition sizes and totality") {
    AnnotatedDataset d;
    d.num_classes = 2;
    d.vocabulary = AttributeVocabulary({"a", "b"}, 1);
    for (int i = 0; i < 10; ++i) {
        Sample s{"c1-" + std::to_string(i), {0.0}, 1, {}, {}};
        if (i < 4) s.attributes.push_back(0);
        s.attributes.push_back(1);
        d.samples.push_back(s);
    }
    d.samples.push_back({"c2", {0.0}, 2, {0}, {}});
    const auto p = partition(d, 1, 0);
    CHECK(p.with.size() == 4);
    CHECK(p.without.size() == 6);
    const auto all = partition(d, 1, 1);
    CHECK(all.with.size() == 10);
    CHECK(all.without.empty());
    CHECK_THROWS_AS(partition(d, 3, 0), Error);
    CHECK_THROWS_AS(partition(d, 1, 2), Error);
}

TEST_CASE("partition is total over random datasets") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        AnnotatedDataset d;
        d.num_classes = 3;
        d.vocabulary = AttributeVocabulary({"a", "b", "c", "d"}, 1);
        const int n = 1 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) {
            Sample s{std::to_string(i), {0.0}, 1 + static_cast<int>(rng() % 3), {}, {}};
            for (int a = 0; a < 4; ++a)
                if (rng() % 2) s.attributes.push_back(a);
            d.samples.push_back(s);
        }
        const auto counts = d.class_counts();
        for (int c = 1; c <= 3; ++c)
            for (int a = 0; a < 4; ++a) {
                const auto p = partition(d, c, a);
                CHECK(p.with.size() + p.without.size() == counts[static_cast<std::size_t>(c - 1)]);
                for (auto i : p.with) CHECK(d.samples[i].has_attribute(a));
                for (auto i : p.without) CHECK_FALSE(d.samples[i].has_attribute(a));
            }
    }
}

TEST_CASE("majority-group fraction of the default generator") {
    const auto data = synthgen::generate(synthgen::SynthSpec{});
    auto splits = ingest(data.train, data.val, data.test, data.records, 10);
    const int water = *splits.train.vocabulary.index_of("water");
    const auto p = partition(splits.train, 2, water);
    const double frac = static_cast<double>(p.with.size()) / static_cast<double>(p.with.size() + p.without.size());
    CHECK(p.with.size() == 1057);
    CHECK(p.without.size() == 56);
    CHECK(frac == doctest::Approx(0.95).epsilon(0.01));
}

TEST_CASE("validate catches malformed datasets") {
    AnnotatedDataset d;
    d.num_classes = 2;
    d.vocabulary = AttributeVocabulary({"a"}, 1);
    d.samples = {{"x", {0.0, 1.0}, 1, {0}, {}}, {"y", {0.0, 1.0}, 2, {}, {}}};
    CHECK_NOTHROW(validate(d, true));
    auto bad = d;
    bad.samples[1].label = 3;
    CHECK_THROWS_AS(validate(bad, false), Error);
    bad = d;
    bad.samples[1].features.pop_back();
    CHECK_THROWS_AS(validate(bad, false), Error);
    bad = d;
    bad.samples[0].attributes = {1};
    CHECK_THROWS_AS(validate(bad, false), Error);
    bad = d;
    bad.samples[1].label = 1;
    CHECK_NOTHROW(validate(bad, false));
    CHECK_THROWS_AS(validate(bad, true), Error);
}

TEST_CASE("JSONL round trip reproduces the dataset") {
    synthgen::SynthSpec spec;
    spec.group_counts = {{40, 5}, {4, 30}};
    spec.val_counts = {10, 10};
    spec.test_counts = {10, 10};
    spec.seed = 3;
    const auto data = synthgen::generate(spec);
    const auto original = ingest(data.train, data.val, data.test, data.records, 2);

    write_samples(scratch("train.jsonl"), original.train.samples);
    write_samples(scratch("val.jsonl"), original.val.samples);
    write_samples(scratch("test.jsonl"), original.test.samples);
    std::vector<AnnotationRecord> records;
    for (const auto* split : {&original.train, &original.val, &original.test}) {
        auto r = annotations_of(*split);
        records.insert(records.end(), r.begin(), r.end());
    }
    write_annotations(scratch("annotations.jsonl"), records);

    const auto again = ingest(read_samples(scratch("train.jsonl")), read_samples(scratch("val.jsonl")),
                              read_samples(scratch("test.jsonl")), read_annotations(scratch("annotations.jsonl")), 2);
    CHECK(again.train == original.train);
    CHECK(again.val == original.val);
    CHECK(again.test == original.test);
}

TEST_CASE("vocabulary file round trip") {
    AttributeVocabulary v({"branch", "land", "water"}, 10);
    write_vocabulary(scratch("vocab.txt"), v);
    CHECK(read_vocabulary(scratch("vocab.txt"), 10) == v);
}

TEST_CASE("annotation parsing rejects malformed lines") {
    CHECK_NOTHROW(parse_annotation_line(R"({"sample_id":"a","attributes":[]})"));
    CHECK_THROWS(parse_annotation_line(R"({"sample_id":"a"})"));
    CHECK_THROWS(parse_annotation_line(R"({"attributes":["x"]})"));
    CHECK_THROWS(parse_annotation_line("not json"));
}

TEST_CASE("ingest builds the vocabulary from training records only") {
    std::vector<Sample> train = {{"t1", {0.0}, 1, {}, {}}, {"t2", {0.0}, 2, {}, {}}};
    std::vector<Sample> val = {{"v1", {0.0}, 1, {}, {}}};
    std::vector<Sample> test = {{"x1", {0.0}, 2, {}, {}}};
    std::vector<AnnotationRecord> records = {
        {"t1", {"sky"}}, {"t2", {"sky"}}, {"v1", {"sky", "moon"}}, {"x1", {"moon"}}};
    const auto s = ingest(train, val, test, records, 1);
    CHECK(s.train.vocabulary.words() == std::vector<std::string>{"sky"});
    CHECK(s.val.samples[0].attributes == std::vector<int>{0});
    CHECK(s.test.samples[0].attributes.empty());
    CHECK(s.train.num_classes == 2);
    std::vector<AnnotationRecord> stray = {{"t1", {"sky"}}, {"zz", {"sky"}}};
    CHECK_THROWS_AS(ingest(train, val, test, stray, 1), Error);
}
