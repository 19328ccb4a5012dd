#pragma once

// Synthetic spurious-correlation benchmarks. Each sample of class c in
// spurious group s has features
//
//     core_gain * u_c + spurious_gain * v_s + N(0, noise_std^2 I)
//
// with {u_c} and {v_s} orthonormal. Annotation records name the planted
// attribute of the sample's group plus randomly attached nuisance words whose
// inclusion rate decays geometrically, so the rare ones fall below the
// vocabulary frequency threshold.

#include <cstdint>
#include <string>
#include <vector>

#include "lbc/corpus.hpp"

namespace lbc::synthgen {

struct SynthSpec {
    int num_classes = 2;
    int feature_dim = 20;
    double core_gain = 2.4;
    double spurious_gain = 4.0;
    double noise_std = 1.0;
    // [class][spurious attribute] training sample counts.
    std::vector<std::vector<int>> group_counts = {{3498, 184}, {56, 1057}};
    // Per-class totals for the evaluation splits, spread evenly over groups.
    std::vector<int> val_counts = {933, 266};
    std::vector<int> test_counts = {4510, 1284};
    std::vector<std::string> spurious_names = {"land", "water"};
    int nuisance_attributes = 12;
    double nuisance_rate = 0.4;
    double nuisance_decay = 0.6;
    std::uint64_t seed = 0;

    int num_spurious() const { return group_counts.empty() ? 0 : static_cast<int>(group_counts.front().size()); }
    // Throws lbc::Error naming the offending field.
    void validate() const;
};

struct SynthData {
    std::vector<corpus::Sample> train;
    std::vector<corpus::Sample> val;
    std::vector<corpus::Sample> test;
    std::vector<corpus::AnnotationRecord> records;  // all splits, in sample order
};

// Pure function of the spec (including its seed).
SynthData generate(const SynthSpec& spec);

// Words used for nuisance attributes, in generation order.
std::vector<std::string> nuisance_names(int count);

// Ground-truth group index of (class c in 1..C, spurious attribute s in 0..S-1).
inline int group_of(int c, int s, int num_spurious) { return (c - 1) * num_spurious + s; }

// The spurious attribute each class co-occurs with most in training (its
// majority group), as an index into spurious_names.
std::vector<int> planted_attribute_per_class(const SynthSpec& spec);

}  // namespace lbc::synthgen
