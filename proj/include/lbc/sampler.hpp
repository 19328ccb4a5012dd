#pragma once

// Balanced batch construction over (class, behavior cluster) cells.
//
// Within a class the nonempty cells share the class quota equally; across
// classes the quota follows rho_c = ln(sigma_c + 1) / sum_c' ln(sigma_c' + 1),
// sigma_c being the standard deviation of the class's K cell sizes.

#include <cstddef>
#include <filesystem>
#include <vector>

#include "lbc/common.hpp"
#include "lbc/corpus.hpp"
#include "lbc/grouping.hpp"

namespace lbc::sampler {

class GroupIndex {
public:
    GroupIndex(int num_classes, int K);

    int num_classes() const { return num_classes_; }
    int K() const { return K_; }
    // Sample indices with y = c and p = k (both 1-based).
    const std::vector<std::size_t>& members(int c, int k) const;
    std::vector<std::size_t>& members(int c, int k);
    std::size_t total() const;

private:
    int num_classes_;
    int K_;
    std::vector<std::vector<std::size_t>> cells_;
};

struct BatchPlan {
    int batch_size = 0;
    int K = 0;
    std::vector<double> sigma;              // per class
    std::vector<double> rho;                // per class
    std::vector<int> class_quota;           // per class
    std::vector<std::vector<int>> cell_quota;  // [class][cluster]
};

struct BatchEntry {
    std::size_t sample;  // index into the training set
    int fine_label;      // g
};

GroupIndex build_index(const grouping::FineLabeling& labeling, const corpus::AnnotatedDataset& dataset);

// Largest-remainder apportionment of `total` seats by nonnegative weights;
// equal remainders go to the lower index. All-zero weights split evenly.
std::vector<int> apportion(int total, const std::vector<double>& weights);

// rho_c from per-class sigma; uniform when every sigma is 0.
std::vector<double> cross_class_weights(const std::vector<double>& sigma);

BatchPlan plan(const GroupIndex& index, int batch_size);

// cell_quota(c,k) uniform draws with replacement from each nonempty cell,
// emitted class by class, cluster by cluster.
std::vector<BatchEntry> sample_batch(const GroupIndex& index, const BatchPlan& plan, Rng& rng);

// CSV: class,sigma,rho,class_quota,quota_k1..quota_kK
void write_plan(const std::filesystem::path& path, const BatchPlan& plan);

}  // namespace lbc::sampler
