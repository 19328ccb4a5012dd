#pragma once

// Behavior clusters in spuriousness-embedding space and the fine-grained
// labels g = p + (y - 1)·K derived from them (y and p are 1-based).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lbc/corpus.hpp"
#include "lbc/spuriousness.hpp"

namespace lbc::grouping {

struct KMeansOptions {
    int max_iterations = 300;
    // Independent k-means++ seedings; the lowest-SSE run is kept.
    int restarts = 10;
};

struct ClusterModel {
    std::vector<Eigen::VectorXd> centroids;
    int K = 0;
    std::uint64_t seed = 0;
    int iterations_run = 0;
    double sse = 0;
    std::vector<int> labels;          // 1-based, aligned with the fitted points
    std::vector<double> sse_history;  // SSE after every Lloyd update of the kept run
};

// Lloyd iterations from a k-means++ seeding, Euclidean distance. Empty clusters
// take the point farthest from its centroid. The result depends only on the
// seed and the point sequence.
ClusterModel fit_kmeans(std::span<const Eigen::VectorXd> points, int K, std::uint64_t seed,
                        const KMeansOptions& options = {});

// 1-based index of the nearest centroid, ties to the lowest index.
int assign(const ClusterModel& model, const Eigen::VectorXd& point);

double sum_squared_error(std::span<const Eigen::VectorXd> points, const ClusterModel& model);

inline int fine_label(int y, int p, int K) { return p + (y - 1) * K; }
inline int class_of_fine(int g, int K) { return (g + K - 1) / K; }

// Aligned with dataset.samples.
struct FineLabeling {
    int K = 0;
    std::vector<int> cluster;  // p in 1..K
    std::vector<int> fine;     // g in 1..K·C
};

// Embeds every sample, sorts the points by sample id and fits K clusters on
// them jointly across classes.
ClusterModel fit_behavior_clusters(const corpus::AnnotatedDataset& dataset,
                                   const spuriousness::SpuriousnessMatrix& matrix, int K, std::uint64_t seed,
                                   const KMeansOptions& options = {});

FineLabeling relabel(const corpus::AnnotatedDataset& dataset, const ClusterModel& model,
                     const spuriousness::SpuriousnessMatrix& matrix);

// CSV sample_id,class,p,g plus a centroid dump (one centroid per line).
void write_cluster_report(const std::filesystem::path& path, const corpus::AnnotatedDataset& dataset,
                          const FineLabeling& labeling);
void write_centroids(const std::filesystem::path& path, const ClusterModel& model);

}  // namespace lbc::grouping
