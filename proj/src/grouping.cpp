#include "lbc/grouping.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

namespace lbc::grouping {

namespace {

int nearest(const std::vector<Eigen::VectorXd>& centroids, const Eigen::VectorXd& point, double* dist = nullptr) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        const double d = (centroids[k] - point).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    if (dist) *dist = best_d;
    return best + 1;
}

std::vector<Eigen::VectorXd> seed_plus_plus(std::span<const Eigen::VectorXd> points, int K, Rng& rng) {
    const std::size_t n = points.size();
    std::vector<Eigen::VectorXd> centers;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    centers.push_back(points[pick(rng)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = (points[i] - centers[0]).squaredNorm();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (static_cast<int>(centers.size()) < K) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t chosen = 0;
        if (total > 0) {
            double target = unit(rng) * total;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                target -= d2[i];
                if (target < 0 && d2[i] > 0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        centers.push_back(points[chosen]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], (points[i] - centers.back()).squaredNorm());
    }
    return centers;
}

// One sweep of single-point moves: a point leaves cluster a for b when that
// lowers the total error, i.e. n_b/(n_b+1)·|x-c_b|² < n_a/(n_a-1)·|x-c_a|².
// Centroids are updated incrementally. Returns whether any point moved.
bool transfer_sweep(std::span<const Eigen::VectorXd> points, std::vector<int>& labels,
                    std::vector<Eigen::VectorXd>& centroids) {
    const std::size_t K = centroids.size();
    std::vector<double> sizes(K, 0.0);
    for (int l : labels) sizes[static_cast<std::size_t>(l - 1)] += 1;
    bool moved = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto a = static_cast<std::size_t>(labels[i] - 1);
        if (sizes[a] < 2) continue;
        const double leave = sizes[a] / (sizes[a] - 1) * (points[i] - centroids[a]).squaredNorm();
        std::size_t best = a;
        double join = leave;
        for (std::size_t b = 0; b < K; ++b) {
            if (b == a) continue;
            const double cost = sizes[b] / (sizes[b] + 1) * (points[i] - centroids[b]).squaredNorm();
            if (cost < join) {
                join = cost;
                best = b;
            }
        }
        if (best == a || !(join < leave * (1 - 1e-12))) continue;
        centroids[a] = (centroids[a] * sizes[a] - points[i]) / (sizes[a] - 1);
        centroids[best] = (centroids[best] * sizes[best] + points[i]) / (sizes[best] + 1);
        sizes[a] -= 1;
        sizes[best] += 1;
        labels[i] = static_cast<int>(best) + 1;
        moved = true;
    }
    return moved;
}

ClusterModel lloyd(std::span<const Eigen::VectorXd> points, int K, Rng& rng, int max_iterations) {
    const std::size_t n = points.size();
    const Eigen::Index dim = points[0].size();
    ClusterModel m;
    m.K = K;
    m.centroids = seed_plus_plus(points, K, rng);

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = nearest(m.centroids, points[i]);

    // Lloyd iterations; once they settle, a transfer sweep may move single
    // points out of the Lloyd fixed point, after which Lloyd resumes.
    bool converged = false;
    for (int it = 1; it <= max_iterations; ++it) {
        if (converged) {
            if (!transfer_sweep(points, labels, m.centroids)) break;
            converged = false;
        }
        const std::vector<int> assigned = labels;
        // Re-seed empty clusters with the points farthest from their centroids.
        std::vector<std::size_t> sizes(static_cast<std::size_t>(K), 0);
        for (int l : labels) ++sizes[static_cast<std::size_t>(l - 1)];
        for (int k = 1; k <= K; ++k) {
            if (sizes[static_cast<std::size_t>(k - 1)] > 0) continue;
            std::size_t far = n;
            double far_d = -1;
            for (std::size_t i = 0; i < n; ++i) {
                if (sizes[static_cast<std::size_t>(labels[i] - 1)] < 2) continue;
                const double d = (points[i] - m.centroids[static_cast<std::size_t>(labels[i] - 1)]).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far == n) break;
            --sizes[static_cast<std::size_t>(labels[far] - 1)];
            labels[far] = k;
            ++sizes[static_cast<std::size_t>(k - 1)];
        }

        for (auto& c : m.centroids) c = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i < n; ++i) m.centroids[static_cast<std::size_t>(labels[i] - 1)] += points[i];
        for (int k = 0; k < K; ++k)
            if (sizes[static_cast<std::size_t>(k)] > 0) m.centroids[static_cast<std::size_t>(k)] /= static_cast<double>(sizes[static_cast<std::size_t>(k)]);

        double sse = 0;
        for (std::size_t i = 0; i < n; ++i)
            sse += (points[i] - m.centroids[static_cast<std::size_t>(labels[i] - 1)]).squaredNorm();
        m.sse_history.push_back(sse);

        std::vector<int> next(n);
        for (std::size_t i = 0; i < n; ++i) next[i] = nearest(m.centroids, points[i]);
        m.iterations_run = it;
        converged = next == assigned;
        labels = std::move(next);
    }
    m.labels = std::move(labels);
    m.sse = sum_squared_error(points, m);
    return m;
}

}  // namespace

ClusterModel fit_kmeans(std::span<const Eigen::VectorXd> points, int K, std::uint64_t seed,
                        const KMeansOptions& options) {
    if (K < 2) throw Error("k-means needs K >= 2");
    if (points.size() < static_cast<std::size_t>(K)) throw Error("insufficient points for k-means");
    if (options.restarts < 1 || options.max_iterations < 1) throw Error("k-means options must be >= 1");
    for (const auto& p : points)
        if (p.size() != points[0].size()) throw Error("k-means points differ in dimension");

    Rng rng(seed);
    ClusterModel best;
    for (int r = 0; r < options.restarts; ++r) {
        ClusterModel m = lloyd(points, K, rng, options.max_iterations);
        if (r == 0 || m.sse < best.sse) best = std::move(m);
    }
    best.seed = seed;
    return best;
}

int assign(const ClusterModel& model, const Eigen::VectorXd& point) {
    if (model.centroids.empty() || point.size() != model.centroids[0].size())
        throw Error("point dimension does not match centroids");
    return nearest(model.centroids, point);
}

double sum_squared_error(std::span<const Eigen::VectorXd> points, const ClusterModel& model) {
    double sse = 0;
    for (const auto& p : points) {
        double d = 0;
        nearest(model.centroids, p, &d);
        sse += d;
    }
    return sse;
}

ClusterModel fit_behavior_clusters(const corpus::AnnotatedDataset& dataset,
                                   const spuriousness::SpuriousnessMatrix& matrix, int K, std::uint64_t seed,
                                   const KMeansOptions& options) {
    std::vector<std::size_t> order(dataset.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return dataset.samples[a].id < dataset.samples[b].id; });
    std::vector<Eigen::VectorXd> points;
    points.reserve(order.size());
    for (auto i : order) points.push_back(spuriousness::embed(dataset.samples[i], matrix));
    ClusterModel m = fit_kmeans(points, K, seed, options);
    // Report labels in dataset order.
    std::vector<int> labels(order.size());
    for (std::size_t j = 0; j < order.size(); ++j) labels[order[j]] = m.labels[j];
    m.labels = std::move(labels);
    return m;
}

FineLabeling relabel(const corpus::AnnotatedDataset& dataset, const ClusterModel& model,
                     const spuriousness::SpuriousnessMatrix& matrix) {
    FineLabeling out;
    out.K = model.K;
    out.cluster.reserve(dataset.samples.size());
    out.fine.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) {
        const int p = assign(model, spuriousness::embed(s, matrix));
        out.cluster.push_back(p);
        out.fine.push_back(fine_label(s.label, p, model.K));
    }
    return out;
}

void write_cluster_report(const std::filesystem::path& path, const corpus::AnnotatedDataset& dataset,
                          const FineLabeling& labeling) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "sample_id,class,p,g\n";
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        out << dataset.samples[i].id << ',' << dataset.samples[i].label << ',' << labeling.cluster[i] << ','
            << labeling.fine[i] << '\n';
}

void write_centroids(const std::filesystem::path& path, const ClusterModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& c : model.centroids) {
        for (Eigen::Index i = 0; i < c.size(); ++i) out << (i ? "," : "") << format_real(c(i));
        out << '\n';
    }
}

}  // namespace lbc::grouping
