#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the code paths it is used to check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "lbc/nnet.hpp"
#include "lbc/sampler.hpp"

namespace oracle {

// Logits by explicit loops over the layer parameters.
inline std::vector<double> naive_forward(const lbc::nnet::Classifier& m, const std::vector<double>& x) {
    std::vector<double> a = x;
    auto layer = [&](const lbc::nnet::Dense& d) {
        std::vector<double> z(static_cast<std::size_t>(d.out()), 0.0);
        for (Eigen::Index i = 0; i < d.out(); ++i) {
            double s = d.bias(i);
            for (Eigen::Index j = 0; j < d.in(); ++j) s += d.weight(i, j) * a[static_cast<std::size_t>(j)];
            if (d.activation == lbc::nnet::Activation::relu && s < 0) s = 0;
            z[static_cast<std::size_t>(i)] = s;
        }
        a = std::move(z);
    };
    for (const auto& d : m.backbone) layer(d);
    layer(m.head);
    return a;
}

// Smallest |pre-activation| of any ReLU unit over the batch columns.
inline double relu_margin(const lbc::nnet::Classifier& m, const Eigen::MatrixXd& batch) {
    double margin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < batch.cols(); ++j) {
        std::vector<double> a(batch.col(j).data(), batch.col(j).data() + batch.rows());
        for (const auto& d : m.backbone) {
            std::vector<double> z(static_cast<std::size_t>(d.out()));
            for (Eigen::Index i = 0; i < d.out(); ++i) {
                double s = d.bias(i);
                for (Eigen::Index k = 0; k < d.in(); ++k) s += d.weight(i, k) * a[static_cast<std::size_t>(k)];
                margin = std::min(margin, std::abs(s));
                z[static_cast<std::size_t>(i)] = s > 0 ? s : 0;
            }
            a = std::move(z);
        }
    }
    return margin;
}

// Mean cross-entropy by explicit loops (log-sum-exp with max shift).
inline double naive_loss(const lbc::nnet::Classifier& m, const Eigen::MatrixXd& batch, const std::vector<int>& targets) {
    double total = 0;
    for (Eigen::Index j = 0; j < batch.cols(); ++j) {
        std::vector<double> x(batch.col(j).data(), batch.col(j).data() + batch.rows());
        const auto z = naive_forward(m, x);
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : z) mx = std::max(mx, v);
        double s = 0;
        for (double v : z) s += std::exp(v - mx);
        total += mx + std::log(s) - z[static_cast<std::size_t>(targets[static_cast<std::size_t>(j)] - 1)];
    }
    return total / static_cast<double>(batch.cols());
}

// Central differences of naive_loss w.r.t. every parameter, in gradient order
// (per layer: weights column-major as Eigen stores them, then biases).
inline std::vector<double> finite_difference_gradient(lbc::nnet::Classifier m, const Eigen::MatrixXd& batch,
                                                      const std::vector<int>& targets, double h) {
    std::vector<double> g;
    auto perturb = [&](double& p) {
        const double keep = p;
        p = keep + h;
        const double up = naive_loss(m, batch, targets);
        p = keep - h;
        const double down = naive_loss(m, batch, targets);
        p = keep;
        g.push_back((up - down) / (2 * h));
    };
    auto layer = [&](lbc::nnet::Dense& d) {
        for (Eigen::Index k = 0; k < d.weight.size(); ++k) perturb(d.weight.data()[k]);
        for (Eigen::Index k = 0; k < d.bias.size(); ++k) perturb(d.bias.data()[k]);
    };
    for (auto& d : m.backbone) layer(d);
    layer(m.head);
    return g;
}

// Minimum SSE over every 2-way split of the points (both parts nonempty).
inline double brute_force_two_means_sse(const std::vector<Eigen::VectorXd>& pts) {
    const std::size_t n = pts.size();
    double best = std::numeric_limits<double>::infinity();
    for (unsigned long mask = 1; mask < (1UL << (n - 1)); ++mask) {  // point n-1 always in part 0
        Eigen::VectorXd c[2] = {Eigen::VectorXd::Zero(pts[0].size()), Eigen::VectorXd::Zero(pts[0].size())};
        double cnt[2] = {0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            const int part = (mask >> i) & 1UL;
            c[part] += pts[i];
            cnt[part] += 1;
        }
        c[0] /= cnt[0];
        c[1] /= cnt[1];
        double sse = 0;
        for (std::size_t i = 0; i < n; ++i) sse += (pts[i] - c[(mask >> i) & 1UL]).squaredNorm();
        best = std::min(best, sse);
    }
    return best;
}

// Random (class, cluster) index: every class nonempty, some cells empty.
inline lbc::sampler::GroupIndex random_index(std::mt19937_64& rng) {
    const int C = 2 + static_cast<int>(rng() % 4);
    const int K = 2 + static_cast<int>(rng() % 5);
    lbc::sampler::GroupIndex index(C, K);
    std::size_t next = 0;
    for (int c = 1; c <= C; ++c) {
        const int keep = 1 + static_cast<int>(rng() % static_cast<unsigned>(K));
        for (int k = 1; k <= K; ++k) {
            if (k != keep && rng() % 3 == 0) continue;
            const int size = 1 + static_cast<int>(rng() % 200);
            for (int i = 0; i < size; ++i) index.members(c, k).push_back(next++);
        }
    }
    return index;
}

}  // namespace oracle
