#include "lbc/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <fstream>

namespace lbc::sampler {

GroupIndex::GroupIndex(int num_classes, int K)
    : num_classes_(num_classes), K_(K), cells_(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(K)) {
    if (num_classes < 1 || K < 1) throw Error("group index needs C >= 1 and K >= 1");
}

const std::vector<std::size_t>& GroupIndex::members(int c, int k) const {
    if (c < 1 || c > num_classes_ || k < 1 || k > K_) throw Error("group index cell out of range");
    return cells_[static_cast<std::size_t>(c - 1) * static_cast<std::size_t>(K_) + static_cast<std::size_t>(k - 1)];
}

std::vector<std::size_t>& GroupIndex::members(int c, int k) {
    return const_cast<std::vector<std::size_t>&>(std::as_const(*this).members(c, k));
}

std::size_t GroupIndex::total() const {
    std::size_t n = 0;
    for (const auto& cell : cells_) n += cell.size();
    return n;
}

GroupIndex build_index(const grouping::FineLabeling& labeling, const corpus::AnnotatedDataset& dataset) {
    if (labeling.cluster.size() != dataset.samples.size()) throw Error("labeling does not cover the dataset");
    GroupIndex index(dataset.num_classes, labeling.K);
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        index.members(dataset.samples[i].label, labeling.cluster[i]).push_back(i);
    return index;
}

std::vector<int> apportion(int total, const std::vector<double>& weights) {
    std::vector<int> seats(weights.size(), 0);
    if (weights.empty() || total <= 0) return seats;
    double sum = 0;
    for (double w : weights) {
        if (!(w >= 0) || !std::isfinite(w)) throw Error("apportion: weights must be finite and >= 0");
        sum += w;
    }
    std::vector<double> share(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i)
        share[i] = sum > 0 ? total * (weights[i] / sum) : static_cast<double>(total) / static_cast<double>(weights.size());
    int assigned = 0;
    std::vector<double> remainder(weights.size());
    for (std::size_t i = 0; i < share.size(); ++i) {
        seats[i] = static_cast<int>(std::floor(share[i]));
        remainder[i] = share[i] - seats[i];
        assigned += seats[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t j = 0; assigned < total; j = (j + 1) % order.size(), ++assigned) ++seats[order[j]];
    // Floating-point shares can overshoot by a seat; take it back from the smallest remainder.
    for (std::size_t j = order.size(); assigned > total && j-- > 0;) {
        if (seats[order[j]] > 0) {
            --seats[order[j]];
            --assigned;
        }
    }
    return seats;
}

std::vector<double> cross_class_weights(const std::vector<double>& sigma) {
    std::vector<double> rho;
    double total = 0;
    for (double s : sigma) total += std::log(s + 1.0);
    for (double s : sigma) rho.push_back(total > 0 ? std::log(s + 1.0) / total : 1.0 / static_cast<double>(sigma.size()));
    return rho;
}

BatchPlan plan(const GroupIndex& index, int batch_size) {
    const int nc = index.num_classes(), K = index.K();
    if (batch_size < nc) throw Error("batch size must be at least the number of classes");
    BatchPlan p;
    p.batch_size = batch_size;
    p.K = K;
    for (int c = 1; c <= nc; ++c) {
        double mean = 0;
        for (int k = 1; k <= K; ++k) mean += static_cast<double>(index.members(c, k).size());
        mean /= K;
        double var = 0;
        for (int k = 1; k <= K; ++k) {
            const double dev = static_cast<double>(index.members(c, k).size()) - mean;
            var += dev * dev;
        }
        var /= K;
        p.sigma.push_back(std::sqrt(var));
    }
    p.rho = cross_class_weights(p.sigma);

    p.class_quota = apportion(batch_size, p.rho);
    for (int c = 1; c <= nc; ++c) {
        std::vector<int> nonempty;
        for (int k = 1; k <= K; ++k)
            if (!index.members(c, k).empty()) nonempty.push_back(k);
        std::vector<int> cells(static_cast<std::size_t>(K), 0);
        const int quota = p.class_quota[static_cast<std::size_t>(c - 1)];
        if (!nonempty.empty()) {
            const auto split = apportion(quota, std::vector<double>(nonempty.size(), 1.0));
            for (std::size_t j = 0; j < nonempty.size(); ++j) cells[static_cast<std::size_t>(nonempty[j] - 1)] = split[j];
        } else if (quota > 0) {
            throw Error("class " + std::to_string(c) + " has a batch quota but no samples");
        }
        p.cell_quota.push_back(std::move(cells));
    }
    return p;
}

std::vector<BatchEntry> sample_batch(const GroupIndex& index, const BatchPlan& plan, Rng& rng) {
    if (plan.K != index.K() || static_cast<int>(plan.cell_quota.size()) != index.num_classes())
        throw Error("batch plan does not match the group index");
    std::vector<BatchEntry> batch;
    batch.reserve(static_cast<std::size_t>(plan.batch_size));
    for (int c = 1; c <= index.num_classes(); ++c) {
        for (int k = 1; k <= index.K(); ++k) {
            const int quota = plan.cell_quota[static_cast<std::size_t>(c - 1)][static_cast<std::size_t>(k - 1)];
            if (quota == 0) continue;
            const auto& cell = index.members(c, k);
            if (cell.empty()) throw Error("batch plan draws from an empty cell");
            std::uniform_int_distribution<std::size_t> pick(0, cell.size() - 1);
            const int g = grouping::fine_label(c, k, index.K());
            for (int q = 0; q < quota; ++q) batch.push_back({cell[pick(rng)], g});
        }
    }
    return batch;
}

void write_plan(const std::filesystem::path& path, const BatchPlan& plan) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "class,sigma,rho,class_quota";
    for (int k = 1; k <= plan.K; ++k) out << ",quota_k" << k;
    out << '\n';
    for (std::size_t c = 0; c < plan.sigma.size(); ++c) {
        out << c + 1 << ',' << format_real(plan.sigma[c]) << ',' << format_real(plan.rho[c]) << ','
            << plan.class_quota[c];
        for (int q : plan.cell_quota[c]) out << ',' << q;
        out << '\n';
    }
}

}  // namespace lbc::sampler
