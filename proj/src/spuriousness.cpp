#include "lbc/spuriousness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace lbc::spuriousness {

std::string to_string(ScoreVariant v) {
    switch (v) {
        case ScoreVariant::tanh_abs_log: return "tanh_abs_log";
        case ScoreVariant::tanh_log: return "tanh_log";
        case ScoreVariant::abs_log: return "abs_log";
        case ScoreVariant::log: return "log";
        case ScoreVariant::abs_diff: return "abs_diff";
        case ScoreVariant::diff: return "diff";
    }
    return "unknown";
}

ScoreVariant variant_from_string(const std::string& s) {
    for (ScoreVariant v : kAllVariants)
        if (to_string(v) == s) return v;
    throw Error("unknown score variant: " + s);
}

double apply_variant(ScoreVariant variant, double m_with, double m_without) {
    const double delta = m_with - m_without;
    // |ln(M_with/M_without)| as ln(max/min) so that swapping the arguments is exact
    const double hi = std::max(std::max(m_with, m_without), kAccuracyFloor);
    const double lo = std::max(std::min(m_with, m_without), kAccuracyFloor);
    const double magnitude = std::log(hi / lo);
    const double sign = m_with >= m_without ? 1.0 : -1.0;
    switch (variant) {
        case ScoreVariant::tanh_abs_log: return std::tanh(magnitude);
        case ScoreVariant::tanh_log: return sign * std::tanh(magnitude);
        case ScoreVariant::abs_log: return magnitude;
        case ScoreVariant::log: return sign * magnitude;
        case ScoreVariant::abs_diff: return std::abs(delta);
        case ScoreVariant::diff: return delta;
    }
    throw Error("unknown score variant");
}

double score_from_stats(ScoreVariant variant, const PairStats& stats) {
    if (stats.corner_case()) return 0.0;
    return apply_variant(variant, stats.m_with, stats.m_without);
}

SpuriousnessMatrix::SpuriousnessMatrix(int num_classes, std::size_t num_attributes, ScoreVariant variant,
                                       int epoch_tag)
    : num_classes_(num_classes),
      num_attributes_(num_attributes),
      variant_(variant),
      epoch_tag_(epoch_tag),
      cells_(static_cast<std::size_t>(num_classes) * num_attributes) {}

const PairStats& SpuriousnessMatrix::stats(int c, int a) const {
    if (c < 1 || c > num_classes_ || a < 0 || static_cast<std::size_t>(a) >= num_attributes_)
        throw Error("spuriousness matrix index out of range");
    return cells_[static_cast<std::size_t>(c - 1) * num_attributes_ + static_cast<std::size_t>(a)];
}

PairStats& SpuriousnessMatrix::stats(int c, int a) {
    return const_cast<PairStats&>(std::as_const(*this).stats(c, a));
}

double score(const nnet::Classifier& model, const corpus::AnnotatedDataset& dataset, int c, int a,
             ScoreVariant variant) {
    const corpus::Partition part = corpus::partition(dataset, c, a);
    if (part.with.empty() || part.without.empty()) return 0.0;
    auto class_accuracy = [&](const std::vector<std::size_t>& rows) {
        std::vector<corpus::Sample> subset;
        subset.reserve(rows.size());
        for (auto r : rows) subset.push_back(dataset.samples[r]);
        const auto pred = nnet::predict_classes(model, subset);
        return static_cast<double>(std::count(pred.begin(), pred.end(), c)) / static_cast<double>(rows.size());
    };
    return apply_variant(variant, class_accuracy(part.with), class_accuracy(part.without));
}

SpuriousnessMatrix score_matrix(const corpus::AnnotatedDataset& dataset, std::span<const int> predicted_classes,
                                ScoreVariant variant, int epoch_tag) {
    if (predicted_classes.size() != dataset.samples.size()) throw Error("one prediction per sample required");
    const int nc = dataset.num_classes;
    const std::size_t na = dataset.vocabulary.size();
    SpuriousnessMatrix m(nc, na, variant, epoch_tag);

    std::vector<std::size_t> class_total(static_cast<std::size_t>(nc), 0), class_correct(static_cast<std::size_t>(nc), 0);
    std::vector<std::size_t> with_total(static_cast<std::size_t>(nc) * na, 0), with_correct(with_total.size(), 0);
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        const auto c = static_cast<std::size_t>(s.label - 1);
        const bool hit = predicted_classes[i] == s.label;
        ++class_total[c];
        class_correct[c] += hit;
        for (int a : s.attributes) {
            ++with_total[c * na + static_cast<std::size_t>(a)];
            with_correct[c * na + static_cast<std::size_t>(a)] += hit;
        }
    }
    for (int c = 1; c <= nc; ++c) {
        const auto ci = static_cast<std::size_t>(c - 1);
        for (std::size_t a = 0; a < na; ++a) {
            PairStats& st = m.stats(c, static_cast<int>(a));
            const std::size_t wt = with_total[ci * na + a], wc = with_correct[ci * na + a];
            st.n_with = wt;
            st.n_without = class_total[ci] - wt;
            st.m_with = wt ? static_cast<double>(wc) / static_cast<double>(wt) : 0.0;
            st.m_without = st.n_without ? static_cast<double>(class_correct[ci] - wc) / static_cast<double>(st.n_without) : 0.0;
            st.score = score_from_stats(variant, st);
        }
    }
    return m;
}

SpuriousnessMatrix score_matrix(const nnet::Classifier& model, const corpus::AnnotatedDataset& dataset,
                                ScoreVariant variant, int epoch_tag) {
    const auto pred = nnet::predict_classes(model, dataset.samples);
    return score_matrix(dataset, pred, variant, epoch_tag);
}

Eigen::VectorXd embed(const corpus::Sample& sample, const SpuriousnessMatrix& matrix) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(matrix.num_attributes()));
    for (int a : sample.attributes) v(a) = matrix.value(sample.label, a);
    return v;
}

Eigen::MatrixXd embed_all(const corpus::AnnotatedDataset& dataset, const SpuriousnessMatrix& matrix) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(dataset.samples.size()),
                        static_cast<Eigen::Index>(matrix.num_attributes()));
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = embed(dataset.samples[i], matrix).transpose();
    return out;
}

std::vector<int> top_attributes(const SpuriousnessMatrix& matrix, const corpus::AttributeVocabulary& vocabulary,
                                int c, std::size_t n) {
    if (n < 1) throw Error("top_attributes: n must be >= 1");
    std::vector<int> order(matrix.num_attributes());
    for (std::size_t a = 0; a < order.size(); ++a) order[a] = static_cast<int>(a);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        const double sx = matrix.value(c, x), sy = matrix.value(c, y);
        if (sx != sy) return sx > sy;
        return vocabulary.word(static_cast<std::size_t>(x)) < vocabulary.word(static_cast<std::size_t>(y));
    });
    if (order.size() > n) order.resize(n);
    return order;
}

std::vector<int> informative_attributes(const corpus::AnnotatedDataset& train) {
    const std::size_t na = train.vocabulary.size();
    const auto nc = static_cast<std::size_t>(train.num_classes);
    const auto class_total = train.class_counts();
    std::vector<std::size_t> with(nc * na, 0);
    for (const auto& s : train.samples)
        for (int a : s.attributes) ++with[static_cast<std::size_t>(s.label - 1) * na + static_cast<std::size_t>(a)];
    std::vector<int> out;
    for (std::size_t a = 0; a < na; ++a) {
        for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t w = with[c * na + a];
            if (w > 0 && w < class_total[c]) {
                out.push_back(static_cast<int>(a));
                break;
            }
        }
    }
    return out;
}

void write_score_report(const std::filesystem::path& path, const SpuriousnessMatrix& matrix,
                        const corpus::AttributeVocabulary& vocabulary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "class,attribute,variant,score,n_with,n_without,m_with,m_without\n";
    for (int c = 1; c <= matrix.num_classes(); ++c) {
        for (std::size_t a = 0; a < matrix.num_attributes(); ++a) {
            const PairStats& st = matrix.stats(c, static_cast<int>(a));
            out << c << ',' << vocabulary.word(a) << ',' << to_string(matrix.variant()) << ','
                << format_real(st.score) << ',' << st.n_with << ',' << st.n_without << ','
                << format_real(st.m_with) << ',' << format_real(st.m_without) << '\n';
        }
    }
}

void write_embeddings(const std::filesystem::path& path, const corpus::AnnotatedDataset& dataset,
                      const SpuriousnessMatrix& matrix, std::span<const int> clusters) {
    if (!clusters.empty() && clusters.size() != dataset.samples.size())
        throw Error("one cluster label per sample required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "sample_id,class";
    if (!clusters.empty()) out << ",cluster";
    for (const auto& w : dataset.vocabulary.words()) out << ',' << w;
    out << '\n';
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        out << s.id << ',' << s.label;
        if (!clusters.empty()) out << ',' << clusters[i];
        const Eigen::VectorXd e = embed(s, matrix);
        for (Eigen::Index a = 0; a < e.size(); ++a) out << ',' << format_real(e(a));
        out << '\n';
    }
}

}  // namespace lbc::spuriousness
