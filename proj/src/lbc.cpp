#include "lbc/lbc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace lbc {

std::string to_string(InitMode m) { return m == InitMode::random ? "random" : "erm_checkpoint"; }

InitMode init_mode_from_string(const std::string& s) {
    if (s == "erm_checkpoint") return InitMode::erm_checkpoint;
    if (s == "random") return InitMode::random;
    throw Error("unknown init mode: " + s);
}

void LBCConfig::validate() const {
    if (K < 2) throw Error("lbc: K must be >= 2");
    if (epochs < 1) throw Error("lbc: epochs must be >= 1");
    if (batches_per_epoch < 1) throw Error("lbc: batches_per_epoch must be >= 1");
    if (batch_size < 1) throw Error("lbc: batch_size must be >= 1");
    train.validate();
}

int predict_class(const nnet::Classifier& model, const Eigen::VectorXd& features, int K) {
    if (model.head_width() != K * model.num_classes) throw Error("predict_class: head width is not K·C");
    return nnet::class_of_output(nnet::argmax(nnet::forward(model, features)), K);
}

namespace {

std::vector<int> classes_with_k(const nnet::Classifier& model, std::span<const corpus::Sample> samples, int K) {
    if (model.head_width() != K * model.num_classes)
        throw Error("head width " + std::to_string(model.head_width()) + " is not K·C for K=" + std::to_string(K));
    std::vector<int> pred = nnet::predict(model, samples);
    for (int& j : pred) j = nnet::class_of_output(j, K);
    return pred;
}

}  // namespace

PseudoUnbiased pseudo_unbiased_accuracy(const nnet::Classifier& model, const corpus::AnnotatedDataset& val,
                                        std::span<const int> attributes, int K) {
    const auto pred = classes_with_k(model, val.samples, K);
    PseudoUnbiased out;
    double sum = 0;
    for (int a : attributes) {
        AttributeAccuracy acc{a, 0, 0, 0};
        for (std::size_t i = 0; i < val.samples.size(); ++i) {
            if (!val.samples[i].has_attribute(a)) continue;
            ++acc.count;
            acc.correct += pred[i] == val.samples[i].label;
        }
        if (acc.count == 0) continue;
        acc.accuracy = static_cast<double>(acc.correct) / static_cast<double>(acc.count);
        sum += acc.accuracy;
        out.per_attribute.push_back(acc);
    }
    if (out.per_attribute.empty()) throw Error("no attribute coverage in validation");
    out.value = sum / static_cast<double>(out.per_attribute.size());
    return out;
}

PseudoUnbiased pseudo_unbiased_accuracy(const nnet::Classifier& model, const corpus::AnnotatedDataset& val, int K) {
    std::vector<int> all(val.vocabulary.size());
    for (std::size_t a = 0; a < all.size(); ++a) all[a] = static_cast<int>(a);
    return pseudo_unbiased_accuracy(model, val, all, K);
}

GroupReport evaluate_groups(const nnet::Classifier& model, const corpus::AnnotatedDataset& test, int K) {
    if (test.samples.empty()) throw Error("evaluate_groups: empty dataset");
    for (const auto& s : test.samples)
        if (!s.group) throw Error("evaluate_groups: sample " + s.id + " has no group label");
    const auto pred = classes_with_k(model, test.samples, K);
    std::map<int, std::size_t> correct;
    GroupReport r;
    std::size_t total_correct = 0;
    for (std::size_t i = 0; i < test.samples.size(); ++i) {
        const int g = *test.samples[i].group;
        const bool hit = pred[i] == test.samples[i].label;
        ++r.group_size[g];
        correct[g] += hit;
        total_correct += hit;
    }
    r.worst = std::numeric_limits<double>::infinity();
    for (const auto& [g, n] : r.group_size) {
        const double acc = static_cast<double>(correct[g]) / static_cast<double>(n);
        r.per_group[g] = acc;
        r.worst = std::min(r.worst, acc);
    }
    r.average = static_cast<double>(total_correct) / static_cast<double>(test.samples.size());
    r.gap = r.average - r.worst;
    return r;
}

LBCResult run_lbc(const nnet::Classifier& erm_model, const corpus::AnnotatedDataset& train,
                  const corpus::AnnotatedDataset& val, const LBCConfig& config, const EpochObserver& observer) {
    config.validate();
    const int nc = train.num_classes;
    const int K = config.K;
    const std::uint64_t seed = config.train.seed;

    nnet::Classifier model;
    if (config.init_mode == InitMode::erm_checkpoint) {
        if (erm_model.head_width() != nc || erm_model.num_classes != nc)
            throw Error("lbc: the ERM model must have a " + std::to_string(nc) + "-way head");
        model = nnet::replace_head(erm_model, K * nc);
    } else {
        model = nnet::Classifier::make(static_cast<int>(train.feature_dim()), config.hidden, nc, K * nc,
                                       derive_seed(seed, "init"));
    }

    const Eigen::MatrixXd features = nnet::stack_features(train.samples);
    const std::vector<int> attributes = spuriousness::informative_attributes(train);
    const bool val_has_groups =
        !val.samples.empty() && std::all_of(val.samples.begin(), val.samples.end(), [](const auto& s) { return s.group.has_value(); });

    nnet::SgdMomentum optimizer(model, config.train.learning_rate, config.train.momentum, config.train.weight_decay);
    Rng batch_rng = make_rng(seed, "sampler");

    LBCResult result;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;

        const auto pred = classes_with_k(model, train.samples, K);
        auto scores = spuriousness::score_matrix(train, pred, config.variant, epoch);
        for (int c = 1; c <= nc; ++c) {
            const auto top = train.vocabulary.empty() ? std::vector<int>{} : spuriousness::top_attributes(scores, train.vocabulary, c, 1);
            rec.top_attribute.push_back(top.empty() ? -1 : top.front());
        }

        const grouping::ClusterModel clusters = grouping::fit_behavior_clusters(
            train, scores, K, derive_seed(seed, "kmeans" + std::to_string(epoch)), config.kmeans);
        const grouping::FineLabeling labeling = grouping::relabel(train, clusters, scores);
        const sampler::GroupIndex index = sampler::build_index(labeling, train);
        rec.plan = sampler::plan(index, config.batch_size);

        double loss_sum = 0;
        for (int b = 0; b < config.batches_per_epoch; ++b) {
            const auto batch = sampler::sample_batch(index, rec.plan, batch_rng);
            Eigen::MatrixXd x(features.rows(), static_cast<Eigen::Index>(batch.size()));
            std::vector<int> targets;
            targets.reserve(batch.size());
            for (std::size_t j = 0; j < batch.size(); ++j) {
                x.col(static_cast<Eigen::Index>(j)) = features.col(static_cast<Eigen::Index>(batch[j].sample));
                targets.push_back(batch[j].fine_label);
            }
            double batch_loss = 0;
            const nnet::Gradient g = nnet::gradient(model, x, targets, &batch_loss);
            if (!std::isfinite(batch_loss)) throw Error("non-finite loss in LBC epoch " + std::to_string(epoch));
            optimizer.step(model, g);
            loss_sum += batch_loss;
        }
        rec.train_loss = loss_sum / config.batches_per_epoch;

        const PseudoUnbiased pu = pseudo_unbiased_accuracy(model, val, attributes, K);
        rec.pseudo_unbiased = pu.value;
        rec.per_attribute = pu.per_attribute;
        if (val_has_groups) rec.val_groups = evaluate_groups(model, val, K);

        result.selection.history.emplace_back(epoch, pu.value);
        if (epoch == 1 || pu.value > result.selection.best_metric) {
            result.selection.best_metric = pu.value;
            result.selection.best_epoch = epoch;
            result.selection.best_checkpoint = model;
        }
        if (observer) observer(rec, model);
        result.last_scores = std::move(scores);
        result.epochs.push_back(std::move(rec));
    }
    result.best = result.selection.best_checkpoint;
    return result;
}

void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& epochs,
                   const corpus::AttributeVocabulary& vocabulary, int num_classes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch,train_loss,pseudo_unbiased,val_worst,val_average,val_gap";
    for (int c = 1; c <= num_classes; ++c) out << ",top_class" << c;
    out << '\n';
    for (const auto& rec : epochs) {
        out << rec.epoch << ',' << format_real(rec.train_loss) << ',' << format_real(rec.pseudo_unbiased);
        if (rec.val_groups)
            out << ',' << format_real(rec.val_groups->worst) << ',' << format_real(rec.val_groups->average) << ','
                << format_real(rec.val_groups->gap);
        else
            out << ",,,";
        for (int a : rec.top_attribute) out << ',' << (a >= 0 ? vocabulary.word(static_cast<std::size_t>(a)) : "");
        out << '\n';
    }
}

void write_attribute_accuracies(const std::filesystem::path& path, const std::vector<EpochRecord>& epochs,
                                const corpus::AttributeVocabulary& vocabulary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch,attribute,count,correct,accuracy\n";
    for (const auto& rec : epochs)
        for (const auto& a : rec.per_attribute)
            out << rec.epoch << ',' << vocabulary.word(static_cast<std::size_t>(a.attribute)) << ',' << a.count << ','
                << a.correct << ',' << format_real(a.accuracy) << '\n';
}

}  // namespace lbc
