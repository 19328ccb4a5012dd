#pragma once

// Fully-connected classifier f = head ∘ backbone in double precision, with
// analytic cross-entropy gradients and an SGD-with-momentum trainer.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lbc/common.hpp"
#include "lbc/corpus.hpp"

namespace lbc::nnet {

enum class Activation { identity, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Dense {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
    Activation activation = Activation::identity;

    Eigen::Index in() const { return weight.cols(); }
    Eigen::Index out() const { return weight.rows(); }
    bool operator==(const Dense& o) const {
        return activation == o.activation && weight.rows() == o.weight.rows() &&
               weight.cols() == o.weight.cols() && bias.size() == o.bias.size() && weight == o.weight &&
               bias == o.bias;
    }
};

struct Classifier {
    std::vector<Dense> backbone;
    Dense head;
    int num_classes = 0;
    std::uint64_t rng_seed = 0;

    // Backbone of ReLU layers with the given widths and an identity head of
    // width `head_width`; weights and biases uniform in ±1/sqrt(fan_in).
    static Classifier make(int input_dim, const std::vector<int>& hidden, int num_classes, int head_width,
                           std::uint64_t seed);

    int input_dim() const;
    int feature_width() const;  // backbone output width
    int head_width() const { return static_cast<int>(head.out()); }
    // Output heads per class: 1 for a class head, K for a (K·C)-way head.
    int heads_per_class() const;

    // Dimensions compose and every parameter is finite.
    void check() const;
    bool operator==(const Classifier&) const = default;
};

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 128;
    int epochs = 100;
    int batches_per_epoch = 0;  // 0: one full shuffled pass per epoch
    std::uint64_t seed = 0;

    void validate() const;
};

// Gradient in the same shape as the model: one entry per backbone layer, then the head.
struct Gradient {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;

    double squared_norm() const;
};

// Columns of the returned matrix are the samples' feature vectors.
Eigen::MatrixXd stack_features(std::span<const corpus::Sample> samples);
Eigen::MatrixXd stack_features(std::span<const corpus::Sample> samples, std::span<const std::size_t> rows);

Eigen::VectorXd forward(const Classifier& model, const Eigen::VectorXd& features);
Eigen::MatrixXd forward_batch(const Classifier& model, const Eigen::MatrixXd& features);
Eigen::VectorXd backbone_forward(const Classifier& model, const Eigen::VectorXd& features);

// 1-based index of the largest entry, ties to the lowest index.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

// Class encoded by 1-based output `j` of a head with `heads_per_class`
// outputs per class: ceil(j / heads_per_class).
inline int class_of_output(int j, int heads_per_class) { return (j + heads_per_class - 1) / heads_per_class; }

// Class predictions (1-based) through the ceiling rule; a C-wide head maps
// outputs to classes one-to-one.
std::vector<int> predict_classes(const Classifier& model, std::span<const corpus::Sample> samples);

// Mean cross-entropy of a batch against 1-based targets.
double loss(const Classifier& model, const Eigen::MatrixXd& batch, std::span<const int> targets);

// Exact gradient of the mean cross-entropy; also reports the loss.
Gradient gradient(const Classifier& model, const Eigen::MatrixXd& batch, std::span<const int> targets,
                  double* loss_out = nullptr);

// SGD with momentum; weight decay is added to the gradient before the velocity update.
class SgdMomentum {
public:
    SgdMomentum(const Classifier& model, double learning_rate, double momentum, double weight_decay);
    void step(Classifier& model, const Gradient& grad);

private:
    double lr_, momentum_, decay_;
    std::vector<Eigen::MatrixXd> vw_;
    std::vector<Eigen::VectorXd> vb_;
};

struct TrainOutcome {
    Classifier model;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

// Plain cross-entropy training on class labels; the head must be C-wide.
TrainOutcome train_erm(Classifier model, const corpus::AnnotatedDataset& dataset, const TrainConfig& config);

// Same backbone, fresh head of width `width` drawn from the model's seed.
Classifier replace_head(const Classifier& model, int width);

// Argmax predictions (1-based) for every sample.
std::vector<int> predict(const Classifier& model, std::span<const corpus::Sample> samples);

// Fraction of samples whose argmax equals label_of(sample).
double accuracy(const Classifier& model, std::span<const corpus::Sample> samples,
                const std::function<int(const corpus::Sample&)>& label_of);

void save_checkpoint(const std::filesystem::path& path, const Classifier& model);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace lbc::nnet
