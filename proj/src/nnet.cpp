#include "lbc/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lbc::nnet {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw Error("unknown activation: " + s);
}

namespace {

Dense init_dense(int in, int out, Activation act, std::uint64_t seed) {
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-scale, scale);
    Dense layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out), act};
    for (int j = 0; j < in; ++j)
        for (int i = 0; i < out; ++i) layer.weight(i, j) = dist(rng);
    for (int i = 0; i < out; ++i) layer.bias(i) = dist(rng);
    return layer;
}

void apply(Activation act, Eigen::MatrixXd& z) {
    if (act == Activation::relu) z = z.cwiseMax(0.0);
}

}  // namespace

Classifier Classifier::make(int input_dim, const std::vector<int>& hidden, int num_classes, int head_width,
                            std::uint64_t seed) {
    if (input_dim < 1 || num_classes < 1 || head_width < 1) throw Error("classifier dimensions must be >= 1");
    Classifier m;
    m.num_classes = num_classes;
    m.rng_seed = seed;
    int in = input_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        if (hidden[i] < 1) throw Error("hidden width must be >= 1");
        m.backbone.push_back(init_dense(in, hidden[i], Activation::relu, derive_seed(seed, "layer" + std::to_string(i))));
        in = hidden[i];
    }
    m.head = init_dense(in, head_width, Activation::identity, derive_seed(seed, "head" + std::to_string(head_width)));
    return m;
}

int Classifier::input_dim() const {
    return static_cast<int>(backbone.empty() ? head.in() : backbone.front().in());
}

int Classifier::feature_width() const {
    return static_cast<int>(backbone.empty() ? head.in() : backbone.back().out());
}

int Classifier::heads_per_class() const {
    if (num_classes < 1 || head_width() % num_classes != 0)
        throw Error("head width " + std::to_string(head_width()) + " is not a multiple of " +
                    std::to_string(num_classes) + " classes");
    return head_width() / num_classes;
}

void Classifier::check() const {
    Eigen::Index width = input_dim();
    auto check_layer = [&](const Dense& d) {
        if (d.in() != width || d.bias.size() != d.out()) throw Error("classifier layer dimensions do not compose");
        if (!d.weight.allFinite() || !d.bias.allFinite()) throw Error("classifier has non-finite parameters");
        width = d.out();
    };
    for (const auto& d : backbone) check_layer(d);
    check_layer(head);
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0)) throw Error("learning_rate must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw Error("momentum must lie in [0,1)");
    if (!(weight_decay >= 0)) throw Error("weight_decay must be >= 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (epochs < 0) throw Error("epochs must be >= 0");
    if (batches_per_epoch < 0) throw Error("batches_per_epoch must be >= 0");
}

double Gradient::squared_norm() const {
    double s = 0;
    for (const auto& w : weight) s += w.squaredNorm();
    for (const auto& b : bias) s += b.squaredNorm();
    return s;
}

Eigen::MatrixXd stack_features(std::span<const corpus::Sample> samples) {
    const Eigen::Index d = samples.empty() ? 0 : static_cast<Eigen::Index>(samples.front().features.size());
    Eigen::MatrixXd x(d, static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        if (static_cast<Eigen::Index>(samples[j].features.size()) != d) throw Error("feature dimension mismatch");
        x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(samples[j].features.data(), d);
    }
    return x;
}

Eigen::MatrixXd stack_features(std::span<const corpus::Sample> samples, std::span<const std::size_t> rows) {
    const Eigen::Index d = samples.empty() ? 0 : static_cast<Eigen::Index>(samples.front().features.size());
    Eigen::MatrixXd x(d, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const auto& f = samples[rows[j]].features;
        if (static_cast<Eigen::Index>(f.size()) != d) throw Error("feature dimension mismatch");
        x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(f.data(), d);
    }
    return x;
}

namespace {

// Pre-activations and activations of every layer; acts[0] is the input.
struct Trace {
    std::vector<Eigen::MatrixXd> pre;
    std::vector<Eigen::MatrixXd> acts;
};

Trace run(const Classifier& model, const Eigen::MatrixXd& x) {
    if (x.rows() != model.input_dim())
        throw Error("input dimension " + std::to_string(x.rows()) + " does not match model input " +
                    std::to_string(model.input_dim()));
    Trace t;
    t.acts.push_back(x);
    auto layer = [&](const Dense& d) {
        Eigen::MatrixXd z = d.weight * t.acts.back();
        z.colwise() += d.bias;
        t.pre.push_back(z);
        apply(d.activation, z);
        t.acts.push_back(std::move(z));
    };
    for (const auto& d : model.backbone) layer(d);
    layer(model.head);
    return t;
}

// Column-wise softmax with max subtraction.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const double m = logits.col(j).maxCoeff();
        p.col(j) = (logits.col(j).array() - m).exp().matrix();
        p.col(j) /= p.col(j).sum();
    }
    return p;
}

double mean_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> targets) {
    double total = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const double m = logits.col(j).maxCoeff();
        const double lse = m + std::log((logits.col(j).array() - m).exp().sum());
        total += lse - logits(targets[static_cast<std::size_t>(j)] - 1, j);
    }
    return total / static_cast<double>(logits.cols());
}

void check_targets(const Eigen::MatrixXd& batch, std::span<const int> targets, int width) {
    if (batch.cols() == 0) throw Error("empty batch");
    if (static_cast<Eigen::Index>(targets.size()) != batch.cols()) throw Error("target count does not match batch");
    for (int t : targets)
        if (t < 1 || t > width) throw Error("target " + std::to_string(t) + " outside head width");
}

}  // namespace

Eigen::MatrixXd forward_batch(const Classifier& model, const Eigen::MatrixXd& features) {
    return run(model, features).acts.back();
}

Eigen::VectorXd forward(const Classifier& model, const Eigen::VectorXd& features) {
    return forward_batch(model, features).col(0);
}

Eigen::VectorXd backbone_forward(const Classifier& model, const Eigen::VectorXd& features) {
    Trace t = run(model, features);
    return t.acts[t.acts.size() - 2].col(0);
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i)
        if (logits(i) > logits(best)) best = i;
    return static_cast<int>(best) + 1;
}

double loss(const Classifier& model, const Eigen::MatrixXd& batch, std::span<const int> targets) {
    check_targets(batch, targets, model.head_width());
    return mean_cross_entropy(forward_batch(model, batch), targets);
}

Gradient gradient(const Classifier& model, const Eigen::MatrixXd& batch, std::span<const int> targets,
                  double* loss_out) {
    check_targets(batch, targets, model.head_width());
    const Trace t = run(model, batch);
    const Eigen::MatrixXd& logits = t.acts.back();
    if (loss_out) *loss_out = mean_cross_entropy(logits, targets);

    const auto n = static_cast<double>(batch.cols());
    Eigen::MatrixXd delta = softmax(logits);
    for (Eigen::Index j = 0; j < batch.cols(); ++j) delta(targets[static_cast<std::size_t>(j)] - 1, j) -= 1.0;
    delta /= n;

    const std::size_t layers = model.backbone.size() + 1;
    Gradient g;
    g.weight.resize(layers);
    g.bias.resize(layers);
    for (std::size_t l = layers; l-- > 0;) {
        const Dense& d = l < model.backbone.size() ? model.backbone[l] : model.head;
        if (d.activation == Activation::relu) delta = delta.cwiseProduct((t.pre[l].array() > 0.0).cast<double>().matrix());
        g.weight[l] = delta * t.acts[l].transpose();
        g.bias[l] = delta.rowwise().sum();
        if (l > 0) delta = d.weight.transpose() * delta;
    }
    return g;
}

SgdMomentum::SgdMomentum(const Classifier& model, double learning_rate, double momentum, double weight_decay)
    : lr_(learning_rate), momentum_(momentum), decay_(weight_decay) {
    for (const auto& d : model.backbone) {
        vw_.push_back(Eigen::MatrixXd::Zero(d.out(), d.in()));
        vb_.push_back(Eigen::VectorXd::Zero(d.out()));
    }
    vw_.push_back(Eigen::MatrixXd::Zero(model.head.out(), model.head.in()));
    vb_.push_back(Eigen::VectorXd::Zero(model.head.out()));
}

void SgdMomentum::step(Classifier& model, const Gradient& grad) {
    if (grad.weight.size() != vw_.size()) throw Error("gradient does not match optimizer state");
    for (std::size_t l = 0; l < vw_.size(); ++l) {
        Dense& d = l < model.backbone.size() ? model.backbone[l] : model.head;
        vw_[l] = momentum_ * vw_[l] + grad.weight[l] + decay_ * d.weight;
        vb_[l] = momentum_ * vb_[l] + grad.bias[l] + decay_ * d.bias;
        d.weight -= lr_ * vw_[l];
        d.bias -= lr_ * vb_[l];
    }
}

TrainOutcome train_erm(Classifier model, const corpus::AnnotatedDataset& dataset, const TrainConfig& config) {
    config.validate();
    if (model.head_width() != dataset.num_classes)
        throw Error("ERM needs a " + std::to_string(dataset.num_classes) + "-way head");
    if (dataset.samples.empty()) throw Error("ERM on an empty dataset");

    const Eigen::MatrixXd all = stack_features(dataset.samples);
    std::vector<int> labels;
    for (const auto& s : dataset.samples) labels.push_back(s.label);

    Rng rng(config.seed);
    SgdMomentum opt(model, config.learning_rate, config.momentum, config.weight_decay);
    std::vector<std::size_t> order(dataset.samples.size());
    TrainOutcome out{std::move(model), {}};
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t batches = (order.size() + bs - 1) / bs;
        if (config.batches_per_epoch > 0) batches = std::min(batches, static_cast<std::size_t>(config.batches_per_epoch));
        double total = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * bs, hi = std::min(order.size(), lo + bs);
            Eigen::MatrixXd x(all.rows(), static_cast<Eigen::Index>(hi - lo));
            std::vector<int> y;
            for (std::size_t i = lo; i < hi; ++i) {
                x.col(static_cast<Eigen::Index>(i - lo)) = all.col(static_cast<Eigen::Index>(order[i]));
                y.push_back(labels[order[i]]);
            }
            double batch_loss = 0;
            const Gradient g = gradient(out.model, x, y, &batch_loss);
            if (!std::isfinite(batch_loss))
                throw Error("non-finite loss in ERM epoch " + std::to_string(epoch) + " (learning rate too high?)");
            opt.step(out.model, g);
            total += batch_loss;
        }
        out.epoch_loss.push_back(total / static_cast<double>(batches));
    }
    return out;
}

Classifier replace_head(const Classifier& model, int width) {
    if (width < 1) throw Error("head width must be >= 1");
    Classifier out = model;
    Classifier fresh = Classifier::make(model.feature_width(), {}, model.num_classes, width, model.rng_seed);
    out.head = fresh.head;
    return out;
}

std::vector<int> predict(const Classifier& model, std::span<const corpus::Sample> samples) {
    std::vector<int> out;
    if (samples.empty()) return out;
    const Eigen::MatrixXd logits = forward_batch(model, stack_features(samples));
    out.reserve(samples.size());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) out.push_back(argmax(logits.col(j)));
    return out;
}

std::vector<int> predict_classes(const Classifier& model, std::span<const corpus::Sample> samples) {
    const int k = model.heads_per_class();
    std::vector<int> out = predict(model, samples);
    for (int& j : out) j = class_of_output(j, k);
    return out;
}

double accuracy(const Classifier& model, std::span<const corpus::Sample> samples,
                const std::function<int(const corpus::Sample&)>& label_of) {
    if (samples.empty()) throw Error("accuracy is undefined on an empty sample set");
    const auto pred = predict(model, samples);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (pred[i] == label_of(samples[i])) ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// --- checkpoints ------------------------------------------------------------
//
//   lbc-checkpoint 1
//   num_classes <C>
//   rng_seed <seed>
//   layers <L>              (backbone layers + head)
//   dense <in> <out> <activation>
//   <out rows of in weights, row-major>
//   <out biases>
//   ...

namespace {

void write_dense(std::ostream& out, const Dense& d) {
    out << "dense " << d.in() << ' ' << d.out() << ' ' << to_string(d.activation) << '\n';
    for (Eigen::Index i = 0; i < d.out(); ++i) {
        for (Eigen::Index j = 0; j < d.in(); ++j) out << (j ? " " : "") << format_real(d.weight(i, j));
        out << '\n';
    }
    for (Eigen::Index i = 0; i < d.out(); ++i) out << (i ? " " : "") << format_real(d.bias(i));
    out << '\n';
}

template <class T>
T expect(std::istream& in, const std::string& key) {
    std::string word;
    T value{};
    if (!(in >> word) || word != key || !(in >> value)) throw Error("checkpoint: expected '" + key + "'");
    return value;
}

Dense read_dense(std::istream& in) {
    std::string tag, act;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tag) || tag != "dense" || !(in >> cols >> rows >> act) || rows < 1 || cols < 1)
        throw Error("checkpoint: malformed layer header");
    Dense d{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows), activation_from_string(act)};
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if (!(in >> d.weight(i, j))) throw Error("checkpoint: truncated weights");
    for (Eigen::Index i = 0; i < rows; ++i)
        if (!(in >> d.bias(i))) throw Error("checkpoint: truncated biases");
    return d;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Classifier& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "lbc-checkpoint 1\n";
    out << "num_classes " << model.num_classes << '\n';
    out << "rng_seed " << model.rng_seed << '\n';
    out << "layers " << model.backbone.size() + 1 << '\n';
    for (const auto& d : model.backbone) write_dense(out, d);
    write_dense(out, model.head);
    if (!out) throw Error("failed writing " + path.string());
}

Classifier load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    if (expect<int>(in, "lbc-checkpoint") != 1) throw Error("checkpoint: unsupported version");
    Classifier m;
    m.num_classes = expect<int>(in, "num_classes");
    m.rng_seed = expect<std::uint64_t>(in, "rng_seed");
    const auto layers = expect<std::size_t>(in, "layers");
    if (layers < 1) throw Error("checkpoint: no layers");
    for (std::size_t l = 0; l + 1 < layers; ++l) m.backbone.push_back(read_dense(in));
    m.head = read_dense(in);
    m.check();
    return m;
}

}  // namespace lbc::nnet
