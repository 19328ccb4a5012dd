#include "lbc/harness.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lbc/synthgen.hpp"

namespace lbc::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Heads per class implied by a checkpoint, checked against the data.
int heads_of(const nnet::Classifier& model, const corpus::AnnotatedDataset& data) {
    if (model.input_dim() != static_cast<int>(data.feature_dim()))
        throw Error("checkpoint expects " + std::to_string(model.input_dim()) + " features, dataset has " +
                    std::to_string(data.feature_dim()));
    if (model.num_classes != data.num_classes)
        throw Error("checkpoint has " + std::to_string(model.num_classes) + " classes, dataset has " +
                    std::to_string(data.num_classes));
    return model.heads_per_class();
}

double mean_embedding_norm(const corpus::AnnotatedDataset& train, const spuriousness::SpuriousnessMatrix& m) {
    const Eigen::MatrixXd e = spuriousness::embed_all(train, m);
    return e.rows() ? e.rowwise().norm().mean() : 0.0;
}

void write_top(const fs::path& path, const spuriousness::SpuriousnessMatrix& m,
               const corpus::AttributeVocabulary& vocab, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "class,rank,attribute,score\n";
    for (int c = 1; c <= m.num_classes(); ++c) {
        const auto top = spuriousness::top_attributes(m, vocab, c, n);
        for (std::size_t r = 0; r < top.size(); ++r)
            out << c << ',' << r + 1 << ',' << vocab.word(static_cast<std::size_t>(top[r])) << ','
                << format_real(m.value(c, top[r])) << '\n';
    }
}

std::string pad_epoch(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "best_epoch_%03d.ckpt", epoch);
    return buf;
}

}  // namespace

json to_json(const GroupReport& r) {
    json groups = json::object();
    for (const auto& [g, acc] : r.per_group)
        groups[std::to_string(g)] = {{"accuracy", acc}, {"size", r.group_size.at(g)}};
    return {{"worst", r.worst}, {"average", r.average}, {"gap", r.gap}, {"groups", groups}};
}

json RunReport::to_json() const {
    json j;
    j["erm"] = harness::to_json(erm);
    j["lbc"] = harness::to_json(lbc);
    j["lbc"]["best_epoch"] = best_epoch;
    j["lbc"]["best_pseudo_unbiased"] = best_pseudo_unbiased;
    j["planted"] = json::array();
    for (const auto& p : planted)
        j["planted"].push_back({{"class", p.cls}, {"attribute", p.attribute}, {"erm", p.erm}, {"lbc", p.lbc}});
    j["embedding_mean_norm"] = {{"erm", erm_embedding_norm}, {"lbc", lbc_embedding_norm}};
    j["sweep"] = json::array();
    for (const auto& s : sweep)
        j["sweep"].push_back({{"K", s.K}, {"test", harness::to_json(s.test)}, {"best_pseudo_unbiased", s.best_pseudo_unbiased}});
    j["paths"] = {{"history", history.string()},           {"attribute_accuracies", attribute_accuracies.string()},
                  {"erm_scores", erm_scores.string()},     {"lbc_scores", lbc_scores.string()},
                  {"config_echo", config_echo.string()},   {"best_checkpoint", best_checkpoint.string()}};
    j["wall_seconds"] = wall_seconds;
    return j;
}

corpus::Splits load_data(const ExperimentConfig& config) {
    if (config.source == DataSource::synth) {
        synthgen::SynthData data = synthgen::generate(config.synth);
        return corpus::ingest(std::move(data.train), std::move(data.val), std::move(data.test), data.records,
                              config.min_frequency, config.synth.num_classes);
    }
    for (const auto& p : {config.files.train, config.files.val, config.files.test, config.files.annotations})
        if (!fs::exists(p)) throw Error("missing dataset file: " + p.string());
    const auto records = corpus::read_annotations(config.files.annotations);
    return corpus::ingest(corpus::read_samples(config.files.train), corpus::read_samples(config.files.val),
                          corpus::read_samples(config.files.test), records, config.min_frequency);
}

void cmd_synth(const fs::path& spec_file, const fs::path& out, std::optional<std::uint64_t> seed) {
    KeyValues kv = KeyValues::load(spec_file);
    if (seed) kv.set("seed", std::to_string(*seed));
    const synthgen::SynthSpec spec = synth_spec_from(kv);
    const synthgen::SynthData data = synthgen::generate(spec);
    fs::create_directories(out);
    corpus::write_samples(out / "train.jsonl", data.train);
    corpus::write_samples(out / "val.jsonl", data.val);
    corpus::write_samples(out / "test.jsonl", data.test);
    corpus::write_annotations(out / "annotations.jsonl", data.records);
    write_text(out / "synth_spec.cfg", to_key_values(spec).render());
}

json cmd_ingest(const ExperimentConfig& config) {
    const corpus::Splits splits = load_data(config);
    fs::create_directories(config.output);
    corpus::write_vocabulary(config.output / "vocabulary.txt", splits.train.vocabulary);
    json j;
    j["num_attributes"] = splits.train.vocabulary.size();
    j["num_classes"] = splits.train.num_classes;
    j["feature_dim"] = splits.train.feature_dim();
    auto stats = [](const corpus::AnnotatedDataset& d) {
        std::size_t total = 0;
        for (const auto& s : d.samples) total += s.attributes.size();
        return json{{"samples", d.samples.size()},
                    {"attributes_per_sample", d.samples.empty() ? 0.0 : static_cast<double>(total) / d.samples.size()}};
    };
    j["train"] = stats(splits.train);
    j["val"] = stats(splits.val);
    j["test"] = stats(splits.test);
    write_json(config.output / "ingest.json", j);
    return j;
}

namespace {

nnet::Classifier obtain_erm(const ExperimentConfig& config, const corpus::Splits& splits) {
    if (config.erm_checkpoint) {
        nnet::Classifier m = nnet::load_checkpoint(*config.erm_checkpoint);
        if (heads_of(m, splits.train) != 1) throw Error("ERM checkpoint must have a class-wide head");
        return m;
    }
    nnet::Classifier init = nnet::Classifier::make(static_cast<int>(splits.train.feature_dim()), config.hidden,
                                                   splits.train.num_classes, splits.train.num_classes,
                                                   config.model_seed());
    return nnet::train_erm(std::move(init), splits.train, config.erm).model;
}

}  // namespace

nnet::Classifier cmd_train_erm(const ExperimentConfig& config) {
    const corpus::Splits splits = load_data(config);
    fs::create_directories(config.output);
    nnet::Classifier erm = obtain_erm(config, splits);
    nnet::save_checkpoint(config.output / "erm.ckpt", erm);
    json j;
    j["val"] = to_json(evaluate_groups(erm, splits.val, 1));
    j["test"] = to_json(evaluate_groups(erm, splits.test, 1));
    write_json(config.output / "erm_metrics.json", j);
    return erm;
}

RunReport cmd_train(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const corpus::Splits splits = load_data(config);
    const fs::path out = config.output;
    fs::create_directories(out / "checkpoints");

    RunReport report;
    report.config_echo = out / "config_echo.cfg";
    write_text(report.config_echo, to_key_values(config).render());
    corpus::write_vocabulary(out / "vocabulary.txt", splits.train.vocabulary);

    const nnet::Classifier erm = obtain_erm(config, splits);
    nnet::save_checkpoint(out / "erm.ckpt", erm);
    report.erm = evaluate_groups(erm, splits.test, 1);
    const auto erm_scores = spuriousness::score_matrix(erm, splits.train, config.lbc.variant);
    report.erm_scores = out / "erm_scores.csv";
    spuriousness::write_score_report(report.erm_scores, erm_scores, splits.train.vocabulary);

    double best_so_far = 0;
    bool have_best = false;
    const LBCResult result = run_lbc(erm, splits.train, splits.val, config.lbc,
                                     [&](const EpochRecord& rec, const nnet::Classifier& model) {
                                         if (!have_best || rec.pseudo_unbiased > best_so_far) {
                                             have_best = true;
                                             best_so_far = rec.pseudo_unbiased;
                                             nnet::save_checkpoint(out / "checkpoints" / pad_epoch(rec.epoch), model);
                                         }
                                     });
    report.best_checkpoint = out / "lbc_best.ckpt";
    nnet::save_checkpoint(report.best_checkpoint, result.best);
    report.best_epoch = result.selection.best_epoch;
    report.best_pseudo_unbiased = result.selection.best_metric;
    report.history = out / "history.csv";
    write_history(report.history, result.epochs, splits.train.vocabulary, splits.train.num_classes);
    report.attribute_accuracies = out / "val_attributes.csv";
    write_attribute_accuracies(report.attribute_accuracies, result.epochs, splits.train.vocabulary);
    if (!result.epochs.empty()) sampler::write_plan(out / "plan_last_epoch.csv", result.epochs.back().plan);

    const int K = config.lbc.K;
    report.lbc = evaluate_groups(result.best, splits.test, K);
    const auto lbc_scores = spuriousness::score_matrix(result.best, splits.train, config.lbc.variant);
    report.lbc_scores = out / "lbc_scores.csv";
    spuriousness::write_score_report(report.lbc_scores, lbc_scores, splits.train.vocabulary);

    const auto clusters = grouping::fit_behavior_clusters(splits.train, lbc_scores, K,
                                                          derive_seed(config.lbc_seed(), "report-kmeans"), config.lbc.kmeans);
    grouping::write_cluster_report(out / "clusters.csv", splits.train, grouping::relabel(splits.train, clusters, lbc_scores));
    grouping::write_centroids(out / "centroids.csv", clusters);

    report.erm_embedding_norm = mean_embedding_norm(splits.train, erm_scores);
    report.lbc_embedding_norm = mean_embedding_norm(splits.train, lbc_scores);

    if (config.source == DataSource::synth) {
        const auto planted = synthgen::planted_attribute_per_class(config.synth);
        for (int c = 1; c <= splits.train.num_classes; ++c) {
            const std::string& word = config.synth.spurious_names[static_cast<std::size_t>(planted[static_cast<std::size_t>(c - 1)])];
            const auto a = splits.train.vocabulary.index_of(word);
            if (!a) continue;
            report.planted.push_back({c, word, erm_scores.value(c, *a), lbc_scores.value(c, *a)});
        }
    }

    for (int k : config.k_sweep) {
        ExperimentConfig variant = config;
        variant.lbc.K = k;
        const LBCResult r = run_lbc(erm, splits.train, splits.val, variant.lbc);
        const fs::path dir = out / ("sweep_K" + std::to_string(k));
        fs::create_directories(dir);
        write_history(dir / "history.csv", r.epochs, splits.train.vocabulary, splits.train.num_classes);
        nnet::save_checkpoint(dir / "lbc_best.ckpt", r.best);
        report.sweep.push_back({k, evaluate_groups(r.best, splits.test, k), r.selection.best_metric});
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(out / "report.json", report.to_json());
    return report;
}

GroupReport cmd_eval(const ExperimentConfig& config, const fs::path& checkpoint) {
    const corpus::Splits splits = load_data(config);
    const nnet::Classifier model = nnet::load_checkpoint(checkpoint);
    const int K = heads_of(model, splits.test);
    GroupReport r = evaluate_groups(model, splits.test, K);
    fs::create_directories(config.output);
    write_json(config.output / "eval.json", to_json(r));
    return r;
}

spuriousness::SpuriousnessMatrix cmd_scores(const ExperimentConfig& config, const fs::path& checkpoint,
                                            spuriousness::ScoreVariant variant) {
    const corpus::Splits splits = load_data(config);
    const nnet::Classifier model = nnet::load_checkpoint(checkpoint);
    heads_of(model, splits.train);
    auto m = spuriousness::score_matrix(model, splits.train, variant);
    fs::create_directories(config.output);
    spuriousness::write_score_report(config.output / "scores.csv", m, splits.train.vocabulary);
    write_top(config.output / "top10.csv", m, splits.train.vocabulary, 10);
    return m;
}

double cmd_embed(const ExperimentConfig& config, const fs::path& checkpoint, std::optional<int> K) {
    const corpus::Splits splits = load_data(config);
    const nnet::Classifier model = nnet::load_checkpoint(checkpoint);
    const int heads = heads_of(model, splits.train);
    const int k = K.value_or(heads > 1 ? heads : config.lbc.K);
    const auto m = spuriousness::score_matrix(model, splits.train, config.lbc.variant);
    const auto clusters =
        grouping::fit_behavior_clusters(splits.train, m, k, derive_seed(config.lbc_seed(), "embed-kmeans"), config.lbc.kmeans);
    fs::create_directories(config.output);
    spuriousness::write_embeddings(config.output / "embeddings.csv", splits.train, m, clusters.labels);
    return mean_embedding_norm(splits.train, m);
}

std::string cmd_report(const fs::path& run_dir) {
    std::ifstream in(run_dir / "report.json");
    if (!in) throw Error("no report.json in " + run_dir.string());
    const json j = json::parse(in);
    std::ostringstream s;
    char line[160];
    s << "model   worst    average  gap\n";
    for (const char* name : {"erm", "lbc"}) {
        const auto& m = j.at(name);
        std::snprintf(line, sizeof line, "%-6s  %6.2f%%  %6.2f%%  %6.2f\n", name, 100 * m.at("worst").get<double>(),
                      100 * m.at("average").get<double>(), 100 * m.at("gap").get<double>());
        s << line;
    }
    s << "best epoch " << j.at("lbc").at("best_epoch").get<int>() << ", pseudo-unbiased val accuracy "
      << j.at("lbc").at("best_pseudo_unbiased").get<double>() << '\n';
    for (const auto& p : j.at("planted"))
        s << "planted '" << p.at("attribute").get<std::string>() << "' for class " << p.at("class").get<int>()
          << ": gamma " << p.at("erm").get<double>() << " (erm) -> " << p.at("lbc").get<double>() << " (lbc)\n";
    for (const auto& e : j.at("sweep")) {
        std::snprintf(line, sizeof line, "K=%d worst %.2f%% average %.2f%%\n", e.at("K").get<int>(),
                      100 * e.at("test").at("worst").get<double>(), 100 * e.at("test").at("average").get<double>());
        s << line;
    }
    return s.str();
}

}  // namespace lbc::harness
