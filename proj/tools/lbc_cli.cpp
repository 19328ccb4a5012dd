// lbc: synthetic benchmark generation, ERM/LBC training and reporting.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lbc/config.hpp"
#include "lbc/harness.hpp"

namespace {

using namespace lbc;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string variant = "tanh_abs_log";
    std::optional<int> k;
};

harness::ExperimentConfig resolve(const Options& o, bool k_sets_lbc) {
    harness::KeyValues kv = o.config.empty() ? harness::KeyValues{} : harness::KeyValues::load(o.config);
    if (o.seed) kv.set("seed", std::to_string(*o.seed));
    if (!o.out.empty()) kv.set("output", o.out);
    if (k_sets_lbc && o.k) kv.set("lbc.K", std::to_string(*o.k));
    return harness::config_from(kv);
}

void print_groups(const GroupReport& r) { std::cout << harness::to_json(r).dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lbc: spurious-correlation detection and mitigation with behavior-cluster labels"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", o.config, "experiment config (section.key = value)");
        cmd->add_option("--seed", o.seed, "global seed override");
        cmd->add_option("--out", o.out, "output directory override");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark from a spec file");
    synth->add_option("--config", o.config, "synthetic spec file (seed + synth.* keys)")->required();
    synth->add_option("--seed", o.seed, "seed override");
    synth->add_option("--out", o.out, "output directory")->required();

    auto* ingest = app.add_subcommand("ingest", "build the attribute vocabulary and split statistics");
    add_common(ingest);

    auto* train_erm = app.add_subcommand("train-erm", "train the ERM classifier");
    add_common(train_erm);

    auto* train_lbc = app.add_subcommand("train-lbc", "ERM (or --checkpoint), then LBC, then test evaluation");
    add_common(train_lbc);
    train_lbc->add_option("--checkpoint", o.checkpoint, "ERM checkpoint to start from");
    train_lbc->add_option("--k", o.k, "clusters per class");

    auto* eval = app.add_subcommand("eval", "worst-group / average accuracy of a checkpoint on test");
    add_common(eval);
    eval->add_option("--checkpoint", o.checkpoint)->required();

    auto* scores = app.add_subcommand("scores", "spuriousness scores of a checkpoint on train");
    add_common(scores);
    scores->add_option("--checkpoint", o.checkpoint)->required();
    scores->add_option("--variant", o.variant, "tanh_abs_log, tanh_log, abs_log, log, abs_diff or diff");

    auto* embed = app.add_subcommand("embed", "export spuriousness embeddings of the training set");
    add_common(embed);
    embed->add_option("--checkpoint", o.checkpoint)->required();
    embed->add_option("--k", o.k, "clusters for the cluster column");

    auto* report = app.add_subcommand("report", "summarize a finished train-lbc run");
    report->add_option("--out", o.out, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            harness::cmd_synth(o.config, o.out, o.seed);
        } else if (ingest->parsed()) {
            std::cout << harness::cmd_ingest(resolve(o, false)).dump(2) << '\n';
        } else if (train_erm->parsed()) {
            const auto cfg = resolve(o, false);
            harness::cmd_train_erm(cfg);
            std::cout << "wrote " << (cfg.output / "erm.ckpt").string() << '\n';
        } else if (train_lbc->parsed()) {
            auto cfg = resolve(o, true);
            if (!o.checkpoint.empty()) cfg.erm_checkpoint = o.checkpoint;
            const auto r = harness::cmd_train(cfg);
            std::cout << harness::cmd_report(cfg.output);
            (void)r;
        } else if (eval->parsed()) {
            print_groups(harness::cmd_eval(resolve(o, false), o.checkpoint));
        } else if (scores->parsed()) {
            const auto cfg = resolve(o, false);
            harness::cmd_scores(cfg, o.checkpoint, spuriousness::variant_from_string(o.variant));
            std::cout << "wrote " << (cfg.output / "scores.csv").string() << '\n';
        } else if (embed->parsed()) {
            const auto cfg = resolve(o, false);
            const double norm = harness::cmd_embed(cfg, o.checkpoint, o.k);
            std::cout << "wrote " << (cfg.output / "embeddings.csv").string() << " (mean norm " << norm << ")\n";
        } else if (report->parsed()) {
            std::cout << harness::cmd_report(o.out);
        }
    } catch (const std::exception& e) {
        std::cerr << "lbc: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
