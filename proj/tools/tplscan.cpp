#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tplscan/commands.hpp"
#include "tplscan/errors.hpp"

using namespace tplscan;

int main(int argc, char** argv) {
    CLI::App app{"Third-party library detection in binaries"};
    app.require_subcommand(1);

    std::string config_path;
    Config cfg;
    app.add_option("--config", config_path, "JSON config file");
    // Flags below override config-file values.
    std::optional<std::uint64_t> seed;
    std::optional<std::string> channels;
    std::optional<std::string> format;
    std::optional<double> timeout_mins;
    bool strict = false;
    app.add_option("--seed", seed, "Deterministic seed");
    app.add_option("--channels", channels, "basic | fr | both");
    app.add_option("--format", format, "json | text");
    app.add_option("--timeout-mins", timeout_mins,
                   "Per-binary budget in minutes (0 disables)");
    app.add_flag("--strict", strict, "Fail on the first bad input");
    std::optional<std::string> db_path;
    std::optional<std::string> model_path;
    std::optional<std::string> corpus_path;
    app.add_option("--db", db_path, "Database directory");
    app.add_option("--model", model_path, "Model checkpoint path");
    app.add_option("--corpus", corpus_path, "Corpus directory");

    // db build
    auto* db_cmd = app.add_subcommand("db", "Database maintenance");
    db_cmd->require_subcommand(1);
    auto* db_build = db_cmd->add_subcommand("build", "Build a TPL database");
    std::string build_input;
    std::string build_output;
    db_build->add_option("input", build_input, "Manifest/ELF directory")
        ->required();
    db_build->add_option("output", build_output, "Database directory")
        ->required();

    // extract
    auto* extract = app.add_subcommand("extract", "Extract features to a manifest");
    std::string extract_input;
    std::string extract_output;
    extract->add_option("input", extract_input, "ELF or manifest file")->required();
    extract->add_option("output", extract_output, "Manifest output path")
        ->required();

    // train
    auto* train_cmd =
        app.add_subcommand("train", "Train the function embedding model");
    std::optional<int> train_epochs;
    std::optional<int> mining_rounds;
    std::optional<double> mining_threshold;
    train_cmd->add_option("--epochs", train_epochs, "Training epochs");
    train_cmd->add_option("--mining-rounds", mining_rounds,
                          "Hard-negative mining passes (0 disables)");
    train_cmd->add_option("--mining-threshold", mining_threshold,
                          "Cosine above which cross-library pairs are mined");

    // scan
    auto* scan_cmd = app.add_subcommand("scan", "Scan a target binary");
    std::string scan_target;
    std::string scan_output;
    scan_cmd->add_option("target", scan_target, "Target ELF or manifest")
        ->required();
    scan_cmd->add_option("-o,--output", scan_output,
                         "Report path (default: stdout)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Run the evaluation harness");
    std::vector<std::string> eval_variants;
    std::string eval_prefix = "metrics";
    eval_cmd->add_option("--variant", eval_variants,
                         "Variants to run (default: all)");
    eval_cmd->add_option("-o,--output-prefix", eval_prefix,
                         "Metrics output prefix");

    // corpus gen
    auto* corpus_cmd = app.add_subcommand("corpus", "Synthetic corpus tools");
    corpus_cmd->require_subcommand(1);
    auto* corpus_gen =
        corpus_cmd->add_subcommand("gen", "Generate a synthetic corpus");
    std::string corpus_out;
    CorpusSpec spec;
    corpus_gen->add_option("output", corpus_out, "Corpus directory")->required();
    corpus_gen->add_option("--libraries", spec.library_count);
    corpus_gen->add_option("--versions", spec.versions_per_library);
    corpus_gen->add_option("--functions", spec.functions_per_unit);
    corpus_gen->add_option("--strings", spec.strings_per_unit);
    corpus_gen->add_option("--exports", spec.exports_per_unit);
    corpus_gen->add_option("--targets", spec.target_count);
    corpus_gen->add_option("--fan-in", spec.fuse_fan_in);
    corpus_gen->add_option("--strip", spec.strip_proportion);
    corpus_gen->add_option("--jitter", spec.attr_jitter);
    corpus_gen->add_option("--edge-edits", spec.edge_edits);

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) {
            cfg = Config::load(config_path);
        }
        if (seed) cfg.seed = *seed;
        if (channels) cfg.channels = *channels;
        if (format) cfg.output_format = *format;
        if (timeout_mins) cfg.timeout_minutes = *timeout_mins;
        if (strict) cfg.strict = true;
        if (db_path) cfg.db_path = *db_path;
        if (model_path) cfg.model_path = *model_path;
        if (corpus_path) cfg.corpus_path = *corpus_path;
        if (train_epochs) cfg.train_epochs = *train_epochs;
        if (mining_rounds) cfg.mining_rounds = *mining_rounds;
        if (mining_threshold) cfg.mining_threshold = *mining_threshold;
        cfg.validate();

        if (*db_build) {
            return cmd_db_build(build_input, build_output, cfg, std::cerr);
        }
        if (*extract) {
            return cmd_extract(extract_input, extract_output, cfg, std::cerr);
        }
        if (*train_cmd) {
            return cmd_train(cfg, std::cerr);
        }
        if (*scan_cmd) {
            return cmd_scan(scan_target, cfg, scan_output, std::cout, std::cerr);
        }
        if (*eval_cmd) {
            return cmd_eval(cfg, eval_variants, eval_prefix, std::cerr);
        }
        if (*corpus_gen) {
            spec.seed = cfg.seed;
            return cmd_corpus_gen(spec, corpus_out, std::cerr);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
