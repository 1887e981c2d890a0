#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rtlppa/dataset.hpp"
#include "rtlppa/errors.hpp"
#include "rtlppa/evaluation.hpp"
#include "rtlppa/model.hpp"
#include "rtlppa/repair.hpp"
#include "rtlppa/training.hpp"

namespace {

using rtlppa::Error;
using rtlppa::ErrorClass;

void write_meta(const std::string& artifact_path, const std::string& kind,
                const nlohmann::ordered_json& config) {
    nlohmann::ordered_json meta;
    meta["format"] = "rtlppa-" + kind + "-meta";
    meta["format_version"] = 1;
    meta["config"] = config;
    std::ofstream out(artifact_path + ".meta.json");
    out << meta.dump(2) << "\n";
    if (!out) throw Error(ErrorClass::data, "cannot write " + artifact_path + ".meta.json");
}

std::optional<std::pair<std::size_t, std::size_t>> parse_strata(const std::string& text) {
    if (text.empty()) return std::nullopt;
    const std::size_t comma = text.find(',');
    if (comma == std::string::npos) {
        throw rtlppa::ConfigError("--strata expects 'small_max,medium_max'");
    }
    try {
        const std::size_t a = std::stoull(text.substr(0, comma));
        const std::size_t b = std::stoull(text.substr(comma + 1));
        return std::make_pair(a, b);
    } catch (const std::exception&) {
        throw rtlppa::ConfigError("--strata expects 'small_max,medium_max'");
    }
}

struct DatasetGenArgs {
    std::size_t count = 500;
    std::uint64_t seed = 42;
    std::string out;
};

void cmd_dataset_gen(const DatasetGenArgs& args) {
    const std::vector<rtlppa::DatasetRecord> records =
        rtlppa::synth_toy_dataset(args.count, args.seed);
    rtlppa::save_jsonl(args.out, records);
    nlohmann::ordered_json config;
    config["count"] = args.count;
    config["seed"] = args.seed;
    config["out"] = args.out;
    write_meta(args.out, "dataset", config);
    std::cout << "wrote " << records.size() << " records to " << args.out << "\n";
}

struct TrainArgs {
    std::string dataset;
    std::string out;
    std::string model;  // resume checkpoint
    std::uint64_t seed = 42;
    std::size_t epochs = 24;
    bool epochs_given = false;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double dropout = 0.0;
    std::size_t fragment_size = 512;
    std::size_t experts = 6;
    std::size_t top_k = 3;
    bool separate_heads = false;
    bool train_base = false;
};

void cmd_train(const TrainArgs& args) {
    const rtlppa::LoadReport loaded = rtlppa::load_jsonl(args.dataset);
    for (const std::string& err : loaded.errors) {
        std::cerr << "warning: " << args.dataset << ": " << err << "\n";
    }

    rtlppa::PpaModel model;
    std::size_t run_epochs;
    if (!args.model.empty()) {
        model = rtlppa::load_model(args.model);
        run_epochs = args.epochs_given ? args.epochs : 0;
    } else {
        rtlppa::ModelConfig config;
        config.seed = args.seed;
        config.epochs = args.epochs;
        config.batch_size = args.batch_size;
        config.learning_rate = args.lr;
        config.dropout = args.dropout;
        config.fragment_size = args.fragment_size;
        config.num_experts = args.experts;
        config.top_k = args.top_k;
        config.joint_heads = !args.separate_heads;
        config.adapter_mode = !args.train_base;
        model = rtlppa::make_model(config);
        run_epochs = config.epochs;
    }

    const rtlppa::Split split =
        rtlppa::split_train_val(loaded.records, 0.8, model.config.seed);
    rtlppa::fit_model_stats(model, split.train);
    const std::vector<rtlppa::TrainSample> samples =
        rtlppa::prepare_samples(model, split.train);

    std::ofstream log(args.out + ".log.jsonl");
    if (!log) throw Error(ErrorClass::data, "cannot write " + args.out + ".log.jsonl");
    rtlppa::Trainer trainer(model);
    const std::vector<rtlppa::EpochStats> history =
        trainer.fit(samples, run_epochs, &log);
    rtlppa::save_model(model, args.out);

    if (!history.empty()) {
        const rtlppa::EpochStats& first = history.front();
        const rtlppa::EpochStats& last = history.back();
        std::cout << "trained " << history.size() << " epochs on " << samples.size()
                  << " samples (val " << split.val.size() << ")\n";
        std::cout << "mean loss: first epoch " << first.total() << ", last epoch "
                  << last.total() << "\n";
    } else {
        std::cout << "no epochs requested; checkpoint rewritten\n";
    }
    std::cout << "model written to " << args.out << "\n";
}

struct EvalArgs {
    std::string model;
    std::string dataset;
    std::vector<double> thresholds = {0.05, 0.10, 0.20};
    std::string strata;
    std::string split = "all";
    std::uint64_t seed = 42;
    std::string out;
};

void cmd_eval(const EvalArgs& args) {
    const rtlppa::PpaModel model = rtlppa::load_model(args.model);
    rtlppa::LoadReport loaded = rtlppa::load_jsonl(args.dataset);
    std::vector<rtlppa::DatasetRecord> records;
    if (args.split == "all") {
        records = std::move(loaded.records);
    } else if (args.split == "train" || args.split == "val") {
        rtlppa::Split split = rtlppa::split_train_val(loaded.records, 0.8, args.seed);
        records = args.split == "train" ? std::move(split.train) : std::move(split.val);
    } else {
        throw rtlppa::ConfigError("--split must be all, train or val");
    }

    const rtlppa::PassRateReport report = rtlppa::evaluate_model(
        model, records, args.thresholds, parse_strata(args.strata));
    std::cout << rtlppa::render_text(report);

    if (!args.out.empty()) {
        std::ofstream out(args.out);
        if (!out) throw Error(ErrorClass::data, "cannot write " + args.out);
        if (args.out.size() >= 4 && args.out.rfind(".csv") == args.out.size() - 4) {
            out << rtlppa::render_csv(report);
        } else {
            nlohmann::ordered_json config;
            config["model"] = args.model;
            config["dataset"] = args.dataset;
            config["thresholds"] = args.thresholds;
            config["split"] = args.split;
            config["seed"] = args.seed;
            if (!args.strata.empty()) config["strata"] = args.strata;
            nlohmann::ordered_json artifact;
            artifact["format"] = "rtlppa-report";
            artifact["format_version"] = 1;
            artifact["config"] = config;
            artifact["report"] = nlohmann::ordered_json::parse(rtlppa::render_json(report));
            out << artifact.dump(2) << "\n";
        }
        if (!out) throw Error(ErrorClass::data, "write failed: " + args.out);
    }
}

struct PredictArgs {
    std::string model;
    std::string input;
};

void cmd_predict(const PredictArgs& args) {
    const rtlppa::PpaModel model = rtlppa::load_model(args.model);
    std::ifstream in(args.input);
    if (!in) throw Error(ErrorClass::data, "cannot open input file: " + args.input);
    std::ostringstream text;
    text << in.rdbuf();

    const rtlppa::SourceUnit unit = rtlppa::tokenize(text.str());
    const std::vector<double> predicted = rtlppa::predict_physical(model, unit);
    nlohmann::ordered_json out;
    for (std::size_t h = 0; h < model.metrics.size(); ++h) {
        out[rtlppa::metric_label(model.metrics[h])] = predicted[h];
    }
    std::cout << out.dump() << "\n";
}

struct RepairArgs {
    std::string dataset;
    std::string out;
    std::size_t R = 3;
    std::size_t T = 3;
    std::string fix_client_url;
    std::string synth_cmd;
    std::vector<std::string> synth_regex;
    double timeout = 10.0;
    std::size_t retries = 2;
};

void cmd_repair(const RepairArgs& args) {
    const std::vector<rtlppa::RawModule> modules = rtlppa::load_raw_modules(args.dataset);

    std::unique_ptr<rtlppa::FixClient> fix;
    if (!args.fix_client_url.empty()) {
        fix = std::make_unique<rtlppa::HttpFixClient>(args.fix_client_url, args.timeout);
    } else {
        fix = std::make_unique<rtlppa::ScriptedFixClient>(
            std::map<std::string, std::string>{});
    }
    std::unique_ptr<rtlppa::SynthesisClient> synth;
    if (!args.synth_cmd.empty()) {
        std::map<std::string, std::string> patterns = {
            {"area", R"(area\s*[:=]\s*([-+0-9.eE]+))"},
            {"delay", R"(delay\s*[:=]\s*([-+0-9.eE]+))"},
            {"power", R"(power\s*[:=]\s*([-+0-9.eE]+))"},
        };
        for (const std::string& spec : args.synth_regex) {
            const std::size_t eq = spec.find('=');
            if (eq == std::string::npos) {
                throw rtlppa::ConfigError("--synth-regex expects metric=pattern");
            }
            patterns[spec.substr(0, eq)] = spec.substr(eq + 1);
        }
        synth = std::make_unique<rtlppa::ProcessSynthesisClient>(args.synth_cmd,
                                                                 patterns);
    } else {
        synth = std::make_unique<rtlppa::MockSynthesisClient>();
    }

    rtlppa::RepairConfig config;
    config.max_parse_attempts = args.R;
    config.max_synth_attempts = args.T;
    config.transport_retries = args.retries;

    std::vector<rtlppa::RepairOutcome> accepted;
    std::vector<rtlppa::RepairOutcome> discarded;
    for (const rtlppa::RawModule& module : modules) {
        rtlppa::RepairOutcome outcome =
            rtlppa::repair_loop(module.id, module.source, *fix, *synth, config);
        (outcome.phase == rtlppa::RepairPhase::done ? accepted : discarded)
            .push_back(std::move(outcome));
    }

    std::size_t duplicates = 0;
    {
        std::vector<rtlppa::RepairOutcome> unique;
        std::set<std::string> seen;
        for (rtlppa::RepairOutcome& outcome : accepted) {
            if (seen.insert(rtlppa::source_fingerprint(outcome.source)).second) {
                unique.push_back(std::move(outcome));
            } else {
                ++duplicates;
            }
        }
        accepted = std::move(unique);
    }

    std::ofstream out(args.out);
    if (!out) throw Error(ErrorClass::data, "cannot write " + args.out);
    for (const rtlppa::RepairOutcome& outcome : accepted) {
        out << rtlppa::outcome_to_json(outcome) << "\n";
    }
    const std::string discard_path = args.out + ".discarded.jsonl";
    std::ofstream discards(discard_path);
    for (const rtlppa::RepairOutcome& outcome : discarded) {
        discards << rtlppa::outcome_to_json(outcome) << "\n";
    }

    nlohmann::ordered_json config_json;
    config_json["dataset"] = args.dataset;
    config_json["out"] = args.out;
    config_json["R"] = args.R;
    config_json["T"] = args.T;
    config_json["fix_client_url"] = args.fix_client_url;
    config_json["synth_cmd"] = args.synth_cmd;
    config_json["transport_retries"] = args.retries;
    write_meta(args.out, "repair", config_json);

    std::cout << "accepted " << accepted.size() << ", discarded " << discarded.size()
              << ", duplicates removed " << duplicates << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale PPA estimation pipeline for Verilog"};
    app.require_subcommand(1);
    app.set_config("--config", "", "config file (flags win over file values)");

    DatasetGenArgs gen_args;
    CLI::App* gen = app.add_subcommand("dataset-gen", "generate a labeled toy corpus");
    gen->add_option("--count", gen_args.count, "modules to generate")
        ->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_args.seed, "corpus seed");
    gen->add_option("--out", gen_args.out, "output JSONL path")->required();

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "fit the estimator on a labeled corpus");
    train->add_option("--dataset", train_args.dataset, "labeled JSONL corpus")->required();
    train->add_option("--out", train_args.out, "model artifact path")->required();
    train->add_option("--model", train_args.model, "checkpoint to resume from");
    train->add_option("--seed", train_args.seed, "model + shuffle seed");
    CLI::Option* epochs_opt =
        train->add_option("--epochs", train_args.epochs, "epochs to run");
    train->add_option("--batch-size", train_args.batch_size, "minibatch size")
        ->check(CLI::PositiveNumber);
    train->add_option("--lr", train_args.lr, "Adam learning rate");
    train->add_option("--dropout", train_args.dropout, "expert dropout rate")
        ->check(CLI::Range(0.0, 0.95));
    train->add_option("--fragment-size", train_args.fragment_size, "tokens per fragment")
        ->check(CLI::PositiveNumber);
    train->add_option("--experts", train_args.experts, "experts per head")
        ->check(CLI::PositiveNumber);
    train->add_option("--top-k", train_args.top_k, "experts evaluated per input")
        ->check(CLI::PositiveNumber);
    train->add_flag("--separate-heads", train_args.separate_heads,
                    "train each metric head in its own pass");
    train->add_flag("--train-base", train_args.train_base,
                    "unfreeze encoder base layers (adapters-only otherwise)");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "pass-rate report for a model");
    eval->add_option("--model", eval_args.model, "model artifact")->required();
    eval->add_option("--dataset", eval_args.dataset, "labeled JSONL corpus")->required();
    eval->add_option("--thresholds", eval_args.thresholds, "pass thresholds")
        ->delimiter(',');
    eval->add_option("--strata", eval_args.strata,
                     "token-count boundaries 'small_max,medium_max' (default terciles)");
    eval->add_option("--split", eval_args.split, "all, train or val");
    eval->add_option("--seed", eval_args.seed, "split seed");
    eval->add_option("--out", eval_args.out, "report path (.csv or .json)");

    PredictArgs predict_args;
    CLI::App* predict = app.add_subcommand("predict", "predict PPA for one Verilog file");
    predict->add_option("--model", predict_args.model, "model artifact")->required();
    predict->add_option("input", predict_args.input, "Verilog source file")->required();

    RepairArgs repair_args;
    CLI::App* repair = app.add_subcommand("repair", "purify raw modules into a corpus");
    repair->add_option("--dataset", repair_args.dataset, "raw modules (JSONL or dir)")
        ->required();
    repair->add_option("--out", repair_args.out, "cleaned JSONL path")->required();
    repair->add_option("--R", repair_args.R, "max parse-phase attempts")
        ->check(CLI::PositiveNumber);
    repair->add_option("--T", repair_args.T, "max synthesis-phase attempts")
        ->check(CLI::PositiveNumber);
    repair->add_option("--fix-client-url", repair_args.fix_client_url,
                       "HTTP fix endpoint (identity fixer when absent)");
    repair->add_option("--synth-cmd", repair_args.synth_cmd,
                       "external synthesis command, '{}' = source file");
    repair->add_option("--synth-regex", repair_args.synth_regex,
                       "metric=regex overrides for --synth-cmd output");
    repair->add_option("--timeout", repair_args.timeout, "client timeout seconds");
    repair->add_option("--retries", repair_args.retries, "transport retries");

    try {
        app.parse(argc, argv);
        train_args.epochs_given = epochs_opt->count() > 0;
        if (gen->parsed()) cmd_dataset_gen(gen_args);
        if (train->parsed()) cmd_train(train_args);
        if (eval->parsed()) cmd_eval(eval_args);
        if (predict->parsed()) cmd_predict(predict_args);
        if (repair->parsed()) cmd_repair(repair_args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.error_class()) {
            case ErrorClass::config: return 1;
            case ErrorClass::data: return 2;
            case ErrorClass::numeric: return 3;
        }
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
