#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rtlppa/dataset.hpp"
#include "rtlppa/errors.hpp"
#include "rtlppa/evaluation.hpp"
#include "rtlppa/model.hpp"
#include "rtlppa/repair.hpp"
#include "rtlppa/training.hpp"

namespace py = pybind11;

namespace {

py::dict predict_source(const std::string& model_path, const std::string& source) {
    const rtlppa::PpaModel model = rtlppa::load_model(model_path);
    const rtlppa::SourceUnit unit = rtlppa::tokenize(source);
    const std::vector<double> values = rtlppa::predict_physical(model, unit);
    py::dict out;
    for (std::size_t h = 0; h < model.metrics.size(); ++h) {
        out[rtlppa::metric_label(model.metrics[h])] = values[h];
    }
    return out;
}

py::tuple lex_count(const std::string& source) {
    const rtlppa::SourceUnit unit = rtlppa::tokenize(source);
    return py::make_tuple(unit.tokens.size(), unit.counted_tokens());
}

std::vector<std::string> syntax_errors(const std::string& source) {
    const rtlppa::SourceUnit unit = rtlppa::tokenize(source);
    std::vector<std::string> messages;
    for (const rtlppa::Diagnostic& d : rtlppa::syntax_check(unit)) {
        messages.push_back(d.message);
    }
    return messages;
}

std::size_t generate_dataset(std::size_t count, std::uint64_t seed,
                             const std::string& out_path) {
    const auto records = rtlppa::synth_toy_dataset(count, seed);
    rtlppa::save_jsonl(out_path, records);
    return records.size();
}

double train_model(const std::string& dataset_path, const std::string& out_path,
                   std::size_t epochs, std::uint64_t seed) {
    const rtlppa::LoadReport loaded = rtlppa::load_jsonl(dataset_path);
    rtlppa::ModelConfig config;
    config.seed = seed;
    config.epochs = epochs;
    rtlppa::PpaModel model = rtlppa::make_model(config);
    const rtlppa::Split split = rtlppa::split_train_val(loaded.records, 0.8, seed);
    rtlppa::fit_model_stats(model, split.train);
    const auto samples = rtlppa::prepare_samples(model, split.train);
    rtlppa::Trainer trainer(model);
    const auto history = trainer.fit(samples, epochs);
    rtlppa::save_model(model, out_path);
    return history.empty() ? 0.0 : history.back().total();
}

py::dict repair_source(const std::string& id, const std::string& source, std::size_t R,
                       std::size_t T) {
    rtlppa::ScriptedFixClient fix({});
    rtlppa::MockSynthesisClient synth;
    rtlppa::RepairConfig config;
    config.max_parse_attempts = R;
    config.max_synth_attempts = T;
    const rtlppa::RepairOutcome outcome =
        rtlppa::repair_loop(id, source, fix, synth, config);
    py::dict out;
    out["phase"] = rtlppa::repair_phase_name(outcome.phase);
    out["source"] = outcome.source;
    out["parse_attempts"] = outcome.parse_attempts;
    out["synth_attempts"] = outcome.synth_attempts;
    if (outcome.metrics) {
        out["area"] = outcome.metrics->area;
        out["delay"] = outcome.metrics->delay;
        out["power"] = outcome.metrics->power;
    }
    if (!outcome.discard_reason.empty()) out["reason"] = outcome.discard_reason;
    return out;
}

}  // namespace

PYBIND11_MODULE(_rtlppa, m) {
    m.doc() = "PPA estimation pipeline for Verilog";

    py::register_exception<rtlppa::Error>(m, "PipelineError");

    m.def("lex_count", &lex_count, py::arg("source"),
          "(total tokens, counted non-separator tokens) of a Verilog string");
    m.def("syntax_errors", &syntax_errors, py::arg("source"),
          "structural diagnostics; empty list means clean");
    m.def("huber_loss", &rtlppa::huber_loss, py::arg("yhat"), py::arg("z"));
    m.def("huber_grad", &rtlppa::huber_grad, py::arg("yhat"), py::arg("z"));
    m.def("relative_error", &rtlppa::relative_error, py::arg("pred"), py::arg("truth"));
    m.def("pass_rate", &rtlppa::pass_rate, py::arg("res"), py::arg("theta"));
    m.def("format_percent", &rtlppa::format_percent, py::arg("rate"));
    m.def("generate_dataset", &generate_dataset, py::arg("count"), py::arg("seed"),
          py::arg("out_path"), "write a labeled toy corpus; returns record count");
    m.def("train_model", &train_model, py::arg("dataset_path"), py::arg("out_path"),
          py::arg("epochs"), py::arg("seed"),
          "fit on the 80% split; returns the final epoch's summed mean loss");
    m.def("predict_source", &predict_source, py::arg("model_path"), py::arg("source"),
          "physical-unit predictions {area, delay, power}");
    m.def("repair_source", &repair_source, py::arg("id"), py::arg("source"),
          py::arg("R") = 3, py::arg("T") = 3,
          "run the purification loop with the bundled mock clients");
}
