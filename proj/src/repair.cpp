#include "rtlppa/repair.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rtlppa/errors.hpp"
#include "rtlppa/frontend.hpp"

namespace rtlppa {

const char* repair_phase_name(RepairPhase phase) {
    switch (phase) {
        case RepairPhase::parsing: return "parsing";
        case RepairPhase::synthesis: return "synthesis";
        case RepairPhase::done: return "done";
        case RepairPhase::discarded: return "discarded";
    }
    return "unknown";
}

namespace {

std::vector<std::string> diagnostic_messages(const std::vector<Diagnostic>& diags) {
    std::vector<std::string> messages;
    messages.reserve(diags.size());
    for (const Diagnostic& d : diags) {
        messages.push_back(d.message + " (byte offset " + std::to_string(d.byte_offset) +
                           ")");
    }
    return messages;
}

ToolDiagnostics run_parser(const std::string& source) {
    ToolDiagnostics d;
    d.tool = ToolDiagnostics::Tool::parser;
    try {
        const SourceUnit unit = tokenize(source);
        const std::vector<Diagnostic> diags = syntax_check(unit);
        d.messages = diagnostic_messages(diags);
        d.pass = diags.empty();
    } catch (const LexError& err) {
        d.messages.push_back(std::string("lex error: ") + err.what());
        d.pass = false;
    }
    return d;
}

bool metrics_nonzero(const std::optional<ProxyMetrics>& metrics) {
    return metrics && metrics->area > 0.0 && metrics->delay > 0.0 &&
           metrics->power > 0.0;
}

}  // namespace

RepairOutcome repair_loop(const std::string& id, const std::string& source,
                          FixClient& fix, SynthesisClient& synthesis,
                          const RepairConfig& config) {
    if (config.max_parse_attempts < 1 || config.max_synth_attempts < 1) {
        throw ConfigError("repair caps must be at least 1");
    }
    RepairOutcome outcome;
    outcome.id = id;
    outcome.source = source;

    auto record = [&](const std::string& phase, const std::string& action, bool pass,
                      std::vector<std::string> messages) {
        outcome.trace.push_back(TraceEntry{phase, action, pass, std::move(messages)});
    };
    // Bounded transport retries around a client call; returns false when the
    // client stayed unreachable and the module must be discarded.
    auto call_fix = [&](const std::string& phase, const ToolDiagnostics& diags) {
        for (std::size_t attempt = 0; attempt <= config.transport_retries; ++attempt) {
            try {
                std::string revised = fix.request(outcome.source, diags);
                record(phase, "fix", true, {});
                outcome.source = std::move(revised);
                return true;
            } catch (const RetryableClientError& err) {
                record(phase, "transport_retry", false, {err.what()});
            }
        }
        outcome.phase = RepairPhase::discarded;
        outcome.discard_reason = "fix client unreachable";
        return false;
    };

    // Phase 1: parsing.
    for (std::size_t attempt = 1; attempt <= config.max_parse_attempts; ++attempt) {
        outcome.parse_attempts = attempt;
        const ToolDiagnostics diags = run_parser(outcome.source);
        record("parsing", "check", diags.pass, diags.messages);
        if (diags.pass) break;
        if (attempt == config.max_parse_attempts) {
            outcome.phase = RepairPhase::discarded;
            outcome.discard_reason = "parse attempts exhausted";
            return outcome;
        }
        if (!call_fix("parsing", diags)) return outcome;
    }

    // Phase 2: synthesis. A regressed fix re-enters the parser here but bills
    // this phase's budget.
    for (std::size_t attempt = 1; attempt <= config.max_synth_attempts; ++attempt) {
        outcome.synth_attempts = attempt;
        const ToolDiagnostics parse_diags = run_parser(outcome.source);
        if (!parse_diags.pass) {
            record("synthesis", "check", false, parse_diags.messages);
            if (attempt == config.max_synth_attempts) {
                outcome.phase = RepairPhase::discarded;
                outcome.discard_reason = "synthesis attempts exhausted";
                return outcome;
            }
            if (!call_fix("synthesis", parse_diags)) return outcome;
            continue;
        }

        ToolDiagnostics synth_diags;
        bool reachable = false;
        for (std::size_t t = 0; t <= config.transport_retries; ++t) {
            try {
                synth_diags = synthesis.evaluate(outcome.source);
                reachable = true;
                break;
            } catch (const RetryableClientError& err) {
                record("synthesis", "transport_retry", false, {err.what()});
            }
        }
        if (!reachable) {
            outcome.phase = RepairPhase::discarded;
            outcome.discard_reason = "synthesis client unreachable";
            return outcome;
        }
        const bool accepted = synth_diags.pass && metrics_nonzero(synth_diags.metrics);
        record("synthesis", "synthesize", accepted, synth_diags.messages);
        if (accepted) {
            outcome.phase = RepairPhase::done;
            outcome.metrics = synth_diags.metrics;
            return outcome;
        }
        if (attempt == config.max_synth_attempts) {
            outcome.phase = RepairPhase::discarded;
            outcome.discard_reason = "synthesis attempts exhausted";
            return outcome;
        }
        if (synth_diags.messages.empty()) {
            synth_diags.messages.push_back("synthesis reported no usable metrics");
        }
        if (!call_fix("synthesis", synth_diags)) return outcome;
    }
    outcome.phase = RepairPhase::discarded;
    outcome.discard_reason = "synthesis attempts exhausted";
    return outcome;
}

std::string outcome_to_json(const RepairOutcome& outcome) {
    nlohmann::ordered_json line;
    line["id"] = outcome.id;
    line["source"] = outcome.source;
    if (outcome.phase == RepairPhase::done && outcome.metrics) {
        line["area"] = outcome.metrics->area;
        line["delay"] = outcome.metrics->delay;
        line["power"] = outcome.metrics->power;
    } else {
        line["reason"] = outcome.discard_reason;
    }
    nlohmann::ordered_json trace = nlohmann::ordered_json::array();
    for (const TraceEntry& entry : outcome.trace) {
        nlohmann::ordered_json t;
        t["phase"] = entry.phase;
        t["action"] = entry.action;
        t["pass"] = entry.pass;
        t["messages"] = entry.messages;
        trace.push_back(std::move(t));
    }
    line["trace"] = std::move(trace);
    return line.dump();
}

std::vector<RawModule> load_raw_modules(const std::string& path) {
    namespace fs = std::filesystem;
    std::vector<RawModule> modules;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".v") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& file : files) {
            std::ifstream in(file);
            std::ostringstream text;
            text << in.rdbuf();
            modules.push_back(RawModule{file.stem().string(), text.str()});
        }
    } else {
        std::ifstream in(path);
        if (!in) throw Error(ErrorClass::data, "cannot open module input: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
            if (parsed.is_discarded() || !parsed.is_object() ||
                !parsed.contains("id") || !parsed["id"].is_string() ||
                !parsed.contains("source") || !parsed["source"].is_string()) {
                throw Error(ErrorClass::data,
                            "malformed module line " + std::to_string(lineno) + " in " +
                                path);
            }
            modules.push_back(RawModule{parsed["id"].get<std::string>(),
                                        parsed["source"].get<std::string>()});
        }
    }
    if (modules.empty()) throw EmptyDataset("no modules found in: " + path);
    return modules;
}

std::string source_fingerprint(const std::string& text) {
    try {
        const SourceUnit unit = tokenize(text);
        std::string key;
        for (const Token& tok : unit.tokens) {
            if (tok.is_separator()) continue;
            key += tok.lexeme;
            key += '\x1f';
        }
        return key;
    } catch (const LexError&) {
        return text;
    }
}

std::vector<DatasetRecord> dedupe_modules(const std::vector<DatasetRecord>& records) {
    std::vector<DatasetRecord> unique;
    std::set<std::string> seen;
    for (const DatasetRecord& record : records) {
        if (seen.insert(source_fingerprint(record.source)).second) {
            unique.push_back(record);
        }
    }
    return unique;
}

std::string ScriptedFixClient::request(const std::string& source, const ToolDiagnostics&) {
    ++calls_;
    auto it = revisions_.find(source);
    return it == revisions_.end() ? source : it->second;
}

HttpFixClient::HttpFixClient(const std::string& url, double timeout_seconds)
    : timeout_seconds_(timeout_seconds) {
    const std::size_t scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw ConfigError("fix client url must include a scheme: " + url);
    }
    const std::size_t slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        base_ = url;
        path_ = "/";
    } else {
        base_ = url.substr(0, slash);
        path_ = url.substr(slash);
    }
}

std::string HttpFixClient::request(const std::string& source,
                                   const ToolDiagnostics& diagnostics) {
    nlohmann::json body;
    body["source"] = source;
    body["diagnostics"] = diagnostics.messages;

    httplib::Client client(base_);
    client.set_connection_timeout(std::chrono::milliseconds(
        static_cast<int>(timeout_seconds_ * 1000)));
    client.set_read_timeout(std::chrono::milliseconds(
        static_cast<int>(timeout_seconds_ * 1000)));
    httplib::Result res = client.Post(path_, body.dump(), "application/json");
    if (!res) {
        throw RetryableClientError("fix client transport failure: " +
                                   httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw RetryableClientError("fix client returned status " +
                                   std::to_string(res->status));
    }
    nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("revised_source") ||
        !parsed["revised_source"].is_string()) {
        throw RetryableClientError("fix client returned malformed JSON");
    }
    return parsed["revised_source"].get<std::string>();
}

ToolDiagnostics MockSynthesisClient::evaluate(const std::string& source) {
    const ProxyResult result = analyze_source(source);
    ToolDiagnostics d;
    d.tool = ToolDiagnostics::Tool::synthesis;
    d.messages = result.errors;
    d.pass = result.ok;
    if (result.ok) d.metrics = result.metrics;
    return d;
}

ProcessSynthesisClient::ProcessSynthesisClient(
    std::string command_template, std::map<std::string, std::string> metric_patterns)
    : command_(std::move(command_template)), patterns_(std::move(metric_patterns)) {
    for (const char* key : {"area", "delay", "power"}) {
        if (!patterns_.count(key)) {
            throw ConfigError(std::string("missing regex for metric '") + key + "'");
        }
    }
}

ToolDiagnostics ProcessSynthesisClient::evaluate(const std::string& source) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path();
    const fs::path file =
        dir / ("rtlppa_synth_" + std::to_string(::getpid()) + "_" +
               std::to_string(reinterpret_cast<std::uintptr_t>(&source)) + ".v");
    {
        std::ofstream out(file);
        out << source;
        if (!out) throw RetryableClientError("cannot stage source for synthesis");
    }
    std::string command = command_;
    const std::size_t placeholder = command.find("{}");
    if (placeholder != std::string::npos) {
        command.replace(placeholder, 2, file.string());
    } else {
        command += " " + file.string();
    }
    command += " 2>&1";

    std::string output;
    FILE* pipe = ::popen(command.c_str(), "r");
    if (!pipe) {
        fs::remove(file);
        throw RetryableClientError("cannot launch synthesis command");
    }
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) output.append(buf, got);
    const int status = ::pclose(pipe);
    fs::remove(file);

    ToolDiagnostics d;
    d.tool = ToolDiagnostics::Tool::synthesis;
    if (status != 0) {
        d.pass = false;
        d.messages.push_back("synthesis command exited with status " +
                             std::to_string(status));
        if (!output.empty()) d.messages.push_back(output);
        return d;
    }
    ProxyMetrics metrics;
    bool all_found = true;
    for (const auto& [key, pattern] : patterns_) {
        std::smatch match;
        if (!std::regex_search(output, match, std::regex(pattern)) ||
            match.size() < 2) {
            d.messages.push_back("metric '" + key + "' not found in synthesis output");
            all_found = false;
            continue;
        }
        const double value = std::strtod(match[1].str().c_str(), nullptr);
        if (key == "area") metrics.area = value;
        else if (key == "delay") metrics.delay = value;
        else metrics.power = value;
    }
    d.pass = all_found;
    if (all_found) d.metrics = metrics;
    return d;
}

}  // namespace rtlppa
