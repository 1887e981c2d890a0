#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtlppa/dataset.hpp"
#include "rtlppa/proxy_ppa.hpp"

namespace rtlppa {

enum class RepairPhase { parsing, synthesis, done, discarded };
const char* repair_phase_name(RepairPhase phase);

struct ToolDiagnostics {
    enum class Tool { parser, synthesis };
    Tool tool = Tool::parser;
    std::vector<std::string> messages;
    bool pass = false;
    std::optional<ProxyMetrics> metrics;  // present when synthesis passes
};

// Boundary to an LLM-style repair backend. Implementations may throw
// RetryableClientError on transport trouble; the orchestrator retries a
// bounded number of times and then discards the module.
class FixClient {
  public:
    virtual ~FixClient() = default;
    virtual std::string request(const std::string& source,
                                const ToolDiagnostics& diagnostics) = 0;
};

class SynthesisClient {
  public:
    virtual ~SynthesisClient() = default;
    virtual ToolDiagnostics evaluate(const std::string& source) = 0;
};

struct TraceEntry {
    std::string phase;   // "parsing" | "synthesis"
    std::string action;  // "check" | "synthesize" | "fix" | "transport_retry"
    bool pass = false;
    std::vector<std::string> messages;

    bool operator==(const TraceEntry&) const = default;
};

struct RepairOutcome {
    RepairPhase phase = RepairPhase::discarded;
    std::string id;
    std::string source;  // final text after any accepted fixes
    std::optional<ProxyMetrics> metrics;
    std::size_t parse_attempts = 0;
    std::size_t synth_attempts = 0;
    std::string discard_reason;
    std::vector<TraceEntry> trace;
};

struct RepairConfig {
    std::size_t max_parse_attempts = 3;  // R
    std::size_t max_synth_attempts = 3;  // T
    std::size_t transport_retries = 2;   // extra tries after a transport failure
};

// Two-phase purification: syntax check + fix up to R times, then synthesis +
// fix up to T times. A fix that reintroduces parse errors sends the module
// back through the parser but bills the synthesis budget.
RepairOutcome repair_loop(const std::string& id, const std::string& source,
                          FixClient& fix, SynthesisClient& synthesis,
                          const RepairConfig& config);

// One JSONL line per outcome. Accepted: {"id","source","area","delay",
// "power","trace"}; discarded: {"id","source","reason","trace"}.
std::string outcome_to_json(const RepairOutcome& outcome);

// Unlabeled repair input: a JSONL file of {"id","source"} lines or a
// directory of .v files (id = file stem, sorted by name).
struct RawModule {
    std::string id;
    std::string source;
};
std::vector<RawModule> load_raw_modules(const std::string& path);

// Canonical token-stream key (comments and whitespace stripped); unlexable
// sources fall back to their raw text.
std::string source_fingerprint(const std::string& text);

// Drops records whose fingerprint matches an earlier record; stable order.
std::vector<DatasetRecord> dedupe_modules(const std::vector<DatasetRecord>& records);

// --- bundled clients --------------------------------------------------------

// Lookup-table fix client for tests: unknown sources are returned unchanged.
class ScriptedFixClient : public FixClient {
  public:
    explicit ScriptedFixClient(std::map<std::string, std::string> revisions)
        : revisions_(std::move(revisions)) {}
    std::string request(const std::string& source, const ToolDiagnostics&) override;
    std::size_t calls() const { return calls_; }

  private:
    std::map<std::string, std::string> revisions_;
    std::size_t calls_ = 0;
};

// POST {"source","diagnostics"} to an HTTP endpoint, expect
// {"revised_source"}. Connection or protocol failures surface as
// RetryableClientError.
class HttpFixClient : public FixClient {
  public:
    HttpFixClient(const std::string& url, double timeout_seconds = 10.0);
    std::string request(const std::string& source,
                        const ToolDiagnostics& diagnostics) override;

  private:
    std::string base_;
    std::string path_;
    double timeout_seconds_;
};

// Deterministic mock on top of the structural proxy scorer; the only
// synthesis client exercised in CI.
class MockSynthesisClient : public SynthesisClient {
  public:
    ToolDiagnostics evaluate(const std::string& source) override;
};

// Runs a user-supplied command ("{}" replaced with a temp file holding the
// source) and scrapes area/delay/power from its stdout via regexes.
class ProcessSynthesisClient : public SynthesisClient {
  public:
    ProcessSynthesisClient(std::string command_template,
                           std::map<std::string, std::string> metric_patterns);
    ToolDiagnostics evaluate(const std::string& source) override;

  private:
    std::string command_;
    std::map<std::string, std::string> patterns_;  // "area"/"delay"/"power" -> regex
};

}  // namespace rtlppa
