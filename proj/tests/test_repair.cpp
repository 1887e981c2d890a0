#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtlppa/errors.hpp"
#include "rtlppa/proxy_ppa.hpp"
#include "rtlppa/repair.hpp"

using namespace rtlppa;

namespace {

const std::string kGood =
    "module ok (a, y);\n  input a;\n  output y;\n  assign y = ~a;\nendmodule\n";
// unbalanced paren: rejected by the syntax check
const std::string kParseBroken =
    "module bad (a, y;\n  input a;\n  output y;\n  assign y = ~a;\nendmodule\n";
// parses, but the structural scorer cannot handle '+'
const std::string kSynthBad =
    "module sb (a, y);\n  input a;\n  output y;\n  assign y = a + a;\nendmodule\n";

std::vector<std::pair<std::string, std::string>> steps_of(const RepairOutcome& outcome) {
    std::vector<std::pair<std::string, std::string>> steps;
    for (const TraceEntry& t : outcome.trace) steps.emplace_back(t.phase, t.action);
    return steps;
}

class FlakyFixClient : public FixClient {
  public:
    FlakyFixClient(std::size_t failures, std::string result)
        : failures_(failures), result_(std::move(result)) {}
    std::string request(const std::string&, const ToolDiagnostics&) override {
        if (failures_ > 0) {
            --failures_;
            throw RetryableClientError("connection reset");
        }
        return result_;
    }

  private:
    std::size_t failures_;
    std::string result_;
};

class FixedMetricsClient : public SynthesisClient {
  public:
    explicit FixedMetricsClient(ProxyMetrics metrics) : metrics_(metrics) {}
    ToolDiagnostics evaluate(const std::string&) override {
        ToolDiagnostics d;
        d.tool = ToolDiagnostics::Tool::synthesis;
        d.pass = true;
        d.metrics = metrics_;
        return d;
    }

  private:
    ProxyMetrics metrics_;
};

}  // namespace

TEST_CASE("clean module goes straight through") {
    ScriptedFixClient fix({});
    MockSynthesisClient synth;
    const RepairOutcome outcome = repair_loop("m1", kGood, fix, synth, {});

    CHECK(outcome.phase == RepairPhase::done);
    CHECK(outcome.id == "m1");
    CHECK(outcome.source == kGood);
    CHECK(outcome.parse_attempts == 1);
    CHECK(outcome.synth_attempts == 1);
    CHECK(fix.calls() == 0);
    REQUIRE(outcome.metrics.has_value());
    CHECK(outcome.metrics->area == doctest::Approx(3.0));  // one inverter
    CHECK(outcome.metrics->delay == doctest::Approx(0.5));
    CHECK(steps_of(outcome) ==
          std::vector<std::pair<std::string, std::string>>{{"parsing", "check"},
                                                           {"synthesis", "synthesize"}});
    CHECK(outcome.trace[0].pass);
    CHECK(outcome.trace[1].pass);
    CHECK(outcome.discard_reason.empty());
}

TEST_CASE("parse failure fixed on the second attempt") {
    ScriptedFixClient fix(std::map<std::string, std::string>{{kParseBroken, kGood}});
    MockSynthesisClient synth;
    const RepairOutcome outcome = repair_loop("m2", kParseBroken, fix, synth, {});

    CHECK(outcome.phase == RepairPhase::done);
    CHECK(outcome.source == kGood);
    CHECK(outcome.parse_attempts == 2);
    CHECK(outcome.synth_attempts == 1);
    CHECK(fix.calls() == 1);
    CHECK(steps_of(outcome) == std::vector<std::pair<std::string, std::string>>{
                                   {"parsing", "check"},
                                   {"parsing", "fix"},
                                   {"parsing", "check"},
                                   {"synthesis", "synthesize"}});
    CHECK_FALSE(outcome.trace[0].pass);
    CHECK(outcome.trace[0].messages.size() == 1);
    CHECK(outcome.trace[0].messages[0].find("unmatched '('") != std::string::npos);
}

TEST_CASE("discard when the parse budget is exhausted") {
    ScriptedFixClient fix({});  // returns the source unchanged
    MockSynthesisClient synth;
    RepairConfig config;
    config.max_parse_attempts = 3;
    const RepairOutcome outcome = repair_loop("m3", kParseBroken, fix, synth, config);

    CHECK(outcome.phase == RepairPhase::discarded);
    CHECK(outcome.discard_reason == "parse attempts exhausted");
    CHECK(outcome.parse_attempts == 3);
    CHECK(outcome.synth_attempts == 0);
    CHECK(fix.calls() == 2);  // R checks, R-1 fix calls in between
    CHECK(steps_of(outcome) == std::vector<std::pair<std::string, std::string>>{
                                   {"parsing", "check"},
                                   {"parsing", "fix"},
                                   {"parsing", "check"},
                                   {"parsing", "fix"},
                                   {"parsing", "check"}});
}

TEST_CASE("synthesis failure fixed within the synthesis budget") {
    ScriptedFixClient fix(std::map<std::string, std::string>{{kSynthBad, kGood}});
    MockSynthesisClient synth;
    const RepairOutcome outcome = repair_loop("m4", kSynthBad, fix, synth, {});

    CHECK(outcome.phase == RepairPhase::done);
    CHECK(outcome.parse_attempts == 1);  // the original text parses fine
    CHECK(outcome.synth_attempts == 2);
    CHECK(steps_of(outcome) == std::vector<std::pair<std::string, std::string>>{
                                   {"parsing", "check"},
                                   {"synthesis", "synthesize"},
                                   {"synthesis", "fix"},
                                   {"synthesis", "synthesize"}});
    CHECK_FALSE(outcome.trace[1].pass);
    CHECK(outcome.trace[1].messages.size() == 1);
    CHECK(outcome.trace[1].messages[0].find("unsupported expression") != std::string::npos);
}

TEST_CASE("a regressed fix re-parses on the synthesis budget") {
    // synth-fail -> fix introduces a parse error -> fix again -> accepted
    ScriptedFixClient fix({{kSynthBad, kParseBroken}, {kParseBroken, kGood}});
    MockSynthesisClient synth;
    const RepairOutcome outcome = repair_loop("m5", kSynthBad, fix, synth, {});

    CHECK(outcome.phase == RepairPhase::done);
    CHECK(outcome.parse_attempts == 1);
    CHECK(outcome.synth_attempts == 3);
    CHECK(steps_of(outcome) == std::vector<std::pair<std::string, std::string>>{
                                   {"parsing", "check"},
                                   {"synthesis", "synthesize"},
                                   {"synthesis", "fix"},
                                   {"synthesis", "check"},  // regression caught here
                                   {"synthesis", "fix"},
                                   {"synthesis", "synthesize"}});

    SUBCASE("and still discards once T is exhausted") {
        ScriptedFixClient fix2(
            std::map<std::string, std::string>{{kSynthBad, kParseBroken}});
        RepairConfig config;
        config.max_synth_attempts = 2;
        const RepairOutcome out2 = repair_loop("m6", kSynthBad, fix2, synth, config);
        CHECK(out2.phase == RepairPhase::discarded);
        CHECK(out2.discard_reason == "synthesis attempts exhausted");
        CHECK(out2.synth_attempts == 2);
    }
}

TEST_CASE("transport retries") {
    MockSynthesisClient synth;
    RepairConfig config;
    config.transport_retries = 2;

    SUBCASE("recovers when the client comes back") {
        FlakyFixClient fix(2, kGood);
        const RepairOutcome outcome = repair_loop("m7", kParseBroken, fix, synth, config);
        CHECK(outcome.phase == RepairPhase::done);
        CHECK(steps_of(outcome) == std::vector<std::pair<std::string, std::string>>{
                                       {"parsing", "check"},
                                       {"parsing", "transport_retry"},
                                       {"parsing", "transport_retry"},
                                       {"parsing", "fix"},
                                       {"parsing", "check"},
                                       {"synthesis", "synthesize"}});
        CHECK(outcome.trace[1].messages ==
              std::vector<std::string>{"connection reset"});
    }

    SUBCASE("discards when the client never answers") {
        FlakyFixClient fix(100, kGood);
        const RepairOutcome outcome = repair_loop("m8", kParseBroken, fix, synth, config);
        CHECK(outcome.phase == RepairPhase::discarded);
        CHECK(outcome.discard_reason == "fix client unreachable");
        // one check + (retries + 1) failed transport attempts
        CHECK(outcome.trace.size() == 4);
    }
}

TEST_CASE("acceptance requires three nonzero metrics") {
    ScriptedFixClient fix({});
    RepairConfig config;
    config.max_synth_attempts = 1;

    FixedMetricsClient zero_area(ProxyMetrics{0.0, 1.0, 1.0});
    const RepairOutcome outcome = repair_loop("m9", kGood, fix, zero_area, config);
    CHECK(outcome.phase == RepairPhase::discarded);
    CHECK(outcome.discard_reason == "synthesis attempts exhausted");
    REQUIRE(outcome.trace.size() == 2);
    CHECK_FALSE(outcome.trace[1].pass);

    FixedMetricsClient all_good(ProxyMetrics{5.0, 1.0, 0.25});
    const RepairOutcome ok = repair_loop("m10", kGood, fix, all_good, config);
    CHECK(ok.phase == RepairPhase::done);
    CHECK(ok.metrics->power == 0.25);
}

TEST_CASE("repair caps must be positive") {
    ScriptedFixClient fix({});
    MockSynthesisClient synth;
    RepairConfig config;
    config.max_parse_attempts = 0;
    CHECK_THROWS_AS(repair_loop("x", kGood, fix, synth, config), ConfigError);
}

TEST_CASE("repair_phase_name") {
    CHECK(std::string(repair_phase_name(RepairPhase::parsing)) == "parsing");
    CHECK(std::string(repair_phase_name(RepairPhase::synthesis)) == "synthesis");
    CHECK(std::string(repair_phase_name(RepairPhase::done)) == "done");
    CHECK(std::string(repair_phase_name(RepairPhase::discarded)) == "discarded");
}

TEST_CASE("outcome_to_json uses the accepted and discarded schemas") {
    ScriptedFixClient fix({});
    MockSynthesisClient synth;

    const RepairOutcome done = repair_loop("ok1", kGood, fix, synth, {});
    const auto dj = nlohmann::json::parse(outcome_to_json(done));
    CHECK(dj["id"] == "ok1");
    CHECK(dj["source"] == kGood);
    CHECK(dj["area"] == done.metrics->area);
    CHECK(dj["delay"] == done.metrics->delay);
    CHECK(dj["power"] == done.metrics->power);
    CHECK_FALSE(dj.contains("reason"));
    REQUIRE(dj["trace"].is_array());
    CHECK(dj["trace"].size() == done.trace.size());
    CHECK(dj["trace"][0]["phase"] == "parsing");
    CHECK(dj["trace"][0]["action"] == "check");
    CHECK(dj["trace"][0]["pass"] == true);

    const RepairOutcome dropped = repair_loop("bad1", kParseBroken, fix, synth, {});
    const auto bj = nlohmann::json::parse(outcome_to_json(dropped));
    CHECK(bj["reason"] == "parse attempts exhausted");
    CHECK_FALSE(bj.contains("area"));
    CHECK(bj["trace"].size() == dropped.trace.size());
}

TEST_CASE("source fingerprints ignore whitespace and comments") {
    const std::string spaced =
        "module ok (a, y);\n\n  input a;  // port\n  output y;\n"
        "  assign y = ~a; /* invert */\nendmodule\n";
    CHECK(source_fingerprint(spaced) == source_fingerprint(kGood));
    CHECK(source_fingerprint(kGood) != source_fingerprint(kSynthBad));
    // unlexable text falls back to the raw bytes
    CHECK(source_fingerprint("/* open") == "/* open");
    CHECK(source_fingerprint("/* open") != source_fingerprint("/* openx"));
}

TEST_CASE("dedupe_modules keeps the first of each fingerprint") {
    std::vector<DatasetRecord> records(4);
    records[0] = {"first", kGood, 1, 1, 1};
    records[1] = {"dup", "module ok (a, y);\n  input a; output y;\n  assign y = ~a;\nendmodule",
                  2, 2, 2};
    records[2] = {"other", kSynthBad, 3, 3, 3};
    records[3] = {"dup2", kGood, 4, 4, 4};

    const auto unique = dedupe_modules(records);
    REQUIRE(unique.size() == 2);
    CHECK(unique[0].id == "first");
    CHECK(unique[1].id == "other");

    // idempotent
    const auto again = dedupe_modules(unique);
    REQUIRE(again.size() == 2);
    CHECK(again[0].id == "first");
}

TEST_CASE("load_raw_modules") {
    namespace fs = std::filesystem;

    SUBCASE("jsonl input preserves order") {
        const std::string path = "/tmp/rtlppa_test_raw.jsonl";
        {
            std::ofstream out(path);
            out << R"({"id":"z","source":"module z; endmodule"})" << "\n";
            out << "\n";
            out << R"({"id":"a","source":"module a; endmodule"})" << "\n";
        }
        const auto modules = load_raw_modules(path);
        REQUIRE(modules.size() == 2);
        CHECK(modules[0].id == "z");
        CHECK(modules[1].id == "a");
        std::remove(path.c_str());
    }

    SUBCASE("malformed jsonl line raises") {
        const std::string path = "/tmp/rtlppa_test_raw_bad.jsonl";
        {
            std::ofstream out(path);
            out << R"({"id":"z"})" << "\n";
        }
        CHECK_THROWS_AS(load_raw_modules(path), Error);
        std::remove(path.c_str());
    }

    SUBCASE("directory input sorts .v files by name") {
        const fs::path dir = "/tmp/rtlppa_test_rawdir";
        fs::create_directory(dir);
        std::ofstream(dir / "b.v") << "module b; endmodule";
        std::ofstream(dir / "a.v") << "module a; endmodule";
        std::ofstream(dir / "ignored.txt") << "not verilog";
        const auto modules = load_raw_modules(dir.string());
        REQUIRE(modules.size() == 2);
        CHECK(modules[0].id == "a");
        CHECK(modules[1].id == "b");
        fs::remove_all(dir);
    }

    SUBCASE("missing or empty input") {
        CHECK_THROWS_AS(load_raw_modules("/tmp/rtlppa_test_missing.jsonl"), Error);
        const fs::path dir = "/tmp/rtlppa_test_rawdir_empty";
        fs::create_directory(dir);
        CHECK_THROWS_AS(load_raw_modules(dir.string()), EmptyDataset);
        fs::remove_all(dir);
    }
}

TEST_CASE("process synthesis client scrapes metrics from a command") {
    const std::map<std::string, std::string> patterns = {
        {"area", "area=([0-9.]+)"},
        {"delay", "delay=([0-9.]+)"},
        {"power", "power=([0-9.]+)"},
    };

    SUBCASE("happy path") {
        ProcessSynthesisClient client(
            "cat {} > /dev/null && printf 'area=12.5\\ndelay=3.25\\npower=0.5\\n'",
            patterns);
        const ToolDiagnostics d = client.evaluate(kGood);
        CHECK(d.pass);
        REQUIRE(d.metrics.has_value());
        CHECK(d.metrics->area == 12.5);
        CHECK(d.metrics->delay == 3.25);
        CHECK(d.metrics->power == 0.5);
    }

    SUBCASE("nonzero exit is reported") {
        ProcessSynthesisClient client("cat {} > /dev/null && exit 3", patterns);
        const ToolDiagnostics d = client.evaluate(kGood);
        CHECK_FALSE(d.pass);
        CHECK_FALSE(d.metrics.has_value());
        REQUIRE_FALSE(d.messages.empty());
        CHECK(d.messages[0].find("synthesis command exited with status") !=
              std::string::npos);
    }

    SUBCASE("missing metric in the output") {
        ProcessSynthesisClient client(
            "cat {} > /dev/null && printf 'area=1\\ndelay=2\\n'", patterns);
        const ToolDiagnostics d = client.evaluate(kGood);
        CHECK_FALSE(d.pass);
        CHECK_FALSE(d.metrics.has_value());
        CHECK(d.messages[0].find("metric 'power' not found") != std::string::npos);
    }

    SUBCASE("all three regexes are required up front") {
        CHECK_THROWS_AS(ProcessSynthesisClient("true", {{"area", "a"}}), ConfigError);
    }
}

TEST_CASE("http fix client validates its url") {
    CHECK_THROWS_AS(HttpFixClient("localhost:8080/fix"), ConfigError);
    // nothing listens on this port: transport failure, retryable
    HttpFixClient client("http://127.0.0.1:9/fix", 0.5);
    ToolDiagnostics diags;
    CHECK_THROWS_AS(client.request("module m; endmodule", diags), RetryableClientError);
}
