#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int status = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const char* bin = std::getenv("RTLPPA_CLI");
    REQUIRE_MESSAGE(bin != nullptr, "set RTLPPA_CLI to the rtlppa binary path");
    const std::string cmd = std::string(bin) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) result.output.append(buf, n);
    const int raw = pclose(pipe);
    result.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return result;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

// one scratch corpus + model shared across the cases below, built on demand
struct CliFixture {
    fs::path dir = "/tmp/rtlppa_cli_scratch";
    fs::path corpus = dir / "corpus.jsonl";
    fs::path model = dir / "model.json";

    CliFixture() {
        fs::create_directories(dir);
        if (!fs::exists(corpus)) {
            const RunResult gen = run_cli("dataset-gen --count 12 --seed 3 --out " +
                                          corpus.string());
            REQUIRE(gen.status == 0);
        }
        if (!fs::exists(model)) {
            const RunResult train =
                run_cli("train --dataset " + corpus.string() + " --out " +
                        model.string() + " --epochs 8 --experts 2 --top-k 1 --seed 3");
            REQUIRE_MESSAGE(train.status == 0, train.output);
        }
    }
};

}  // namespace

TEST_CASE("dataset-gen writes a reproducible corpus plus metadata") {
    CliFixture fx;
    const RunResult gen = run_cli("dataset-gen --count 12 --seed 3 --out " +
                                  (fx.dir / "again.jsonl").string());
    CHECK(gen.status == 0);
    CHECK(gen.output.find("wrote 12 records") != std::string::npos);

    std::istringstream lines(slurp(fx.corpus));
    std::size_t count = 0;
    for (std::string line; std::getline(lines, line);) ++count;
    CHECK(count == 12);

    CHECK(slurp(fx.dir / "again.jsonl") == slurp(fx.corpus));  // same seed, same bytes

    const auto meta = nlohmann::json::parse(slurp(fx.corpus.string() + ".meta.json"));
    CHECK(meta["format"] == "rtlppa-dataset-meta");
    CHECK(meta["config"]["count"] == 12);
    CHECK(meta["config"]["seed"] == 3);
}

TEST_CASE("train fits a model and logs per-step losses") {
    CliFixture fx;
    CHECK(fs::exists(fx.model));

    // the fixture trained 8 epochs on 12 records: 80/20 split
    // re-run to inspect stdout
    const fs::path model2 = fx.dir / "model2.json";
    const RunResult train =
        run_cli("train --dataset " + fx.corpus.string() + " --out " + model2.string() +
                " --epochs 8 --experts 2 --top-k 1 --seed 3");
    REQUIRE_MESSAGE(train.status == 0, train.output);
    CHECK(train.output.find("trained 8 epochs on 10 samples (val 2)") != std::string::npos);
    CHECK(train.output.find("model written to") != std::string::npos);

    double first = 0.0, last = 0.0;
    REQUIRE(std::sscanf(train.output.c_str() + train.output.find("mean loss"),
                        "mean loss: first epoch %lf, last epoch %lf", &first, &last) == 2);
    CHECK(last < first);

    CHECK(slurp(model2) == slurp(fx.model));  // deterministic given flags

    std::istringstream log(slurp(model2.string() + ".log.jsonl"));
    std::size_t steps = 0;
    for (std::string line; std::getline(log, line);) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("epoch"));
        CHECK(j.contains("loss_area"));
        ++steps;
    }
    CHECK(steps == 8 * 2);  // 10 samples, batch 8 -> 2 steps per epoch
}

TEST_CASE("train resume without --epochs rewrites the checkpoint unchanged") {
    CliFixture fx;
    const fs::path resumed = fx.dir / "resumed.json";
    const RunResult run = run_cli("train --dataset " + fx.corpus.string() + " --model " +
                                  fx.model.string() + " --out " + resumed.string());
    REQUIRE_MESSAGE(run.status == 0, run.output);
    CHECK(run.output.find("no epochs requested; checkpoint rewritten") != std::string::npos);
    CHECK(slurp(resumed) == slurp(fx.model));
}

TEST_CASE("cli error channels") {
    CliFixture fx;

    SUBCASE("missing subcommand or flag is a usage error") {
        CHECK(run_cli("").status == 1);
        CHECK(run_cli("dataset-gen --count 5").status == 1);  // --out required
    }
    SUBCASE("config errors exit 1") {
        const RunResult r = run_cli("train --dataset " + fx.corpus.string() +
                                    " --out /tmp/x.json --dropout 1.5");
        CHECK(r.status == 1);
    }
    SUBCASE("data errors exit 2") {
        const RunResult r = run_cli("train --dataset /tmp/rtlppa_cli_nope.jsonl --out /tmp/x.json");
        CHECK(r.status == 2);
        CHECK(r.output.find("error:") != std::string::npos);
    }
    SUBCASE("corrupt model artifact exits 2 with a format message") {
        const fs::path junk = fx.dir / "junk.json";
        std::ofstream(junk) << "not a model";
        const RunResult r =
            run_cli("eval --model " + junk.string() + " --dataset " + fx.corpus.string());
        CHECK(r.status == 2);
        CHECK(r.output.find("not a valid model artifact") != std::string::npos);
    }
    SUBCASE("bad split name exits 1") {
        const RunResult r = run_cli("eval --model " + fx.model.string() + " --dataset " +
                                    fx.corpus.string() + " --split test");
        CHECK(r.status == 1);
        CHECK(r.output.find("--split must be all, train or val") != std::string::npos);
    }
}

TEST_CASE("eval renders a report and optional artifacts") {
    CliFixture fx;
    const RunResult all = run_cli("eval --model " + fx.model.string() + " --dataset " +
                                  fx.corpus.string());
    REQUIRE_MESSAGE(all.status == 0, all.output);
    CHECK(all.output.find("theta=0.10") != std::string::npos);
    CHECK(all.output.find("area") != std::string::npos);
    CHECK(all.output.find("power") != std::string::npos);

    const fs::path csv = fx.dir / "report.csv";
    REQUIRE(run_cli("eval --model " + fx.model.string() + " --dataset " +
                    fx.corpus.string() + " --out " + csv.string())
                .status == 0);
    CHECK(slurp(csv).rfind("metric,threshold,stratum,pass_rate,count\n", 0) == 0);

    const fs::path json_path = fx.dir / "report.json";
    REQUIRE(run_cli("eval --model " + fx.model.string() + " --dataset " +
                    fx.corpus.string() + " --split val --seed 3 --out " +
                    json_path.string())
                .status == 0);
    const auto artifact = nlohmann::json::parse(slurp(json_path));
    CHECK(artifact["format"] == "rtlppa-report");
    CHECK(artifact["config"]["split"] == "val");
    CHECK(artifact["config"]["seed"] == 3);
    CHECK(artifact["report"]["metrics"].is_array());
}

TEST_CASE("predict emits one json object with physical units") {
    CliFixture fx;
    const fs::path source = fx.dir / "mod.v";
    std::ofstream(source) << "module m (a, b, y);\n  input a, b;\n  output y;\n"
                             "  assign y = a ^ b;\nendmodule\n";
    const RunResult r = run_cli("predict --model " + fx.model.string() + " " +
                                source.string());
    REQUIRE_MESSAGE(r.status == 0, r.output);
    const auto j = nlohmann::json::parse(r.output);
    for (const char* key : {"area", "delay", "power"}) {
        REQUIRE(j.contains(key));
        const double v = j[key].get<double>();
        CHECK(std::isfinite(v));
        CHECK(v > 0.0);
    }
}

TEST_CASE("repair splits accepted and discarded modules") {
    CliFixture fx;
    const fs::path raw = fx.dir / "raw.jsonl";
    {
        std::ofstream out(raw);
        out << R"({"id":"good","source":"module g (a, y); input a; output y; assign y = ~a; endmodule"})"
            << "\n";
        out << R"({"id":"dup","source":"module g (a, y);  input a;  output y;  assign y = ~a;  endmodule"})"
            << "\n";
        out << R"({"id":"broken","source":"module b (a, y; input a; output y; assign y = ~a; endmodule"})"
            << "\n";
    }
    const fs::path cleaned = fx.dir / "cleaned.jsonl";
    const RunResult r =
        run_cli("repair --dataset " + raw.string() + " --out " + cleaned.string());
    REQUIRE_MESSAGE(r.status == 0, r.output);
    CHECK(r.output.find("accepted 1, discarded 1, duplicates removed 1") !=
          std::string::npos);

    std::istringstream accepted(slurp(cleaned));
    std::string line;
    REQUIRE(std::getline(accepted, line));
    const auto good = nlohmann::json::parse(line);
    CHECK(good["id"] == "good");
    CHECK(good["area"].get<double>() > 0.0);
    CHECK_FALSE(std::getline(accepted, line));

    std::istringstream discarded(slurp(cleaned.string() + ".discarded.jsonl"));
    REQUIRE(std::getline(discarded, line));
    const auto bad = nlohmann::json::parse(line);
    CHECK(bad["id"] == "broken");
    CHECK(bad["reason"] == "parse attempts exhausted");
}
