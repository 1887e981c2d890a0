#include "rtlppa/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtlppa/errors.hpp"
#include "rtlppa/proxy_ppa.hpp"

namespace rtlppa {

LoadReport load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorClass::data, "cannot open dataset file: " + path);
    }
    LoadReport report;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto reject = [&](const std::string& why) {
            ++report.skipped;
            std::ostringstream msg;
            msg << "line " << lineno << ": " << why;
            report.errors.push_back(msg.str());
        };
        nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) {
            reject("not a JSON object");
            continue;
        }
        DatasetRecord record;
        bool bad = false;
        for (const char* key : {"id", "source"}) {
            if (!parsed.contains(key) || !parsed[key].is_string()) {
                reject(std::string("missing or invalid field '") + key + "'");
                bad = true;
                break;
            }
        }
        if (bad) continue;
        for (const char* key : {"area", "delay", "power"}) {
            if (!parsed.contains(key) || !parsed[key].is_number()) {
                reject(std::string("missing or invalid field '") + key + "'");
                bad = true;
                break;
            }
            const double value = parsed[key].get<double>();
            if (!std::isfinite(value)) {
                reject(std::string("non-finite value for '") + key + "'");
                bad = true;
                break;
            }
            if (value <= 0.0) {
                reject(std::string("nonpositive label '") + key + "'");
                bad = true;
                break;
            }
        }
        if (bad) continue;
        record.id = parsed["id"].get<std::string>();
        record.source = parsed["source"].get<std::string>();
        record.area = parsed["area"].get<double>();
        record.delay = parsed["delay"].get<double>();
        record.power = parsed["power"].get<double>();
        report.records.push_back(std::move(record));
    }
    if (report.records.empty()) {
        throw EmptyDataset("no valid records in dataset: " + path);
    }
    return report;
}

void save_jsonl(const std::string& path, const std::vector<DatasetRecord>& records) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorClass::data, "cannot write dataset file: " + path);
    }
    for (const DatasetRecord& record : records) {
        nlohmann::ordered_json obj;
        obj["id"] = record.id;
        obj["source"] = record.source;
        obj["area"] = record.area;
        obj["delay"] = record.delay;
        obj["power"] = record.power;
        out << obj.dump() << "\n";
    }
    if (!out) {
        throw Error(ErrorClass::data, "write failed: " + path);
    }
}

Split split_train_val(const std::vector<DatasetRecord>& records, double train_fraction,
                      std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
        throw ConfigError("train fraction must lie in [0, 1]");
    }
    if (records.size() < 2) {
        throw InsufficientData("split needs at least 2 records, got " +
                               std::to_string(records.size()));
    }
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(records.size())));
    Split split;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? split.train : split.val).push_back(records[order[i]]);
    }
    return split;
}

namespace {

std::string net_name(std::size_t idx) { return "n" + std::to_string(idx); }

Netlist make_adder(std::size_t width, std::size_t depth, const std::string& name) {
    Netlist nl;
    nl.name = name;
    for (std::size_t i = 0; i < width; ++i) nl.inputs.push_back("a" + std::to_string(i));
    for (std::size_t i = 0; i < width; ++i) nl.inputs.push_back("b" + std::to_string(i));
    nl.inputs.push_back("cin");
    for (std::size_t i = 0; i < width; ++i) nl.outputs.push_back("s" + std::to_string(i));
    nl.outputs.push_back("cout");

    std::size_t next = 0;
    auto fresh = [&]() {
        std::string n = net_name(next++);
        nl.wires.push_back(n);
        return n;
    };
    std::vector<std::string> x(width), y(width);
    for (std::size_t i = 0; i < width; ++i) {
        x[i] = "a" + std::to_string(i);
        y[i] = "b" + std::to_string(i);
    }
    for (std::size_t stage = 0; stage < depth; ++stage) {
        const bool last_stage = stage + 1 == depth;
        std::string carry = "cin";
        std::vector<std::string> sums(width);
        for (std::size_t i = 0; i < width; ++i) {
            const bool last_bit = i + 1 == width;
            std::string p = fresh();
            nl.gates.push_back(Gate{GateOp::g_xor, p, {x[i], y[i]}});
            std::string g = fresh();
            nl.gates.push_back(Gate{GateOp::g_and, g, {x[i], y[i]}});
            std::string s = last_stage ? nl.outputs[i] : fresh();
            nl.gates.push_back(Gate{GateOp::g_xor, s, {p, carry}});
            std::string t = fresh();
            nl.gates.push_back(Gate{GateOp::g_and, t, {p, carry}});
            std::string c = (last_stage && last_bit) ? "cout" : fresh();
            nl.gates.push_back(Gate{GateOp::g_or, c, {g, t}});
            sums[i] = s;
            carry = c;
        }
        x = sums;
    }
    return nl;
}

Netlist make_mux_tree(std::size_t width, const std::string& name) {
    Netlist nl;
    nl.name = name;
    std::size_t levels = 0;
    for (std::size_t w = width; w > 1; w >>= 1) ++levels;
    for (std::size_t i = 0; i < width; ++i) nl.inputs.push_back("d" + std::to_string(i));
    for (std::size_t i = 0; i < levels; ++i) nl.inputs.push_back("sel" + std::to_string(i));
    nl.outputs.push_back("y");

    std::size_t next = 0;
    std::vector<std::string> level(nl.inputs.begin(), nl.inputs.begin() + width);
    for (std::size_t l = 0; l < levels; ++l) {
        const std::string sel = "sel" + std::to_string(l);
        std::vector<std::string> up;
        for (std::size_t j = 0; j + 1 < level.size(); j += 2) {
            std::string out;
            if (level.size() == 2) {
                out = "y";
            } else {
                out = net_name(next++);
                nl.wires.push_back(out);
            }
            nl.gates.push_back(Gate{GateOp::g_mux, out, {sel, level[j + 1], level[j]}});
            up.push_back(out);
        }
        level = up;
    }
    return nl;
}

Netlist make_parity(std::size_t width, const std::string& name) {
    Netlist nl;
    nl.name = name;
    for (std::size_t i = 0; i < width; ++i) nl.inputs.push_back("a" + std::to_string(i));
    nl.outputs.push_back("y");
    std::size_t next = 0;
    std::string acc = nl.inputs[0];
    for (std::size_t i = 1; i < width; ++i) {
        std::string out;
        if (i + 1 == width) {
            out = "y";
        } else {
            out = net_name(next++);
            nl.wires.push_back(out);
        }
        nl.gates.push_back(Gate{GateOp::g_xor, out, {acc, nl.inputs[i]}});
        acc = out;
    }
    return nl;
}

Netlist make_shift(std::size_t width, std::size_t depth, const std::string& name) {
    Netlist nl;
    nl.name = name;
    nl.has_clock = true;
    for (std::size_t i = 0; i < width; ++i) nl.inputs.push_back("d" + std::to_string(i));
    for (std::size_t i = 0; i < width; ++i) nl.outputs.push_back("q" + std::to_string(i));
    std::vector<std::string> prev(nl.inputs.begin(), nl.inputs.begin() + width);
    for (std::size_t t = 0; t < depth; ++t) {
        const bool last = t + 1 == depth;
        std::vector<std::string> cur(width);
        for (std::size_t b = 0; b < width; ++b) {
            cur[b] = last ? nl.outputs[b]
                          : "s" + std::to_string(t) + "_" + std::to_string(b);
            if (!last) nl.wires.push_back(cur[b]);
            nl.gates.push_back(Gate{GateOp::g_dff, cur[b], {prev[b]}});
        }
        prev = cur;
    }
    return nl;
}

GateOp pick_op(Rng& rng) {
    const double r = rng.uniform();
    if (r < 0.25) return GateOp::g_and;
    if (r < 0.45) return GateOp::g_or;
    if (r < 0.65) return GateOp::g_xor;
    if (r < 0.80) return GateOp::g_not;
    return GateOp::g_mux;
}

void push_random_gate(Netlist* nl, std::vector<std::string>* pool, const std::string& out,
                      Rng& rng) {
    const GateOp op = pick_op(rng);
    auto pick = [&]() { return (*pool)[rng.index(pool->size())]; };
    Gate gate;
    gate.op = op;
    gate.out = out;
    switch (op) {
        case GateOp::g_not:
            gate.ins = {pick()};
            break;
        case GateOp::g_mux:
            gate.ins = {pick(), pick(), pick()};
            break;
        default:
            gate.ins = {pick(), pick()};
            break;
    }
    nl->gates.push_back(std::move(gate));
}

Netlist make_fsm(std::size_t state_bits, std::size_t logic_gates, const std::string& name) {
    Netlist nl;
    nl.name = name;
    nl.has_clock = true;
    nl.inputs = {"in0", "in1"};
    nl.outputs = {"y"};
    // Structure depends only on the configuration, not on the corpus stream.
    Rng rng(fnv1a64("fsm/" + std::to_string(state_bits) + "/" +
                    std::to_string(logic_gates)));
    std::vector<std::string> pool = {"in0", "in1"};
    for (std::size_t b = 0; b < state_bits; ++b) {
        const std::string st = "st" + std::to_string(b);
        nl.wires.push_back(st);
        pool.push_back(st);
    }
    for (std::size_t j = 0; j < logic_gates; ++j) {
        const std::string out = net_name(j);
        nl.wires.push_back(out);
        push_random_gate(&nl, &pool, out, rng);
        pool.push_back(out);
    }
    for (std::size_t b = 0; b < state_bits; ++b) {
        const std::string d = net_name(logic_gates > 0 ? rng.index(logic_gates) : 0);
        nl.gates.push_back(Gate{GateOp::g_dff, "st" + std::to_string(b), {d}});
    }
    nl.gates.push_back(Gate{GateOp::g_buf, "y", {net_name(logic_gates - 1)}});
    return nl;
}

// Deliberately deep single chain; the op mix is a function of the length so
// the critical path stays config-deterministic.
Netlist make_chain(std::size_t length, const std::string& name) {
    Netlist nl;
    nl.name = name;
    nl.inputs = {"a0", "a1"};
    nl.outputs = {"y"};
    Rng rng(fnv1a64("chain/" + std::to_string(length)));
    std::string prev = "a0";
    for (std::size_t j = 0; j < length; ++j) {
        std::string out;
        if (j + 1 == length) {
            out = "y";
        } else {
            out = net_name(j);
            nl.wires.push_back(out);
        }
        const double r = rng.uniform();
        Gate gate;
        gate.out = out;
        if (r < 0.30) {
            gate.op = GateOp::g_and;
            gate.ins = {prev, rng.bernoulli(0.5) ? "a0" : "a1"};
        } else if (r < 0.60) {
            gate.op = GateOp::g_or;
            gate.ins = {prev, rng.bernoulli(0.5) ? "a0" : "a1"};
        } else if (r < 0.85) {
            gate.op = GateOp::g_xor;
            gate.ins = {prev, rng.bernoulli(0.5) ? "a0" : "a1"};
        } else {
            gate.op = GateOp::g_not;
            gate.ins = {prev};
        }
        nl.gates.push_back(std::move(gate));
        prev = out;
    }
    return nl;
}

Netlist make_soup(std::size_t width, std::size_t gates, const std::string& name) {
    Netlist nl;
    nl.name = name;
    for (std::size_t i = 0; i < width; ++i) nl.inputs.push_back("a" + std::to_string(i));
    nl.outputs = {"y0", "y1"};
    Rng rng(fnv1a64("soup/" + std::to_string(width) + "/" + std::to_string(gates)));
    std::vector<std::string> pool = nl.inputs;
    for (std::size_t j = 0; j < gates; ++j) {
        const std::string out = net_name(j);
        nl.wires.push_back(out);
        push_random_gate(&nl, &pool, out, rng);
        pool.push_back(out);
    }
    nl.gates.push_back(Gate{GateOp::g_buf, "y0", {net_name(gates - 1)}});
    nl.gates.push_back(Gate{GateOp::g_buf, "y1", {net_name(rng.index(gates))}});
    return nl;
}

template <typename T, std::size_t N>
T pick_from(Rng& rng, const T (&options)[N]) {
    return options[rng.index(N)];
}

}  // namespace

std::vector<DatasetRecord> synth_toy_dataset(std::size_t count, std::uint64_t seed) {
    if (count == 0) throw ConfigError("dataset size must be positive");
    Rng rng(seed);
    std::vector<DatasetRecord> records;
    records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        // The module name is the configuration name, so repeated draws of the
        // same configuration yield byte-identical sources (record ids stay
        // unique). Keeps the corpus a clean learnability probe instead of
        // smearing every tiny module with a one-off name token.
        const double r = rng.uniform();
        Netlist nl;
        if (r < 0.16) {
            static constexpr std::size_t widths[] = {2, 4, 8, 16};
            static constexpr std::size_t depths[] = {1, 1, 2, 2, 3};
            const std::size_t w = pick_from(rng, widths);
            const std::size_t d = pick_from(rng, depths);
            nl = make_adder(w, d,
                            "adder_w" + std::to_string(w) + "_d" + std::to_string(d));
        } else if (r < 0.20) {
            // giants keep the area span above three decades
            static constexpr std::size_t depths[] = {4, 5};
            const std::size_t d = pick_from(rng, depths);
            nl = make_adder(64, d, "adder_w64_d" + std::to_string(d));
        } else if (r < 0.34) {
            static constexpr std::size_t widths[] = {2, 4, 8, 16, 32};
            const std::size_t w = pick_from(rng, widths);
            nl = make_mux_tree(w, "muxtree_w" + std::to_string(w));
        } else if (r < 0.47) {
            static constexpr std::size_t widths[] = {2, 4, 8, 16, 32};
            const std::size_t w = pick_from(rng, widths);
            nl = make_parity(w, "parity_w" + std::to_string(w));
        } else if (r < 0.59) {
            static constexpr std::size_t widths[] = {2, 4, 8};
            static constexpr std::size_t depths[] = {1, 2, 4};
            const std::size_t w = pick_from(rng, widths);
            const std::size_t d = pick_from(rng, depths);
            nl = make_shift(w, d,
                            "shift_w" + std::to_string(w) + "_d" + std::to_string(d));
        } else if (r < 0.71) {
            static constexpr std::size_t bits[] = {1, 2, 3};
            static constexpr std::size_t logic[] = {8, 16, 24};
            const std::size_t b = pick_from(rng, bits);
            const std::size_t g = pick_from(rng, logic);
            nl = make_fsm(b, g,
                          "fsm_b" + std::to_string(b) + "_g" + std::to_string(g));
        } else if (r < 0.83) {
            static constexpr std::size_t widths[] = {4, 8, 16};
            static constexpr std::size_t gates[] = {10, 20, 40};
            const std::size_t w = pick_from(rng, widths);
            const std::size_t g = pick_from(rng, gates);
            nl = make_soup(w, g,
                           "soup_w" + std::to_string(w) + "_g" + std::to_string(g));
        } else if (r < 0.96) {
            static constexpr std::size_t lengths[] = {12, 25, 50, 100, 200};
            const std::size_t len = pick_from(rng, lengths);
            nl = make_chain(len, "chain_l" + std::to_string(len));
        } else {
            // deep chains keep the delay span above three decades; weighted so
            // the delay tail gets enough gradient mass to fit within budget
            static constexpr std::size_t lengths[] = {600, 800};
            const std::size_t len = pick_from(rng, lengths);
            nl = make_chain(len, "chain_l" + std::to_string(len));
        }
        const ProxyResult scored = metrics_from_netlist(nl);
        if (!scored.ok) {
            throw Error(ErrorClass::data,
                        "generator produced an unscorable netlist: " + nl.name);
        }
        std::ostringstream tag;
        tag << std::setw(4) << std::setfill('0') << i;
        DatasetRecord record;
        record.id = nl.name + "_" + tag.str();
        record.source = render_verilog(nl);
        record.area = scored.metrics.area;
        record.delay = scored.metrics.delay;
        record.power = scored.metrics.power;
        records.push_back(std::move(record));
    }
    return records;
}

}  // namespace rtlppa
