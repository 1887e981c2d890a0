#include "rtlppa/proxy_ppa.hpp"

#include <algorithm>
#include <cstddef>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include "rtlppa/errors.hpp"

namespace rtlppa {

ProxyResult metrics_from_netlist(const Netlist& netlist) {
    ProxyResult result;
    if (netlist.gates.empty()) {
        result.errors.push_back("module '" + netlist.name + "' synthesizes to zero gates");
        return result;
    }

    std::map<std::string, std::size_t> driver;  // net -> gate index
    for (std::size_t g = 0; g < netlist.gates.size(); ++g) {
        const Gate& gate = netlist.gates[g];
        auto [it, inserted] = driver.emplace(gate.out, g);
        if (!inserted) {
            result.errors.push_back("net '" + gate.out + "' has multiple drivers");
        }
    }
    std::set<std::string> primary(netlist.inputs.begin(), netlist.inputs.end());
    for (const Gate& gate : netlist.gates) {
        for (const std::string& in : gate.ins) {
            if (!primary.count(in) && !driver.count(in)) {
                result.errors.push_back("net '" + in + "' is never driven");
            }
        }
    }
    for (const std::string& out : netlist.outputs) {
        if (!primary.count(out) && !driver.count(out)) {
            result.errors.push_back("output '" + out + "' is never driven");
        }
    }
    if (!result.errors.empty()) return result;

    // Longest-path arrival times via Kahn ordering over combinational edges.
    // dff outputs are sources fixed at kClkToQ; primary inputs at 0.
    const std::size_t n = netlist.gates.size();
    std::vector<std::size_t> indegree(n, 0);
    std::map<std::string, std::vector<std::size_t>> consumers;
    for (std::size_t g = 0; g < n; ++g) {
        if (netlist.gates[g].op == GateOp::g_dff) continue;  // sequential sink
        for (const std::string& in : netlist.gates[g].ins) {
            auto it = driver.find(in);
            if (it != driver.end() && netlist.gates[it->second].op != GateOp::g_dff) {
                consumers[in].push_back(g);
                ++indegree[g];
            }
        }
    }
    std::map<std::string, double> arrival;
    for (const std::string& in : netlist.inputs) arrival[in] = 0.0;
    std::deque<std::size_t> ready;
    for (std::size_t g = 0; g < n; ++g) {
        if (netlist.gates[g].op == GateOp::g_dff) {
            arrival[netlist.gates[g].out] = kClkToQ;
        } else if (indegree[g] == 0) {
            ready.push_back(g);
        }
    }
    std::size_t resolved = 0;
    double worst = netlist.has_clock ? kClkToQ : 0.0;
    while (!ready.empty()) {
        const std::size_t g = ready.front();
        ready.pop_front();
        ++resolved;
        const Gate& gate = netlist.gates[g];
        double start = 0.0;
        for (const std::string& in : gate.ins) {
            auto it = arrival.find(in);
            if (it != arrival.end()) start = std::max(start, it->second);
        }
        const double t = start + gate_delay(gate.op);
        arrival[gate.out] = t;
        worst = std::max(worst, t);
        auto it = consumers.find(gate.out);
        if (it != consumers.end()) {
            for (std::size_t next : it->second) {
                if (--indegree[next] == 0) ready.push_back(next);
            }
        }
    }
    std::size_t comb = 0;
    for (const Gate& gate : netlist.gates) {
        if (gate.op != GateOp::g_dff) ++comb;
    }
    if (resolved != comb) {
        for (std::size_t g = 0; g < n; ++g) {
            if (netlist.gates[g].op != GateOp::g_dff && indegree[g] > 0) {
                result.errors.push_back("combinational loop through net '" +
                                        netlist.gates[g].out + "'");
                break;
            }
        }
        return result;
    }
    // dff d-pin arrivals are already covered: every dff input is some net
    // whose arrival fed `worst` when it was resolved.

    double area = 0.0;
    std::size_t switching = 0;
    for (const Gate& gate : netlist.gates) {
        area += gate_area(gate.op);
        if (gate.op == GateOp::g_xor || gate.op == GateOp::g_mux) ++switching;
    }
    const double toggle =
        0.02 + 0.18 * (static_cast<double>(switching) / static_cast<double>(n));

    result.ok = true;
    result.gate_count = n;
    result.metrics.area = area;
    result.metrics.delay = worst;
    result.metrics.power = area * toggle;
    return result;
}

namespace {

// Cursor over the counted (non-separator) tokens of a lexed unit.
class TokenCursor {
  public:
    explicit TokenCursor(const SourceUnit& unit) {
        for (const Token& tok : unit.tokens) {
            if (!tok.is_separator()) tokens_.push_back(&tok);
        }
    }

    bool done() const { return pos_ >= tokens_.size(); }
    const std::string& peek() const { return tokens_[pos_]->lexeme; }
    TokenKind peek_kind() const { return tokens_[pos_]->kind; }

    std::string take() { return tokens_[pos_++]->lexeme; }

    bool accept(const std::string& lexeme) {
        if (!done() && peek() == lexeme) {
            ++pos_;
            return true;
        }
        return false;
    }

  private:
    std::vector<const Token*> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace

ProxyResult analyze_source(const std::string& verilog) {
    ProxyResult result;
    SourceUnit unit;
    try {
        unit = tokenize(verilog);
    } catch (const LexError& err) {
        result.errors.push_back(std::string("lex error: ") + err.what());
        return result;
    }

    TokenCursor cur(unit);
    Netlist netlist;
    std::set<std::string> declared;
    auto fail = [&](const std::string& message) {
        result.errors.push_back(message);
        return result;
    };

    if (!cur.accept("module")) return fail("expected 'module' declaration");
    if (cur.done() || cur.peek_kind() != TokenKind::identifier) {
        return fail("expected module name");
    }
    netlist.name = cur.take();
    if (cur.accept("(")) {
        while (!cur.done() && !cur.accept(")")) {
            if (cur.peek_kind() != TokenKind::identifier) {
                return fail("unsupported port list in module '" + netlist.name + "'");
            }
            cur.take();
            cur.accept(",");
        }
    }
    if (!cur.accept(";")) return fail("expected ';' after module header");

    auto take_ident = [&](std::string* out) {
        if (cur.done() || cur.peek_kind() != TokenKind::identifier) return false;
        *out = cur.take();
        return true;
    };
    auto parse_decl_list = [&](std::vector<std::string>* sink) -> bool {
        // ident (, ident)* ;
        while (true) {
            std::string name;
            if (!take_ident(&name)) return false;
            declared.insert(name);
            if (sink) sink->push_back(name);
            if (cur.accept(",")) continue;
            return cur.accept(";");
        }
    };

    bool closed = false;
    while (!cur.done()) {
        if (cur.accept("endmodule")) {
            closed = true;
            break;
        }
        if (cur.accept("input")) {
            std::vector<std::string> names;
            if (!parse_decl_list(&names)) return fail("malformed input declaration");
            for (std::string& name : names) {
                if (name == "clk") {
                    netlist.has_clock = true;
                } else {
                    netlist.inputs.push_back(std::move(name));
                }
            }
            continue;
        }
        if (cur.accept("output")) {
            if (!parse_decl_list(&netlist.outputs)) {
                return fail("malformed output declaration");
            }
            continue;
        }
        if (cur.accept("wire") || cur.accept("reg")) {
            std::vector<std::string> names;
            if (!parse_decl_list(&names)) return fail("malformed net declaration");
            for (std::string& name : names) {
                if (std::find(netlist.outputs.begin(), netlist.outputs.end(), name) ==
                    netlist.outputs.end()) {
                    netlist.wires.push_back(std::move(name));
                }
            }
            continue;
        }
        if (cur.accept("assign")) {
            std::string lhs;
            if (!take_ident(&lhs) || !cur.accept("=")) {
                return fail("malformed assign statement");
            }
            Gate gate;
            gate.out = lhs;
            if (cur.accept("~")) {
                std::string a;
                if (!take_ident(&a)) return fail("unsupported expression assigned to '" + lhs + "'");
                gate.op = GateOp::g_not;
                gate.ins = {a};
            } else {
                std::string a;
                if (!take_ident(&a)) return fail("unsupported expression assigned to '" + lhs + "'");
                if (cur.accept("&")) {
                    gate.op = GateOp::g_and;
                } else if (cur.accept("|")) {
                    gate.op = GateOp::g_or;
                } else if (cur.accept("^")) {
                    gate.op = GateOp::g_xor;
                } else if (cur.accept("?")) {
                    std::string t, f;
                    if (!take_ident(&t) || !cur.accept(":") || !take_ident(&f)) {
                        return fail("unsupported expression assigned to '" + lhs + "'");
                    }
                    gate.op = GateOp::g_mux;
                    gate.ins = {a, t, f};
                } else {
                    gate.op = GateOp::g_buf;
                    gate.ins = {a};
                }
                if (gate.ins.empty()) {
                    std::string b;
                    if (!take_ident(&b)) {
                        return fail("unsupported expression assigned to '" + lhs + "'");
                    }
                    gate.ins = {a, b};
                }
            }
            if (!cur.accept(";")) {
                return fail("unsupported expression assigned to '" + lhs + "'");
            }
            netlist.gates.push_back(std::move(gate));
            continue;
        }
        if (cur.accept("always")) {
            if (!cur.accept("@") || !cur.accept("(") || !cur.accept("posedge")) {
                return fail("only posedge-clocked always blocks are supported");
            }
            std::string clk;
            if (!take_ident(&clk) || !cur.accept(")")) {
                return fail("only posedge-clocked always blocks are supported");
            }
            netlist.has_clock = true;
            auto parse_nonblocking = [&]() -> bool {
                std::string lhs, rhs;
                if (!take_ident(&lhs) || !cur.accept("<=") || !take_ident(&rhs) ||
                    !cur.accept(";")) {
                    return false;
                }
                netlist.gates.push_back(Gate{GateOp::g_dff, lhs, {rhs}});
                return true;
            };
            if (cur.accept("begin")) {
                while (!cur.done() && !cur.accept("end")) {
                    if (!parse_nonblocking()) {
                        return fail("unsupported statement inside always block");
                    }
                }
            } else if (!parse_nonblocking()) {
                return fail("unsupported statement inside always block");
            }
            continue;
        }
        return fail("unsupported construct near '" + cur.peek() + "'");
    }
    if (!closed) return fail("missing 'endmodule'");

    for (const Gate& gate : netlist.gates) {
        for (const std::string& in : gate.ins) {
            if (!declared.count(in)) {
                return fail("identifier '" + in + "' is not declared");
            }
        }
        if (!declared.count(gate.out)) {
            return fail("identifier '" + gate.out + "' is not declared");
        }
    }

    return metrics_from_netlist(netlist);
}

std::string render_verilog(const Netlist& netlist) {
    std::ostringstream out;
    out << "module " << netlist.name << " (";
    bool first = true;
    auto port = [&](const std::string& name) {
        if (!first) out << ", ";
        out << name;
        first = false;
    };
    for (const std::string& in : netlist.inputs) port(in);
    if (netlist.has_clock) port("clk");
    for (const std::string& o : netlist.outputs) port(o);
    out << ");\n";

    for (const std::string& in : netlist.inputs) out << "  input " << in << ";\n";
    if (netlist.has_clock) out << "  input clk;\n";
    for (const std::string& o : netlist.outputs) out << "  output " << o << ";\n";

    std::set<std::string> regs;
    for (const Gate& gate : netlist.gates) {
        if (gate.op == GateOp::g_dff) regs.insert(gate.out);
    }
    for (const std::string& w : netlist.wires) {
        out << "  " << (regs.count(w) ? "reg" : "wire") << " " << w << ";\n";
    }
    for (const std::string& o : netlist.outputs) {
        if (regs.count(o)) out << "  reg " << o << ";\n";
    }

    std::vector<const Gate*> dffs;
    for (const Gate& gate : netlist.gates) {
        switch (gate.op) {
            case GateOp::g_and:
                out << "  assign " << gate.out << " = " << gate.ins[0] << " & "
                    << gate.ins[1] << ";\n";
                break;
            case GateOp::g_or:
                out << "  assign " << gate.out << " = " << gate.ins[0] << " | "
                    << gate.ins[1] << ";\n";
                break;
            case GateOp::g_xor:
                out << "  assign " << gate.out << " = " << gate.ins[0] << " ^ "
                    << gate.ins[1] << ";\n";
                break;
            case GateOp::g_not:
                out << "  assign " << gate.out << " = ~" << gate.ins[0] << ";\n";
                break;
            case GateOp::g_buf:
                out << "  assign " << gate.out << " = " << gate.ins[0] << ";\n";
                break;
            case GateOp::g_mux:
                out << "  assign " << gate.out << " = " << gate.ins[0] << " ? "
                    << gate.ins[1] << " : " << gate.ins[2] << ";\n";
                break;
            case GateOp::g_dff:
                dffs.push_back(&gate);
                break;
        }
    }
    if (!dffs.empty()) {
        out << "  always @(posedge clk) begin\n";
        for (const Gate* gate : dffs) {
            out << "    " << gate->out << " <= " << gate->ins[0] << ";\n";
        }
        out << "  end\n";
    }
    out << "endmodule\n";
    return out.str();
}

}  // namespace rtlppa
