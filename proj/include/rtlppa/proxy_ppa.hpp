#pragma once

#include <string>
#include <vector>

#include "rtlppa/frontend.hpp"

namespace rtlppa {

// Gate-level proxy used for synthetic labels and the mock synthesis client.
// Fixed, documented cost constants (see kGateArea / kGateDelay below and the
// toggle formula in proxy_power): labels are recomputable from source text by
// any script that follows the same rules.

enum class GateOp { g_and, g_or, g_xor, g_not, g_mux, g_buf, g_dff };

struct Gate {
    GateOp op;
    std::string out;
    std::vector<std::string> ins;  // mux: {sel, a, b}; dff: {d}
};

struct Netlist {
    std::string name;
    std::vector<std::string> inputs;  // clk excluded
    std::vector<std::string> outputs;
    std::vector<std::string> wires;  // internal nets (wire or reg)
    std::vector<Gate> gates;
    bool has_clock = false;
};

struct ProxyMetrics {
    double area = 0.0;
    double delay = 0.0;
    double power = 0.0;
};

struct ProxyResult {
    bool ok = false;
    std::vector<std::string> errors;
    ProxyMetrics metrics;
    std::size_t gate_count = 0;
};

// Per-gate area units.
constexpr double gate_area(GateOp op) {
    switch (op) {
        case GateOp::g_and: return 6.0;
        case GateOp::g_or: return 6.0;
        case GateOp::g_xor: return 8.0;
        case GateOp::g_not: return 3.0;
        case GateOp::g_mux: return 10.0;
        case GateOp::g_buf: return 2.0;
        case GateOp::g_dff: return 12.0;
    }
    return 0.0;
}

// Per-gate propagation delay; dff outputs launch at kClkToQ and cut paths.
constexpr double gate_delay(GateOp op) {
    switch (op) {
        case GateOp::g_and: return 1.0;
        case GateOp::g_or: return 1.0;
        case GateOp::g_xor: return 1.25;
        case GateOp::g_not: return 0.5;
        case GateOp::g_mux: return 1.5;
        case GateOp::g_buf: return 0.25;
        case GateOp::g_dff: return 0.0;
    }
    return 0.0;
}

constexpr double kClkToQ = 0.5;

// area   = sum of gate_area over all gates
// delay  = max net arrival time (longest combinational path; dff outputs
//          start at kClkToQ)
// power  = area * (0.02 + 0.18 * (xor_count + mux_count) / gate_count)
ProxyResult metrics_from_netlist(const Netlist& netlist);

// Parse the structural subset (scalar decls, two-input assigns, ~, ?:,
// posedge always blocks with nonblocking assigns) and score it. Anything
// outside the subset or structurally broken (undriven nets, multiple drivers,
// combinational loops) comes back as error messages with ok == false.
ProxyResult analyze_source(const std::string& verilog);

// Render a netlist as the structural Verilog subset accepted above.
std::string render_verilog(const Netlist& netlist);

}  // namespace rtlppa
