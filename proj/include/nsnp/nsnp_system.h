#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace nsnp::sim {

// Consume (g) or generate (f) rule of a neuron.
struct FunctionSpec {
    enum class Kind { identity, linear, relu, sigmoid };
    Kind kind = Kind::identity;
    double a = 1.0;  // linear slope
    double b = 0.0;  // linear offset

    static FunctionSpec identity() { return {}; }
    static FunctionSpec linear(double a, double b) { return {Kind::linear, a, b}; }
    static FunctionSpec relu() { return {Kind::relu, 1.0, 0.0}; }
    static FunctionSpec sigmoid() { return {Kind::sigmoid, 1.0, 0.0}; }

    double operator()(double u) const;
    std::string describe() const;
};

// m neurons with autapses. weights[i * m + j] is the synapse from neuron j into
// neuron i; the diagonal holds the autapses.
struct NsnpSystem {
    std::size_t m = 0;
    std::vector<double> weights;
    double threshold = 0.0;
    FunctionSpec consume;
    FunctionSpec generate;
    std::vector<double> state;

    double weight(std::size_t to, std::size_t from) const { return weights[to * m + from]; }
    // Throws ValidationError when weights or state do not match m.
    void validate() const;
};

struct TraceRow {
    std::size_t t = 0;
    std::vector<double> state;
    std::vector<bool> fired;  // firing decision taken on this row's state
};

using Trace = std::vector<TraceRow>;

// Firing condition: u >= T and u >= g(u).
bool fires(double u, double threshold, const FunctionSpec& consume);

std::vector<bool> firing_pattern(const NsnpSystem& sys);

// One synchronous update. Every neuron's firing is decided on the current
// state; firing neurons lose g(u) and send f(u) along all outgoing synapses,
// including their own autapse. Non-firing neurons keep their state and still
// collect spikes from firing predecessors.
std::vector<double> step(const NsnpSystem& sys);

// Trace of steps + 1 rows starting with the initial state. `sys` is not modified.
Trace run(const NsnpSystem& sys, std::size_t steps);

struct Scenario {
    NsnpSystem system;
    std::size_t steps = 0;
};

// JSON scenario: {"threshold", "consume", "generate", "weights", "initial_state", "steps"}.
// Syntax errors report the line number; semantic errors name the key.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

// CSV with header t,u_1..u_m,fired_1..fired_m; reals printed round-trip exact.
void write_trace_csv(const Trace& trace, std::ostream& out);

}  // namespace nsnp::sim
