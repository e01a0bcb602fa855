#include "nsnp/nsnp_system.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "nsnp/error.h"

namespace nsnp::sim {

using nlohmann::json;

double FunctionSpec::operator()(double u) const {
    switch (kind) {
        case Kind::identity:
            return u;
        case Kind::linear:
            return a * u + b;
        case Kind::relu:
            return u > 0.0 ? u : 0.0;
        case Kind::sigmoid:
            return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
    }
    return u;
}

std::string FunctionSpec::describe() const {
    switch (kind) {
        case Kind::identity:
            return "identity";
        case Kind::linear: {
            std::ostringstream os;
            os << "linear(" << a << "," << b << ")";
            return os.str();
        }
        case Kind::relu:
            return "relu";
        case Kind::sigmoid:
            return "sigmoid";
    }
    return "?";
}

void NsnpSystem::validate() const {
    if (m == 0) throw ValidationError("NSNP system needs at least one neuron");
    if (weights.size() != m * m) {
        throw ValidationError("weights must be " + std::to_string(m) + "x" + std::to_string(m) + ", got " +
                              std::to_string(weights.size()) + " entries");
    }
    if (state.size() != m) {
        throw ValidationError("state must have " + std::to_string(m) + " entries, got " +
                              std::to_string(state.size()));
    }
}

bool fires(double u, double threshold, const FunctionSpec& consume) { return u >= threshold && u >= consume(u); }

std::vector<bool> firing_pattern(const NsnpSystem& sys) {
    std::vector<bool> pattern(sys.m);
    for (std::size_t i = 0; i < sys.m; ++i) pattern[i] = fires(sys.state[i], sys.threshold, sys.consume);
    return pattern;
}

std::vector<double> step(const NsnpSystem& sys) {
    sys.validate();
    const std::vector<bool> fired = firing_pattern(sys);
    std::vector<double> spikes(sys.m, 0.0);
    for (std::size_t j = 0; j < sys.m; ++j) {
        if (fired[j]) spikes[j] = sys.generate(sys.state[j]);
    }
    std::vector<double> next(sys.m);
    for (std::size_t i = 0; i < sys.m; ++i) {
        double u = sys.state[i];
        if (fired[i]) u -= sys.consume(sys.state[i]);
        for (std::size_t j = 0; j < sys.m; ++j) {
            if (fired[j]) u += sys.weight(i, j) * spikes[j];
        }
        next[i] = u;
    }
    return next;
}

Trace run(const NsnpSystem& sys, std::size_t steps) {
    sys.validate();
    NsnpSystem cur = sys;
    Trace trace;
    trace.reserve(steps + 1);
    for (std::size_t t = 0;; ++t) {
        trace.push_back({t, cur.state, firing_pattern(cur)});
        if (t == steps) break;
        cur.state = step(cur);
    }
    return trace;
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

// Line of the first occurrence of "key" in the source text (1 if absent).
std::size_t key_line(const std::string& text, const std::string& key) {
    const std::size_t pos = text.find('"' + key + '"');
    return pos == std::string::npos ? 1 : line_of_offset(text, pos);
}

[[noreturn]] void fail(const std::string& text, const std::string& key, const std::string& msg) {
    throw ValidationError("scenario line " + std::to_string(key_line(text, key)) + ", key '" + key + "': " + msg);
}

FunctionSpec parse_function(const json& j, const std::string& key, const std::string& text) {
    if (j.is_string()) {
        const std::string k = j.get<std::string>();
        if (k == "identity") return FunctionSpec::identity();
        if (k == "relu") return FunctionSpec::relu();
        if (k == "sigmoid") return FunctionSpec::sigmoid();
        fail(text, key, "unknown function '" + k + "'");
    }
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
        fail(text, key, "expected a function name or {\"kind\": ...}");
    }
    for (const auto& [k, _] : j.items()) {
        if (k != "kind" && k != "a" && k != "b") {
            fail(text, key, "unknown field '" + k + "'");
        }
    }
    const std::string kind = j["kind"].get<std::string>();
    if (kind == "linear") {
        if (!j.contains("a") || !j["a"].is_number() || (j.contains("b") && !j["b"].is_number())) {
            fail(text, key, "linear needs numeric 'a' (and optional 'b')");
        }
        return FunctionSpec::linear(j["a"].get<double>(), j.value("b", 0.0));
    }
    return parse_function(json(kind), key, text);
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // byte is 1-based offset of the offending character
        const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
        throw ValidationError("scenario line " + std::to_string(line_of_offset(text, offset)) +
                              ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw ValidationError("scenario line 1: top level must be an object");
    static const char* kKeys[] = {"threshold", "consume", "generate", "weights", "initial_state", "steps"};
    for (const auto& [k, _] : j.items()) {
        bool known = false;
        for (const char* allowed : kKeys) known = known || k == allowed;
        if (!known) fail(text, k, "unknown key");
    }
    for (const char* required : kKeys) {
        if (!j.contains(required)) throw ValidationError(std::string("scenario line 1: missing key '") + required + "'");
    }

    Scenario sc;
    NsnpSystem& sys = sc.system;
    if (!j["threshold"].is_number()) fail(text, "threshold", "expected a number");
    sys.threshold = j["threshold"].get<double>();
    sys.consume = parse_function(j["consume"], "consume", text);
    sys.generate = parse_function(j["generate"], "generate", text);

    const json& state = j["initial_state"];
    if (!state.is_array() || state.empty()) {
        fail(text, "initial_state", "expected a non-empty array of numbers");
    }
    for (const json& v : state) {
        if (!v.is_number()) fail(text, "initial_state", "entries must be numbers");
        sys.state.push_back(v.get<double>());
    }
    sys.m = sys.state.size();

    const json& w = j["weights"];
    if (!w.is_array() || w.size() != sys.m) {
        fail(text, "weights", "expected " + std::to_string(sys.m) + " rows");
    }
    for (std::size_t i = 0; i < sys.m; ++i) {
        if (!w[i].is_array() || w[i].size() != sys.m) {
            fail(text, "weights", "row " + std::to_string(i + 1) + " must have " + std::to_string(sys.m) + " numbers");
        }
        for (const json& v : w[i]) {
            if (!v.is_number()) fail(text, "weights", "entries must be numbers");
            sys.weights.push_back(v.get<double>());
        }
    }

    const json& steps = j["steps"];
    if (!steps.is_number_integer() || steps.get<long long>() < 0) {
        fail(text, "steps", "expected a non-negative integer");
    }
    sc.steps = steps.get<std::size_t>();
    sys.validate();
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

void write_trace_csv(const Trace& trace, std::ostream& out) {
    const std::size_t m = trace.empty() ? 0 : trace.front().state.size();
    out << "t";
    for (std::size_t i = 1; i <= m; ++i) out << ",u_" << i;
    for (std::size_t i = 1; i <= m; ++i) out << ",fired_" << i;
    out << '\n';
    char buf[64];
    for (const TraceRow& row : trace) {
        out << row.t;
        for (double v : row.state) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        for (bool f : row.fired) out << ',' << (f ? 1 : 0);
        out << '\n';
    }
}

}  // namespace nsnp::sim
