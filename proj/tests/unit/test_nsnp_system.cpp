#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "nsnp/error.h"
#include "nsnp/nsnp_system.h"

using namespace nsnp;
using namespace nsnp::sim;

namespace {

NsnpSystem two_neuron() {
    NsnpSystem s;
    s.m = 2;
    s.threshold = 1.0;
    s.weights = {0.5, 0.0,
                 1.0, 0.0};
    s.state = {2.0, 0.5};
    return s;
}

}  // namespace

TEST(Fires, RuleExamples) {
    EXPECT_TRUE(fires(2.0, 1.0, FunctionSpec::identity()));
    EXPECT_FALSE(fires(0.5, 1.0, FunctionSpec::identity()));
    EXPECT_FALSE(fires(1.0, 1.0, FunctionSpec::linear(2.0, 0.0)));
    // Non-strict comparisons.
    EXPECT_TRUE(fires(1.0, 1.0, FunctionSpec::identity()));
}

TEST(FunctionSpec, Evaluation) {
    EXPECT_EQ(FunctionSpec::linear(2.0, -1.0)(3.0), 5.0);
    EXPECT_EQ(FunctionSpec::relu()(-2.0), 0.0);
    EXPECT_EQ(FunctionSpec::sigmoid()(0.0), 0.5);
    EXPECT_GT(FunctionSpec::sigmoid()(-1000.0), -1e-300);
}

TEST(Step, TwoNeuronHandSimulation) {
    auto next = step(two_neuron());
    EXPECT_EQ(next, (std::vector<double>{1.0, 2.5}));
}

TEST(Step, ZeroWeightsFullConsumption) {
    NsnpSystem s;
    s.m = 1;
    s.threshold = 1.0;
    s.weights = {0.0};
    s.state = {5.0};
    EXPECT_EQ(step(s), std::vector<double>{0.0});
}

TEST(Step, NothingFiresStateUnchanged) {
    NsnpSystem s = two_neuron();
    s.state = {0.2, 0.9};
    EXPECT_EQ(step(s), s.state);
}

TEST(Step, DoesNotMutateSystem) {
    NsnpSystem s = two_neuron();
    const auto before = s.weights;
    run(s, 4);
    EXPECT_EQ(s.weights, before);
    EXPECT_EQ(s.state, (std::vector<double>{2.0, 0.5}));
}

TEST(Run, ZeroStepsAndHandTrace) {
    Trace t0 = run(two_neuron(), 0);
    ASSERT_EQ(t0.size(), 1u);
    EXPECT_EQ(t0[0].state, (std::vector<double>{2.0, 0.5}));

    Trace t = run(two_neuron(), 3);
    ASSERT_EQ(t.size(), 4u);
    const std::vector<std::vector<double>> states = {{2.0, 0.5}, {1.0, 2.5}, {0.5, 1.0}, {0.5, 0.0}};
    const std::vector<std::vector<bool>> fired = {{true, false}, {true, true}, {false, true}, {false, false}};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(t[i].t, i);
        EXPECT_EQ(t[i].state, states[i]);
        EXPECT_EQ(t[i].fired, fired[i]);
    }
}

TEST(Run, AutapseFixedPoint) {
    NsnpSystem s;
    s.m = 1;
    s.threshold = 1.0;
    s.weights = {1.0};
    s.state = {2.0};
    for (const auto& row : run(s, 50)) EXPECT_EQ(row.state[0], 2.0);
}

TEST(Properties, PermutationEquivariance) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> w(-0.5, 1.0), u(-1.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        NsnpSystem s;
        s.m = 4;
        s.threshold = 0.7;
        s.consume = FunctionSpec::linear(0.6, 0.1);
        s.generate = FunctionSpec::sigmoid();
        s.weights.resize(16);
        for (double& x : s.weights) x = w(rng);
        s.state.resize(4);
        for (double& x : s.state) x = u(rng);
        std::vector<std::size_t> perm(4);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);

        NsnpSystem p = s;
        for (std::size_t i = 0; i < 4; ++i) {
            p.state[i] = s.state[perm[i]];
            for (std::size_t j = 0; j < 4; ++j) p.weights[i * 4 + j] = s.weight(perm[i], perm[j]);
        }
        Trace a = run(s, 8), b = run(p, 8);
        for (std::size_t t = 0; t < a.size(); ++t) {
            for (std::size_t i = 0; i < 4; ++i) {
                // Summation order changes with the permutation, so compare to rounding.
                EXPECT_NEAR(b[t].state[i], a[t].state[perm[i]], 1e-12);
                EXPECT_EQ(b[t].fired[i], a[t].fired[perm[i]]);
            }
        }
    }
}

TEST(Properties, LinearScalingWhenAllFire) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> w(0.0, 0.6), u(0.5, 2.0);
    NsnpSystem s;
    s.m = 3;
    s.threshold = 0.0;
    s.weights.resize(9);
    for (double& x : s.weights) x = w(rng);
    s.state = {u(rng), u(rng), u(rng)};
    const double alpha = 2.0;  // power of two keeps scaling exact
    NsnpSystem scaled = s;
    for (double& x : scaled.state) x *= alpha;
    Trace a = run(s, 6), b = run(scaled, 6);
    for (std::size_t t = 0; t < a.size(); ++t) {
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_TRUE(a[t].fired[i]);
            EXPECT_EQ(b[t].state[i], alpha * a[t].state[i]);
        }
    }
}

TEST(Properties, Deterministic) {
    NsnpSystem s = two_neuron();
    s.generate = FunctionSpec::sigmoid();
    Trace a = run(s, 10), b = run(s, 10);
    for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t].state, b[t].state);
}

TEST(Scenario, ParseAndCsv) {
    const std::string text = R"({
  "threshold": 1.0,
  "consume": "identity",
  "generate": {"kind": "linear", "a": 1.0},
  "weights": [[0.5, 0.0], [1.0, 0.0]],
  "initial_state": [2.0, 0.5],
  "steps": 2
})";
    Scenario sc = parse_scenario(text);
    EXPECT_EQ(sc.steps, 2u);
    EXPECT_EQ(sc.system.m, 2u);
    std::ostringstream os;
    write_trace_csv(run(sc.system, sc.steps), os);
    EXPECT_EQ(os.str(), "t,u_1,u_2,fired_1,fired_2\n0,2,0.5,1,0\n1,1,2.5,1,1\n2,0.5,1,0,1\n");
}

TEST(Scenario, ErrorsCarryLineNumbers) {
    const std::string broken = "{\n  \"threshold\": 1.0,\n  \"steps\": ,\n}";
    try {
        parse_scenario(broken);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    const std::string bad_weights = R"({
  "threshold": 1.0,
  "consume": "identity",
  "generate": "identity",
  "initial_state": [2.0, 0.5],
  "weights": [[0.5], [1.0, 0.0]],
  "steps": 2
})";
    try {
        parse_scenario(bad_weights);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 6"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_scenario(R"({"threshold": 1, "bogus": 2})"), ValidationError);
}
