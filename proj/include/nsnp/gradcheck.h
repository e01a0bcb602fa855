#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nsnp/tensor.h"

namespace nsnp::gradcheck {

// Leaves whose gradients are checked, plus a function that rebuilds the scalar
// objective from them. forward() must read the leaves' current values.
struct Problem {
    std::vector<Tensor> inputs;
    std::function<Tensor(const std::vector<Tensor>&)> forward;
};

struct Case {
    std::string name;
    std::function<Problem(std::mt19937_64&)> build;
    double tolerance = 1e-4;
};

struct Result {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

struct Options {
    double step = 1e-5;
    // Denominator floor: |a - n| / max(|a|, |n|, floor).
    double floor = 1e-4;
};

double relative_error(double analytic, double numeric, double floor);

// Analytic gradient via backward() against central differences with step h.
Result check(const Problem& problem, const std::string& name, double tolerance, Options options = {});

std::vector<Result> run(const std::vector<Case>& cases, std::uint64_t seed, Options options = {});

// Random tensor with values in [lo, hi).
Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0);
// Random values whose pairwise gaps are at least 1e-2, for max-pool cases.
Tensor distinct_tensor(std::mt19937_64& rng, Shape shape);
// Magnitudes in [0.1, 1) with random sign, keeping relu inputs off the kink.
Tensor away_from_zero(std::mt19937_64& rng, Shape shape);
// Random shape N x C x H x W with every extent inside the given bounds.
Shape random_shape(std::mt19937_64& rng, std::size_t max_n, std::size_t max_c, std::size_t min_hw,
                   std::size_t max_hw);

// Contracts a non-scalar output against a fixed random projection so every
// output entry influences the scalar objective.
Tensor project(const Tensor& out, std::uint64_t salt);

// Cases for every primitive op in nsnp::ops.
std::vector<Case> primitive_cases();

}  // namespace nsnp::gradcheck
