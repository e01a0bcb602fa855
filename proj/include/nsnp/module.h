#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nsnp/tensor.h"

namespace nsnp {

// A named tensor owned by a layer. Buffers (running statistics) are saved in
// checkpoints but not touched by the optimizer.
struct NamedTensor {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

using NamedTensors = std::vector<NamedTensor>;

std::string join_name(const std::string& prefix, const std::string& leaf);

// Deterministic parameter initialisation. Every value is rounded to the
// nearest float so checkpoints (float32) round-trip bit-exactly.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    // He-normal: N(0, 2 / fan_in), fan_in = in_channels * kh * kw.
    Tensor kaiming(Shape shape);
    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for fully connected layers.
    Tensor uniform_fan_in(Shape shape, std::size_t fan_in);
    Tensor constant(Shape shape, double value);

private:
    std::mt19937_64 rng_;
};

double round_to_float(double v);
void round_to_float(Tensor& t);

}  // namespace nsnp
