#include "nsnp/module.h"

#include <cmath>

namespace nsnp {

std::string join_name(const std::string& prefix, const std::string& leaf) {
    return prefix.empty() ? leaf : prefix + "." + leaf;
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_to_float(Tensor& t) {
    for (double& v : t.mutable_values()) v = round_to_float(v);
}

Tensor Initializer::kaiming(Shape shape) {
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor t(std::move(shape));
    for (double& v : t.mutable_values()) v = round_to_float(dist(rng_));
    return t;
}

Tensor Initializer::uniform_fan_in(Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.mutable_values()) v = round_to_float(dist(rng_));
    return t;
}

Tensor Initializer::constant(Shape shape, double value) { return Tensor(std::move(shape), round_to_float(value)); }

}  // namespace nsnp
