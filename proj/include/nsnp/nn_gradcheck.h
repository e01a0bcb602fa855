#pragma once

#include <vector>

#include "nsnp/gradcheck.h"

namespace nsnp::gradcheck {

// Composite cases for the NSNP layers, attention blocks and the assembled
// model. The model cases run at 1x3x32x32 with a looser tolerance.
std::vector<Case> layer_cases();
std::vector<Case> attention_cases();
std::vector<Case> model_cases();

// Every case above plus primitive_cases(), in a fixed order.
std::vector<Case> all_cases();

}  // namespace nsnp::gradcheck
