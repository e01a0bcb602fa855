#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

#include "nsnp/data.h"
#include "nsnp/model.h"
#include "nsnp/training.h"

namespace nsnp::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kInvalid = 2, kNumerical = 3 };

// Everything `nsnp train` needs. Relative paths are resolved against the
// directory holding the config file.
struct RunConfig {
    model::ModelConfig model;
    training::TrainConfig train;
    std::string manifest;
    std::size_t task = 2;
    std::string magnification = "all";
    std::vector<std::string> augment;  // chain specs, e.g. "rot90:1+hist_eq"
    data::SplitFractions splits;
    std::uint64_t seed = 0;
    std::string output_dir = "run";
};

// Collects every problem before throwing one ValidationError.
RunConfig parse_run_config(const std::string& text, const std::string& origin, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json metrics_to_json(const training::MetricsReport& report, const std::vector<std::string>& class_names);

// args excludes the program name. Returns an ExitCode value.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nsnp::cli
