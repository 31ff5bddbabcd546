#pragma once

#include "fsstab/geometry.hpp"

#include <map>
#include <optional>
#include <string>

namespace fsstab {

// Declarative experiment description parsed from a sectioned key/value file.
struct ExperimentConfig {
    GeometryConfig geometry;
    std::optional<std::string> mesh_file;  // import instead of generating

    double lambda = 0.0;           // absolute target decay rate
    double lambda_relative = 0.0;  // multiple of |mu_1|; exactly one of the two
    int control_modes = 6;
    int eigen_count = 12;

    double horizon = 0.0;  // 0 -> 8 / lambda
    double dt = 0.0;       // 0 -> min(1e-2, 0.1 / lambda)
    std::string initial = "random";  // "random" | "eigenmode:<k>"
    unsigned long long seed = 42;

    int deformation_snapshots = 25;

    std::string output_directory = "out";
};

// Throws ConfigError with a line reference on malformed or invalid input.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// key override ("section.key" or bare key unique across sections)
void apply_override(ExperimentConfig& config, const std::string& key,
                    const std::string& value);

}  // namespace fsstab
