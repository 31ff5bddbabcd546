#pragma once

#include "fsstab/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace fsstab {

struct ExperimentSummary {
    double lambda = 0.0;
    double leading_eigenvalue = 0.0;
    int unstable_dimension = 0;
    int control_modes = 0;
    int kalman_rank = 0;
    bool controllable = false;
    double riccati_residual = 0.0;
    double measured_rate = 0.0;
    double open_loop_rate = 0.0;
    double constraint_max = 0.0;  // worst deformation constraint residual (relative)
    std::string output_directory;
};

// Runs mesh -> operators -> spectrum -> feedback -> simulation -> deformation
// and writes mesh.txt, spectrum.csv, gain.json, trajectory.csv,
// constraints.json, deformation snapshots and summary.json into the output
// directory.
ExperimentSummary run_experiment(const ExperimentConfig& config);

struct CheckResult {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string detail;
};

struct VerificationReport {
    std::vector<CheckResult> checks;
    bool all_pass() const;
};

// Runs every module's property checks on the configured setup; report-only.
VerificationReport verify(const ExperimentConfig& config);

void print_report(std::ostream& os, const VerificationReport& report);
void write_report_json(const std::string& path, const VerificationReport& report);

}  // namespace fsstab
