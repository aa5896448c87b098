#pragma once

#include "gflow/geodesic.hpp"
#include "gflow/optimality.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gflow {

inline constexpr int kSummarySchemaVersion = 1;

/// Raised for malformed or inconsistent run configurations (exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Command { Solve, Project, Midpoint, Pressure, Certify };

std::string to_string(Command c);
Command parse_command(const std::string& name);

/// Everything a run needs. JSON keys match the field names; unknown keys are
/// rejected.
struct RunConfig {
    /// identity | translation | shift | antipodal | permutation | random
    /// | rotation-classical | rotation-generalized | rotation-split
    std::string scenario = "identity";
    std::string domain = "torus-1d";
    int n = 4;
    int K = 3;
    /// Defaults to 1, or pi for the rotation scenarios.
    std::optional<double> T;
    /// Translation velocity (scenario translation).
    std::vector<double> velocity{0.25, 0.0};
    /// Lattice shift along the first axis (scenario shift).
    int shift = 1;
    /// Explicit cell bijection (scenario permutation).
    std::vector<int> permutation;
    /// Closed-form flow instead of the solver for identity / translation.
    bool oracle = false;
    /// Exact LP instead of Sinkhorn (tiny instances only).
    bool brute_force = false;
    int theta_samples = 64;
    int subsamples = 4;
    /// Map for `project`: identity | halve | antipodal | shift | random.
    std::string h = "halve";
    /// Lagrangian potential for `certify`: pressure | zero.
    std::string q = "pressure";
    int test_fields = 10;
    std::uint64_t seed = 0;
    bool expect_certified = false;
    bool write_flow = true;
    std::string out = "run";
    SolverConfig solver;
    CheckOptions check;

    static RunConfig from_json(const nlohmann::json& j);
    /// Overlay the keys present in j onto this config (strict).
    void merge(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;

    double horizon() const;
    bool rotation_oracle() const;
};

struct RunResult {
    int exit_code = 0;
    nlohmann::json summary;
};

/// Run one pipeline and write summary.json, log.txt, fields/*.csv (and
/// flow.json) under config.out. Summaries hold no timings, so identical
/// configs give identical bytes.
RunResult run(Command command, const RunConfig& config);

/// Same, with a caller-supplied log stream in addition to log.txt.
RunResult run(Command command, const RunConfig& config, std::ostream* echo);

/// Relative differences between two summaries.
nlohmann::json compare_summaries(const nlohmann::json& a, const nlohmann::json& b);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace gflow
