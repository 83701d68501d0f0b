#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "funnelctl/controllers.hpp"
#include "funnelctl/errchain.hpp"
#include "funnelctl/funnels.hpp"
#include "funnelctl/plants.hpp"
#include "funnelctl/reference.hpp"
#include "funnelctl/sim.hpp"

namespace funnelctl {

using nlohmann::json;

/// Malformed or inconsistent scenario file; maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// y^(r) = d_gain * d + t_gain * T + u_gain * u
struct AffineFde {
    Eigen::VectorXd d_gain;  // m
    Eigen::MatrixXd t_gain;  // m x q
    Eigen::MatrixXd u_gain;  // m x m
};

struct DelaySpec {
    double tau;
};
struct LinearSpec {
    Eigen::MatrixXd A, B, C, D;
    Eigen::VectorXd eta0;
};
struct PlaySpec {
    double sigma;
    Eigen::VectorXd w0;
};
struct RelaySpec {
    double on_level, off_level, out_hi, out_lo;
    std::vector<bool> state0;
};
using OperatorSpec = std::variant<DelaySpec, LinearSpec, PlaySpec, RelaySpec>;

struct FdeSpec {
    int r;
    int m;
    AffineFde f;
    std::optional<OperatorSpec> op;
    Disturbance disturbance = ZeroDisturbance{};
};

using PlantSpec = std::variant<MassOnCarParams, FdeSpec>;

struct ControllerSpec {
    std::string kind;   // "new_fc" | "legacy_fc"
    std::string label;  // defaults to kind
    double k = 0.0;            // new_fc
    double stage_scale = 2.0;  // legacy_fc
    GainFunctions gains;
    bool has_label = false;
};

struct OutputSpec {
    std::string csv;
    std::string report;
    std::string events;
    std::string plot;
    bool given = false;  // false: names derived from the scenario name, not serialized
};

struct ScenarioConfig {
    std::string name;
    PlantSpec plant;
    Eigen::VectorXd initial_state;
    std::vector<ScalarReference> reference;
    bool reference_broadcast = true;
    FunnelFunction funnel = FunnelFunction::constant(1.0, 1.0, 1.0);
    std::vector<ControllerSpec> controllers;
    bool controller_list = false;  // "controllers" array vs single "controller"
    IntegratorConfig integrator;
    OutputSpec output;

    int relative_degree() const;
    int output_dim() const;
};

/// Strict parse: unknown keys, missing fields and (r, m) mismatches throw ConfigError.
ScenarioConfig parse_config(const json& j);
ScenarioConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
json to_json(const ScenarioConfig& cfg);

/// Applies "a.b.c=value" to j; value is parsed as JSON when possible, else kept as a string.
void apply_override(json& j, const std::string& assignment);

std::unique_ptr<Plant> build_plant(const ScenarioConfig& cfg);
ReferenceSignal build_reference(const ScenarioConfig& cfg);
Controller build_controller(const ScenarioConfig& cfg, const ControllerSpec& spec);
/// Chain used for D_t audits: the first constant-gain controller's k, or
/// k = alpha + 2 when the scenario only has time-varying-gain controllers.
ErrorChainParams audit_chain(const ScenarioConfig& cfg);

struct TheoremCompliance {
    bool k_ok;
    bool N_surjective;
    bool init_feasible;
};

/// Error stack at t0 from the initial state, without simulating.
Stack initial_error_stack(const ScenarioConfig& cfg);
FeasibilityReport initial_feasibility(const ScenarioConfig& cfg);
TheoremCompliance theorem_compliance(const ScenarioConfig& cfg, const ControllerSpec& spec);

struct RunResult {
    std::string label;
    TrajectoryLog log;
    EventReport events;
    FeasibilityReport feasibility;
    TheoremCompliance compliance;
    std::vector<std::string> warnings;
    int exit_code = 0;
    double runtime_s = 0.0;
};

/// 0 completed, 2 funnel violation, 3 singularity or abort.
int exit_code_for(const TrajectoryLog& log);

RunResult run_scenario(const ScenarioConfig& cfg, std::size_t controller_index = 0);

json to_json(const FeasibilityReport& r);
json to_json(const EventReport& r);
json to_json(const MembershipReport& r);
json report_json(const ScenarioConfig& cfg, const RunResult& run, const json& artifacts);
json events_json(const TrajectoryLog& log);

/// Python/matplotlib script plotting error against +-psi and the input(s).
std::string plot_script(const std::string& csv_name);

struct SweepRow {
    double value;
    RunResult run;
    double sup_diff;  // dt sweeps: against the smallest-dt run, NaN otherwise
};

/// parameter: k | dt | funnel.c | init.<state-name>. Runs fan out over jobs threads.
std::vector<SweepRow> run_sweep(const json& base, const std::string& parameter, const std::vector<double>& values,
                                unsigned jobs);
std::string sweep_csv(const std::string& parameter, const std::vector<SweepRow>& rows);

/// One run per listed controller (at least two), in parallel.
std::vector<RunResult> run_compare(const ScenarioConfig& cfg, unsigned jobs);
std::string compare_csv(const std::vector<RunResult>& runs);
std::string compare_table(const std::vector<RunResult>& runs);

}  // namespace funnelctl
