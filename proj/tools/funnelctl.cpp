// funnelctl: scenario runner for funnel-control simulations.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "funnelctl/errors.hpp"
#include "funnelctl/scenario.hpp"

namespace fs = std::filesystem;
using namespace funnelctl;

namespace {

struct CommonOptions {
    std::string config;
    std::string out_dir = ".";
    double dt = 0.0;
    std::vector<std::string> sets;
    unsigned jobs = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_runs = true) {
    cmd->add_option("--config,config", o.config, "scenario JSON file")->required();
    cmd->add_option("--set", o.sets, "override a config field, e.g. --set controller.k=4");
    if (!with_runs) return;
    cmd->add_option("--out-dir", o.out_dir, "directory for CSV/JSON artifacts");
    cmd->add_option("--dt", o.dt, "fixed RK4 step (shorthand for --set integrator.dt=...)")->check(CLI::PositiveNumber);
    cmd->add_option("--jobs", o.jobs, "worker threads for compare/sweep (default: hardware)");
}

std::vector<std::string> overrides(const CommonOptions& o) {
    std::vector<std::string> all = o.sets;
    if (o.dt > 0.0) {
        std::ostringstream os;
        os.precision(17);
        os << "integrator.dt=" << o.dt;
        all.push_back(os.str());
    }
    return all;
}

json load_raw(const CommonOptions& o) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config file " + o.config);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(o.config + ": " + e.what());
    }
    for (const auto& s : overrides(o)) apply_override(j, s);
    return j;
}

unsigned job_count(const CommonOptions& o) {
    if (o.jobs > 0) return o.jobs;
    return std::max(1u, std::thread::hardware_concurrency());
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

fs::path prepare_out(const CommonOptions& o) {
    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    return dir;
}

void print_warnings(const RunResult& r) {
    for (const auto& w : r.warnings) std::cerr << "warning [" << r.label << "]: " << w << '\n';
}

json write_run(const ScenarioConfig& cfg, const RunResult& run, const fs::path& dir, const std::string& stem) {
    const fs::path csv = dir / (stem + ".csv");
    const fs::path report = dir / (stem + "_report.json");
    const fs::path events = dir / (stem + "_events.json");
    const fs::path plot = dir / (stem + "_plot.py");
    {
        std::ofstream out(csv);
        write_csv(out, run.log);
    }
    write_file(events, events_json(run.log).dump(2) + "\n");
    write_file(plot, plot_script(csv.filename().string()));
    const json artifacts = {{"csv", csv.string()}, {"report", report.string()}, {"events", events.string()},
                            {"plot", plot.string()}};
    write_file(report, report_json(cfg, run, artifacts).dump(2) + "\n");
    return artifacts;
}

std::string strip_ext(const std::string& name, const std::string& ext) {
    if (name.size() > ext.size() && name.compare(name.size() - ext.size(), ext.size(), ext) == 0)
        return name.substr(0, name.size() - ext.size());
    return name;
}

int cmd_simulate(const CommonOptions& o) {
    const ScenarioConfig cfg = load_config(o.config, overrides(o));
    if (cfg.controllers.size() > 1)
        std::cerr << "note: simulate runs the first listed controller; use compare for all of them\n";
    const RunResult run = run_scenario(cfg, 0);
    print_warnings(run);
    const fs::path dir = prepare_out(o);
    write_run(cfg, run, dir, strip_ext(cfg.output.csv, ".csv"));
    std::cout << cfg.name << " [" << run.label << "]: " << to_string(run.log.status) << ", "
              << run.log.samples.size() << " samples, feasible at t0: " << (run.feasibility.feasible ? "yes" : "no")
              << ", min funnel margin " << run.events.min_funnel_margin << ", sup |u| " << run.events.sup_u
              << ", runtime " << run.runtime_s << " s\n";
    for (const auto& e : run.log.events) std::cout << "  event t=" << e.t << " " << e.kind << ": " << e.detail << '\n';
    return run.exit_code;
}

int cmd_check_feasibility(const CommonOptions& o) {
    const ScenarioConfig cfg = load_config(o.config, overrides(o));
    const FeasibilityReport rep = initial_feasibility(cfg);
    const ErrorChainParams chain = audit_chain(cfg);
    json out = to_json(rep);
    out["k"] = chain.k;
    out["error_stack"] = initial_error_stack(cfg).stacked();
    json compliance = json::array();
    for (const auto& c : cfg.controllers) {
        const TheoremCompliance tc = theorem_compliance(cfg, c);
        compliance.push_back({{"controller", c.label}, {"k_ok", tc.k_ok}, {"N_surjective", tc.N_surjective},
                              {"init_feasible", tc.init_feasible}});
    }
    out["theorem_compliance"] = compliance;
    std::cout << out.dump(2) << '\n';
    return rep.feasible ? 0 : 2;
}

int cmd_compare(const CommonOptions& o) {
    const ScenarioConfig cfg = load_config(o.config, overrides(o));
    const std::vector<RunResult> runs = run_compare(cfg, job_count(o));
    const fs::path dir = prepare_out(o);
    int code = 0;
    for (const auto& r : runs) {
        print_warnings(r);
        write_run(cfg, r, dir, cfg.name + "_" + r.label);
        code = std::max(code, r.exit_code);
        for (const auto& e : r.log.events)
            std::cerr << "[" << r.label << "] event t=" << e.t << " " << e.kind << ": " << e.detail << '\n';
    }
    write_file(dir / (cfg.name + "_compare.csv"), compare_csv(runs));
    const std::string table = compare_table(runs);
    write_file(dir / (cfg.name + "_compare.txt"), table);
    std::cout << table;
    return code;
}

int cmd_sweep(const CommonOptions& o, const std::string& param, const std::vector<double>& values) {
    const json base = load_raw(o);
    const ScenarioConfig cfg = parse_config(base);
    const std::vector<SweepRow> rows = run_sweep(base, param, values, job_count(o));
    const fs::path dir = prepare_out(o);
    std::string tag = param;
    std::replace(tag.begin(), tag.end(), '.', '_');
    const std::string csv = sweep_csv(param, rows);
    write_file(dir / (cfg.name + "_sweep_" + tag + ".csv"), csv);
    std::cout << csv;
    int code = 0;
    for (const auto& r : rows) code = std::max(code, r.run.exit_code);
    return code;
}

int cmd_verify_funnel(const CommonOptions& o, double tol, std::size_t points) {
    const ScenarioConfig cfg = load_config(o.config, overrides(o));
    const auto grid = uniform_grid(cfg.integrator.t0, cfg.integrator.t_end, points);
    const MembershipReport rep = verify_class_G(cfg.funnel, grid, tol);
    json out = to_json(rep);
    out["alpha"] = cfg.funnel.alpha();
    out["beta"] = cfg.funnel.beta();
    out["floor"] = funnel_floor(cfg.funnel);
    out["tol"] = tol;
    std::cout << out.dump(2) << '\n';
    return rep.ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Funnel control scenario runner"};
    app.require_subcommand(1);

    CommonOptions sim_o, feas_o, cmp_o, sweep_o, ver_o;
    auto* sim = app.add_subcommand("simulate", "run one scenario and write CSV/JSON artifacts");
    add_common(sim, sim_o);
    auto* feas = app.add_subcommand("check-feasibility", "audit the initial error stack against D_t0");
    add_common(feas, feas_o, false);
    auto* cmp = app.add_subcommand("compare", "run every listed controller on the same scenario");
    add_common(cmp, cmp_o);
    auto* sweep = app.add_subcommand("sweep", "vary one parameter over a list of values");
    add_common(sweep, sweep_o);
    std::string param;
    std::vector<double> values;
    sweep->add_option("--param", param, "k | dt | funnel.c | init.<z|zdot|s|sdot>")->required();
    sweep->add_option("--values", values, "comma separated values")->required()->delimiter(',');
    auto* ver = app.add_subcommand("verify-funnel", "check psi' >= -alpha psi + beta on a grid");
    add_common(ver, ver_o, false);
    double tol = 1e-9;
    std::size_t points = 1001;
    ver->add_option("--tol", tol, "allowed negative residual");
    ver->add_option("--points", points, "grid points on [t0, t_end]")->check(CLI::Range(2, 100000000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*sim) return cmd_simulate(sim_o);
        if (*feas) return cmd_check_feasibility(feas_o);
        if (*cmp) return cmd_compare(cmp_o);
        if (*sweep) return cmd_sweep(sweep_o, param, values);
        if (*ver) return cmd_verify_funnel(ver_o, tol, points);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 1;
}
