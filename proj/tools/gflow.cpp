// gflow: command-line front end for the runner.
//
//   gflow solve    --config run.json --out out/
//   gflow certify  --scenario rotation-generalized --domain disk-2d --n 32 --K 16 --q zero
//   gflow compare  out_a/summary.json out_b/summary.json

#include "gflow/error.hpp"
#include "gflow/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace gflow;
using nlohmann::json;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> scenario, domain, out, h, q, backend;
    std::optional<int> n, K, shift, theta_samples, subsamples, test_fields, max_sweeps, samples;
    std::optional<double> T, epsilon_floor, epsilon_start, marginal_tol, stage_tol;
    std::optional<std::uint64_t> seed;
    std::vector<double> velocity;
    std::vector<int> permutation;
    bool oracle = false, brute_force = false, expect_certified = false, no_flow = false, quiet = false;
};

void add_run_options(CLI::App* app, Overrides& o)
{
    app->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--scenario", o.scenario, "identity, translation, shift, antipodal, permutation, random, rotation-*");
    app->add_option("--domain", o.domain, "torus-1d, torus-2d or disk-2d");
    app->add_option("--n", o.n, "lattice points per axis");
    app->add_option("--K", o.K, "number of time steps");
    app->add_option("--T", o.T, "time horizon");
    app->add_option("--velocity", o.velocity, "translation velocity")->expected(1, 2);
    app->add_option("--shift", o.shift, "lattice shift");
    app->add_option("--permutation", o.permutation, "explicit cell bijection");
    app->add_flag("--oracle", o.oracle, "closed-form flow for identity / translation");
    app->add_flag("--brute-force", o.brute_force, "exact LP (tiny instances)");
    app->add_option("--theta-samples", o.theta_samples, "rotation oracle angles per start point");
    app->add_option("--subsamples", o.subsamples, "rotation oracle start points per cell axis");
    app->add_option("--map", o.h, "map h for project: identity, halve, antipodal, shift, random");
    app->add_option("--q", o.q, "potential for certify: pressure or zero");
    app->add_option("--test-fields", o.test_fields, "random test fields for the weak residual");
    app->add_option("--seed", o.seed, "seed for random maps and test fields");
    app->add_option("--epsilon-floor", o.epsilon_floor, "final entropic epsilon");
    app->add_option("--epsilon-start", o.epsilon_start, "initial entropic epsilon");
    app->add_option("--marginal-tol", o.marginal_tol, "L1 marginal tolerance at the floor");
    app->add_option("--stage-tol", o.stage_tol, "L1 tolerance between epsilon stages");
    app->add_option("--max-sweeps", o.max_sweeps, "sweep budget");
    app->add_option("--backend", o.backend, "auto, log-dense or scaling");
    app->add_option("--samples", o.samples, "sampled paths for the path-minimality check");
    app->add_flag("--expect-certified", o.expect_certified, "exit 3 unless certified");
    app->add_flag("--no-flow", o.no_flow, "skip flow.json");
    app->add_flag("--quiet", o.quiet, "log to log.txt only");
    app->add_option("--out", o.out, "output directory");
}

RunConfig build_config(const Overrides& o)
{
    RunConfig cfg;
    if (!o.config.empty()) cfg = RunConfig::from_json(read_json_file(o.config));
    json j = json::object();
    json solver = json::object();
    json check = json::object();
    if (o.scenario) j["scenario"] = *o.scenario;
    if (o.domain) j["domain"] = *o.domain;
    if (o.out) j["out"] = *o.out;
    if (o.h) j["h"] = *o.h;
    if (o.q) j["q"] = *o.q;
    if (o.n) j["n"] = *o.n;
    if (o.K) j["K"] = *o.K;
    if (o.T) j["T"] = *o.T;
    if (o.shift) j["shift"] = *o.shift;
    if (o.theta_samples) j["theta_samples"] = *o.theta_samples;
    if (o.subsamples) j["subsamples"] = *o.subsamples;
    if (o.test_fields) j["test_fields"] = *o.test_fields;
    if (o.seed) j["seed"] = *o.seed;
    if (!o.velocity.empty()) j["velocity"] = o.velocity;
    if (!o.permutation.empty()) j["permutation"] = o.permutation;
    if (o.oracle) j["oracle"] = true;
    if (o.brute_force) j["brute_force"] = true;
    if (o.expect_certified) j["expect_certified"] = true;
    if (o.no_flow) j["write_flow"] = false;
    if (o.epsilon_floor) solver["epsilon_floor"] = *o.epsilon_floor;
    if (o.epsilon_start) solver["epsilon_start"] = *o.epsilon_start;
    if (o.marginal_tol) solver["marginal_tol"] = *o.marginal_tol;
    if (o.stage_tol) solver["stage_tol"] = *o.stage_tol;
    if (o.max_sweeps) solver["max_sweeps"] = *o.max_sweeps;
    if (o.backend) solver["backend"] = *o.backend;
    if (o.samples) check["samples"] = *o.samples;
    if (!solver.empty()) j["solver"] = solver;
    if (!check.empty()) j["check"] = check;
    cfg.merge(j);
    return cfg;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Generalized incompressible flows on grids"};
    app.require_subcommand(1);

    Overrides o;
    std::vector<std::pair<CLI::App*, Command>> runs;
    for (Command c : {Command::Solve, Command::Project, Command::Midpoint, Command::Pressure, Command::Certify}) {
        auto* sub = app.add_subcommand(to_string(c));
        add_run_options(sub, o);
        runs.emplace_back(sub, c);
    }
    runs[0].first->description("solve the discrete geodesic and report the action");
    runs[1].first->description("project a map onto measure-preserving bijections");
    runs[2].first->description("midpoint of the identity and the scenario map");
    runs[3].first->description("solve and recover the pressure");
    runs[4].first->description("solve, recover the pressure and check optimality");

    std::string first, second;
    auto* cmp = app.add_subcommand("compare", "relative differences between two summary.json files");
    cmp->add_option("a", first)->required()->check(CLI::ExistingFile);
    cmp->add_option("b", second)->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmp->parsed()) {
            std::cout << compare_summaries(read_json_file(first), read_json_file(second)).dump(2) << '\n';
            return 0;
        }
        for (auto& [sub, command] : runs) {
            if (!sub->parsed()) continue;
            const RunConfig cfg = build_config(o);
            const RunResult r = run(command, cfg, o.quiet ? nullptr : &std::cerr);
            std::cout << (std::filesystem::path(cfg.out) / "summary.json").string() << '\n';
            return r.exit_code;
        }
    } catch (const ConfigError& e) {
        std::cerr << "gflow: " << e.what() << '\n';
        return 1;
    } catch (const NumericalBreakdown& e) {
        std::cerr << "gflow: numerical breakdown: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
