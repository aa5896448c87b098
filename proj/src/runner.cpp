#include "gflow/runner.hpp"

#include "gflow/error.hpp"
#include "gflow/oracles.hpp"
#include "gflow/pressure.hpp"
#include "gflow/projection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace gflow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Command c)
{
    switch (c) {
    case Command::Solve: return "solve";
    case Command::Project: return "project";
    case Command::Midpoint: return "midpoint";
    case Command::Pressure: return "pressure";
    case Command::Certify: return "certify";
    }
    return "unknown";
}

Command parse_command(const std::string& name)
{
    for (Command c : {Command::Solve, Command::Project, Command::Midpoint, Command::Pressure, Command::Certify})
        if (to_string(c) == name) return c;
    throw ConfigError("unknown command '" + name + "'");
}

namespace {

const std::vector<std::string> kScenarios{"identity",     "translation",       "shift",
                                          "antipodal",    "permutation",       "random",
                                          "rotation-classical", "rotation-generalized", "rotation-split"};
const std::vector<std::string> kMaps{"identity", "halve", "antipodal", "shift", "random"};

bool one_of(const std::string& s, const std::vector<std::string>& options)
{
    return std::find(options.begin(), options.end(), s) != options.end();
}

template <class T>
void read(const json& j, T& out, const std::string& key)
{
    try {
        out = j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

void merge_solver(SolverConfig& s, const json& j)
{
    if (!j.is_object()) throw ConfigError("config key 'solver' must be an object");
    for (const auto& [key, v] : j.items()) {
        const std::string k = "solver." + key;
        if (key == "epsilon_start" || key == "epsilon_floor") {
            auto& target = key == "epsilon_start" ? s.epsilon_start : s.epsilon_floor;
            if (v.is_null())
                target.reset();
            else {
                double x = 0.0;
                read(v, x, k);
                target = x;
            }
        } else if (key == "epsilon_factor")
            read(v, s.epsilon_factor, k);
        else if (key == "marginal_tol")
            read(v, s.marginal_tol, k);
        else if (key == "stage_tol")
            read(v, s.stage_tol, k);
        else if (key == "max_sweeps")
            read(v, s.max_sweeps, k);
        else if (key == "check_every")
            read(v, s.check_every, k);
        else if (key == "dense_cap")
            read(v, s.dense_cap, k);
        else if (key == "seed")
            read(v, s.seed, k);
        else if (key == "stop_on_underflow")
            read(v, s.stop_on_underflow, k);
        else if (key == "relaxation")
            read(v, s.relaxation, k);
        else if (key == "backend") {
            std::string b;
            read(v, b, k);
            try {
                s.backend = parse_kernel_backend(b);
            } catch (const InvalidArgument& e) {
                throw ConfigError(e.what());
            }
        } else
            throw ConfigError("unknown config key '" + k + "'");
    }
}

void merge_check(CheckOptions& c, const json& j)
{
    if (!j.is_object()) throw ConfigError("config key 'check' must be an object");
    for (const auto& [key, v] : j.items()) {
        const std::string k = "check." + key;
        if (key == "relative_tol")
            read(v, c.relative_tol, k);
        else if (key == "samples")
            read(v, c.samples, k);
        else if (key == "seed")
            read(v, c.seed, k);
        else if (key == "support_floor")
            read(v, c.support_floor, k);
        else if (key == "max_violation_fraction")
            read(v, c.max_violation_fraction, k);
        else
            throw ConfigError("unknown config key '" + k + "'");
    }
}

}  // namespace

void RunConfig::merge(const json& j)
{
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "scenario")
            read(v, scenario, key);
        else if (key == "domain")
            read(v, domain, key);
        else if (key == "n")
            read(v, n, key);
        else if (key == "K")
            read(v, K, key);
        else if (key == "T") {
            if (v.is_null())
                T.reset();
            else {
                double x = 0.0;
                read(v, x, key);
                T = x;
            }
        } else if (key == "velocity")
            read(v, velocity, key);
        else if (key == "shift")
            read(v, shift, key);
        else if (key == "permutation")
            read(v, permutation, key);
        else if (key == "oracle")
            read(v, oracle, key);
        else if (key == "brute_force")
            read(v, brute_force, key);
        else if (key == "theta_samples")
            read(v, theta_samples, key);
        else if (key == "subsamples")
            read(v, subsamples, key);
        else if (key == "h")
            read(v, h, key);
        else if (key == "q")
            read(v, q, key);
        else if (key == "test_fields")
            read(v, test_fields, key);
        else if (key == "seed")
            read(v, seed, key);
        else if (key == "expect_certified")
            read(v, expect_certified, key);
        else if (key == "write_flow")
            read(v, write_flow, key);
        else if (key == "out")
            read(v, out, key);
        else if (key == "solver")
            merge_solver(solver, v);
        else if (key == "check")
            merge_check(check, v);
        else if (key == "schema_version") {
            int s = 0;
            read(v, s, key);
            if (s != kSummarySchemaVersion) throw ConfigError("unsupported schema_version " + std::to_string(s));
        } else
            throw ConfigError("unknown config key '" + key + "'");
    }
}

RunConfig RunConfig::from_json(const json& j)
{
    RunConfig c;
    c.merge(j);
    return c;
}

json RunConfig::to_json() const
{
    json solver_json = solver.to_json();
    return {{"scenario", scenario},
            {"domain", domain},
            {"n", n},
            {"K", K},
            {"T", horizon()},
            {"velocity", velocity},
            {"shift", shift},
            {"permutation", permutation},
            {"oracle", oracle},
            {"brute_force", brute_force},
            {"theta_samples", theta_samples},
            {"subsamples", subsamples},
            {"h", h},
            {"q", q},
            {"test_fields", test_fields},
            {"seed", seed},
            {"expect_certified", expect_certified},
            {"write_flow", write_flow},
            {"solver", solver_json},
            {"check",
             {{"relative_tol", check.relative_tol},
              {"samples", check.samples},
              {"seed", check.seed},
              {"support_floor", check.support_floor},
              {"max_violation_fraction", check.max_violation_fraction}}}};
}

bool RunConfig::rotation_oracle() const { return scenario.rfind("rotation-", 0) == 0; }

double RunConfig::horizon() const
{
    if (T) return *T;
    return rotation_oracle() ? std::numbers::pi : 1.0;
}

void RunConfig::validate() const
{
    DomainKind kind{};
    try {
        kind = parse_domain_kind(domain);
        solver.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (n < 2) throw ConfigError("n must be >= 2");
    if (K < 2) throw ConfigError("K must be >= 2");
    if (!(horizon() > 0.0)) throw ConfigError("T must be positive");
    if (!one_of(scenario, kScenarios)) throw ConfigError("unknown scenario '" + scenario + "'");
    if (!one_of(h, kMaps)) throw ConfigError("unknown map h '" + h + "'");
    if (q != "pressure" && q != "zero") throw ConfigError("q must be 'pressure' or 'zero'");
    if (rotation_oracle() && kind != DomainKind::Disk2D) throw ConfigError(scenario + " needs the disk-2d domain");
    if ((scenario == "translation" || scenario == "shift") && kind == DomainKind::Disk2D)
        throw ConfigError(scenario + " needs a torus domain");
    if (oracle && scenario != "identity" && scenario != "translation")
        throw ConfigError("oracle flows exist for identity and translation only; rotation scenarios are oracles already");
    if (oracle && kind == DomainKind::Disk2D) throw ConfigError("the translation oracle needs a torus");
    if (velocity.empty() || velocity.size() > 2) throw ConfigError("velocity needs one or two components");
    if (theta_samples < kMinThetaSamples) throw ConfigError("theta_samples must be >= " + std::to_string(kMinThetaSamples));
    if (subsamples < 1) throw ConfigError("subsamples must be >= 1");
    if (test_fields < 0) throw ConfigError("test_fields must be >= 0");
    if (!(check.relative_tol >= 0.0)) throw ConfigError("check.relative_tol must be nonnegative");
    if (check.samples < 1) throw ConfigError("check.samples must be >= 1");
    if (!(check.support_floor >= 0.0 && check.support_floor < 1.0)) throw ConfigError("check.support_floor must lie in [0, 1)");
    if (!(check.max_violation_fraction >= 0.0 && check.max_violation_fraction <= 1.0))
        throw ConfigError("check.max_violation_fraction must lie in [0, 1]");
    if (out.empty()) throw ConfigError("out must not be empty");
}

json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

namespace {

/// Writes to log.txt and optionally to a second stream.
class Log {
public:
    Log(const fs::path& path, std::ostream* echo) : file_(path), echo_(echo) {}

    template <class T>
    Log& operator<<(const T& v)
    {
        file_ << v;
        if (echo_) *echo_ << v;
        return *this;
    }
    void flush()
    {
        file_.flush();
        if (echo_) echo_->flush();
    }

private:
    std::ofstream file_;
    std::ostream* echo_;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<int> scenario_permutation(const RunConfig& cfg, const GridDomain& d)
{
    const int n = d.num_cells();
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    const std::string& s = cfg.scenario;
    if (s == "identity") return p;
    if (s == "shift") {
        for (int c = 0; c < n; ++c) {
            const auto [ix, iy] = d.lattice(c);
            p[c] = d.cell_at_lattice(ix + cfg.shift, iy);
        }
        return p;
    }
    if (s == "translation") {
        const Point v(cfg.velocity[0], cfg.velocity.size() > 1 ? cfg.velocity[1] : 0.0);
        const Point step = d.dim() == 1 ? Point(v.x(), 0.0) : v;
        for (int c = 0; c < n; ++c) p[c] = d.nearest_cell(d.wrap(d.center(c) + cfg.horizon() * step));
        return p;
    }
    if (s == "antipodal" || cfg.rotation_oracle()) {
        for (int c = 0; c < n; ++c) p[c] = d.nearest_cell(d.wrap(-d.center(c)));
        return p;
    }
    if (s == "permutation") {
        if (static_cast<int>(cfg.permutation.size()) != n)
            throw ConfigError("permutation must list one target per cell (" + std::to_string(n) + ")");
        return cfg.permutation;
    }
    if (s == "random") {
        std::mt19937_64 rng(cfg.seed);
        std::shuffle(p.begin(), p.end(), rng);
        return p;
    }
    throw ConfigError("scenario '" + s + "' has no endpoint map");
}

void check_bijection(const std::vector<int>& p, int n)
{
    std::vector<char> seen(n, 0);
    for (int x : p) {
        if (x < 0 || x >= n || seen[x]) throw ConfigError("endpoint map is not a bijection of the cells");
        seen[x] = 1;
    }
}

struct Built {
    std::shared_ptr<const GeneralizedFlow> flow;
    std::shared_ptr<const ChainFlow> chain;
    std::shared_ptr<const DenseFlow> minus;  // second half of the rotation split
    std::vector<int> endpoint;
    json info;
};

Built build_flow(const RunConfig& cfg, const DomainPtr& d, const TimeGrid& time, Log& log)
{
    Built b;
    b.endpoint = scenario_permutation(cfg, *d);
    check_bijection(b.endpoint, d->num_cells());
    const auto t0 = Clock::now();
    if (cfg.scenario == "rotation-classical") {
        b.flow = classical_rotation_flow(d, time);
        b.info["source"] = "oracle";
    } else if (cfg.scenario == "rotation-generalized") {
        b.flow = generalized_rotation_flow(d, time, cfg.theta_samples, cfg.subsamples);
        b.info["source"] = "oracle";
    } else if (cfg.scenario == "rotation-split") {
        auto [plus, minus] = split_rotation_flows(d, time, cfg.theta_samples, cfg.subsamples);
        b.flow = plus;
        b.minus = minus;
        b.info["source"] = "oracle";
    } else if (cfg.oracle) {
        const Point v = cfg.scenario == "identity"
                            ? Point(0.0, 0.0)
                            : Point(cfg.velocity[0], cfg.velocity.size() > 1 ? cfg.velocity[1] : 0.0);
        b.flow = translation_flow(d, v, time);
        b.info["source"] = "oracle";
    } else if (cfg.brute_force) {
        const BruteForceResult r = brute_force_geodesic(d, time, MapEndpoint{b.endpoint}, cfg.solver.dense_cap);
        b.flow = r.flow;
        b.info["source"] = "linear-program";
        b.info["tuples"] = r.tuples;
    } else {
        SolverConfig sc = cfg.solver;
        sc.progress = [&log](int sweep, double eps, double residual) {
            log << "sweep " << sweep << " epsilon " << eps << " residual " << residual << '\n';
        };
        b.chain = solve_geodesic(d, time, MapEndpoint{b.endpoint}, sc);
        b.flow = b.chain;
        b.info["source"] = "sinkhorn";
    }
    log << "flow built in " << seconds_since(t0) << " s\n";
    return b;
}

json report_json(const SolveReport& r)
{
    return {{"converged", r.converged},
            {"sweeps", r.sweeps},
            {"residual", r.residual()},
            {"start_residual", r.start_residual},
            {"slice_residual", r.slice_residual},
            {"end_residual", r.end_residual},
            {"epsilon_trace", r.epsilon_trace},
            {"stage_sweeps", r.stage_sweeps},
            {"note", r.note}};
}

json flow_summary(const Built& b, const GridDomain& d, const TimeGrid& time)
{
    const GeneralizedFlow& f = *b.flow;
    json j = b.info;
    j["kind"] = f.kind();
    j["action"] = f.action();
    j["delta_bar"] = std::sqrt(f.action());
    j["step_costs"] = f.step_costs();
    j["marginal_defect"] = slice_marginal_defect(f);
    const TransportPlan end = f.joint_coupling(0, time.K);
    j["endpoint_defect"] = (end.matrix - plan_from_map(d, b.endpoint).matrix).cwiseAbs().sum();
    j["midtime_graph_concentration"] = graph_concentration(f.joint_coupling(0, time.K / 2));
    if (b.chain) {
        j["epsilon"] = b.chain->epsilon();
        j["solver"] = report_json(b.chain->report());
    }
    if (const auto* dense = dynamic_cast<const DenseFlow*>(&f)) j["paths"] = dense->num_paths();
    if (b.minus) {
        j["split_minus"] = {{"action", b.minus->action()}, {"marginal_defect", slice_marginal_defect(*b.minus)}};
    }
    return j;
}

void write_marginals_csv(const GeneralizedFlow& f, const fs::path& path)
{
    std::ofstream out(path);
    const GridDomain& d = *f.domain();
    out << std::setprecision(17) << "slice,t,cell,x,y,weight,marginal\n";
    for (int k = 0; k <= f.time().K; ++k) {
        const Eigen::VectorXd m = f.slice_marginal(k);
        for (int c = 0; c < d.num_cells(); ++c)
            out << k << ',' << f.time().time(k) << ',' << c << ',' << d.center(c).x() << ',' << d.center(c).y() << ','
                << d.weight(c) << ',' << m[c] << '\n';
    }
}

struct PressureOutcome {
    PressureField p;
    std::string source;
};

PressureOutcome pressure_for(const Built& b, const RunConfig& cfg, const DomainPtr& d, const TimeGrid& time)
{
    if (b.chain) return {extract_pressure(*b.chain), "extracted"};
    if (cfg.rotation_oracle())
        return {PressureField::from_function(d, time, [](double, const Point& x) { return 0.5 * x.squaredNorm(); })
                    .normalized(),
                "oracle"};
    return {PressureField::zero(d, time), "zero"};
}

json pressure_summary(const PressureOutcome& po, const GeneralizedFlow& f, const RunConfig& cfg)
{
    const auto crit = classical_optimality_criterion(po.p, f.time().T);
    json j = {{"source", po.source},
              {"sup_norm", po.p.sup_norm()},
              {"criterion",
               {{"satisfied", crit.satisfied},
                {"margin", crit.margin},
                {"value", crit.value},
                {"hessian_sup", crit.hessian_sup}}}};
    const auto fields = random_test_fields(f.domain(), f.time(), cfg.test_fields, cfg.seed);
    j["test_fields"] = cfg.test_fields;
    j["weak_euler_residual"] = fields.empty() ? 0.0 : weak_euler_residual(f, po.p, fields);
    const VelocityMoments vm = velocity_moments(f);
    j["midtime_trace_gap"] = vm.trace_gap(f.time().K / 2);
    j["slices"] = po.p.to_json().at("slices");
    return j;
}

GridMap projection_input(const RunConfig& cfg, const DomainPtr& d)
{
    GridMap h = GridMap::identity(d);
    if (cfg.h == "identity") return h;
    if (cfg.h == "halve") {
        for (auto& x : h.image) x /= 2.0;
        return h;
    }
    if (cfg.h == "antipodal") {
        for (auto& x : h.image) x = d->wrap(-x);
        return h;
    }
    std::vector<int> p(d->num_cells());
    std::iota(p.begin(), p.end(), 0);
    if (cfg.h == "shift") {
        for (int c = 0; c < d->num_cells(); ++c) {
            const auto [ix, iy] = d->lattice(c);
            p[c] = d->cell_at_lattice(ix + cfg.shift, iy);
        }
        check_bijection(p, d->num_cells());
    } else {
        std::mt19937_64 rng(cfg.seed);
        std::shuffle(p.begin(), p.end(), rng);
    }
    return GridMap::from_permutation(d, p);
}

json projection_summary(const ProjectionResult& r)
{
    json j = {{"is_map", r.is_map()},
              {"distance2", r.distance2},
              {"degenerate", r.degenerate},
              {"warning", r.warning},
              {"graph_concentration", graph_concentration(r.plan)}};
    if (r.permutation) j["permutation"] = *r.permutation;
    return j;
}

int run_projection(Command command, const RunConfig& cfg, const DomainPtr& d, json& summary, const fs::path& dir,
                   Log& log)
{
    ProjectionResult r;
    if (command == Command::Project) {
        r = project_to_S(d, projection_input(cfg, d));
    } else {
        auto p = scenario_permutation(cfg, *d);
        check_bijection(p, d->num_cells());
        const GridMap g0 = GridMap::identity(d), g1 = GridMap::from_permutation(d, p);
        r = midpoint(d, g0, g1);
        if (r.is_map()) summary["midpoint_objective"] = midpoint_objective(*d, *r.permutation, g0, g1);
    }
    summary["projection"] = projection_summary(r);
    std::ofstream csv(dir / "fields" / (command == Command::Project ? "projection.csv" : "midpoint.csv"));
    write_projection_csv(csv, *d, r);
    log << "projection distance2 " << r.distance2 << (r.degenerate ? " (degenerate: " + r.warning + ")" : "") << '\n';
    return 0;
}

}  // namespace

RunResult run(Command command, const RunConfig& config) { return run(command, config, nullptr); }

RunResult run(Command command, const RunConfig& cfg, std::ostream* echo)
{
    cfg.validate();
    const fs::path dir(cfg.out);
    std::error_code ec;
    fs::create_directories(dir / "fields", ec);
    if (ec) throw ConfigError("cannot create " + (dir / "fields").string() + ": " + ec.message());
    Log log(dir / "log.txt", echo);
    log << std::setprecision(10) << "command " << to_string(command) << '\n' << "config " << cfg.to_json().dump() << '\n';

    const auto t0 = Clock::now();
    DomainPtr d;
    try {
        d = build_domain(parse_domain_kind(cfg.domain), cfg.n);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    const TimeGrid time(cfg.horizon(), cfg.K);

    RunResult result;
    json& summary = result.summary;
    summary["schema_version"] = kSummarySchemaVersion;
    summary["command"] = to_string(command);
    summary["config"] = cfg.to_json();
    summary["domain"] = {{"kind", to_string(d->kind())}, {"n", d->n()}, {"cells", d->num_cells()}};

    try {
        if (command == Command::Project || command == Command::Midpoint) {
            result.exit_code = run_projection(command, cfg, d, summary, dir, log);
        } else {
            Built b = build_flow(cfg, d, time, log);
            summary["flow"] = flow_summary(b, *d, time);
            log << "action " << b.flow->action() << '\n';
            write_marginals_csv(*b.flow, dir / "fields" / "marginals.csv");
            if (cfg.write_flow) write_json_file(dir / "flow.json", b.flow->to_json());
            if (b.chain && !b.chain->report().converged) {
                log << "solver did not converge: " << b.chain->report().note << '\n';
                result.exit_code = 2;
            }
            if (command == Command::Pressure || command == Command::Certify) {
                const auto t1 = Clock::now();
                const PressureOutcome po = pressure_for(b, cfg, d, time);
                summary["pressure"] = pressure_summary(po, *b.flow, cfg);
                write_pressure_csv(po.p, (dir / "fields" / "pressure.csv").string());
                log << "pressure (" << po.source << ") in " << seconds_since(t1) << " s\n";
                if (command == Command::Certify) {
                    const auto t2 = Clock::now();
                    TimeField q = cfg.q == "zero" ? TimeField::zero(d, time) : TimeField::from_pressure(po.p);
                    if (cfg.q == "pressure" && cfg.rotation_oracle())
                        q = TimeField::from_function(d, time, [](double, const Point& x) { return 0.5 * x.squaredNorm(); });
                    const Certificate c = certify(*b.flow, q, cfg.check);
                    summary["certificate"] = c.to_json();
                    write_json_file(dir / "certificate.json", c.to_json());
                    log << "certified " << (c.certified ? "true" : "false") << " in " << seconds_since(t2) << " s\n";
                    if (cfg.expect_certified && !c.certified && result.exit_code == 0) result.exit_code = 3;
                }
            }
        }
    } catch (const InvalidArgument& e) {
        log << "error: " << e.what() << '\n';
        log.flush();
        throw ConfigError(e.what());
    } catch (const SizeLimitExceeded& e) {
        log << "error: " << e.what() << '\n';
        log.flush();
        throw ConfigError(e.what());
    }
    summary["exit_code"] = result.exit_code;
    write_json_file(dir / "summary.json", summary);
    log << "total " << seconds_since(t0) << " s, exit " << result.exit_code << '\n';
    log.flush();
    return result;
}

namespace {

double rel_diff(double a, double b)
{
    const double s = std::max(std::abs(a), std::abs(b));
    return s > 0 ? std::abs(a - b) / s : 0.0;
}

const json& need(const json& j, const std::string& key, const char* which)
{
    if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string(which) + " summary lacks '" + key + "'");
    return j.at(key);
}

}  // namespace

json compare_summaries(const json& a, const json& b)
{
    const int va = need(a, "schema_version", "first").get<int>(), vb = need(b, "schema_version", "second").get<int>();
    if (va != vb || va != kSummarySchemaVersion)
        throw ConfigError("schema mismatch: " + std::to_string(va) + " vs " + std::to_string(vb));
    json out = {{"schema_version", kSummarySchemaVersion}};
    if (a.contains("flow") != b.contains("flow")) throw ConfigError("schema mismatch: only one summary has a flow");
    if (a.contains("flow")) {
        const double x = need(a["flow"], "action", "first").get<double>();
        const double y = need(b["flow"], "action", "second").get<double>();
        out["action"] = {{"a", x}, {"b", y}, {"abs_diff", std::abs(x - y)}, {"rel_diff", rel_diff(x, y)}};
        const double da = a["flow"].value("delta_bar", 0.0), db = b["flow"].value("delta_bar", 0.0);
        out["delta_bar"] = {{"a", da}, {"b", db}, {"rel_diff", rel_diff(da, db)}};
    }
    if (a.contains("pressure") && b.contains("pressure")) {
        const json& pa = a["pressure"]["slices"];
        const json& pb = b["pressure"]["slices"];
        if (pa.size() != pb.size()) throw ConfigError("schema mismatch: pressure slice counts differ");
        double num = 0.0, den = 0.0, linf = 0.0;
        for (std::size_t k = 0; k < pa.size(); ++k) {
            if (pa[k].size() != pb[k].size()) throw ConfigError("schema mismatch: pressure cell counts differ");
            // slices are stored gauge-normalized; remove any residual constant anyway
            double ma = 0.0, mb = 0.0;
            for (std::size_t c = 0; c < pa[k].size(); ++c) {
                ma += pa[k][c].get<double>();
                mb += pb[k][c].get<double>();
            }
            ma /= pa[k].size();
            mb /= pb[k].size();
            for (std::size_t c = 0; c < pa[k].size(); ++c) {
                const double x = pa[k][c].get<double>() - ma, y = pb[k][c].get<double>() - mb;
                num += (x - y) * (x - y);
                den += y * y;
                linf = std::max(linf, std::abs(x - y));
            }
        }
        out["pressure"] = {{"rel_l2_diff", den > 0 ? std::sqrt(num / den) : std::sqrt(num)}, {"linf_diff", linf}};
    }
    if (a.contains("certificate") && b.contains("certificate")) {
        const bool ca = a["certificate"].value("certified", false), cb = b["certificate"].value("certified", false);
        out["certificate"] = {{"a", ca}, {"b", cb}, {"agree", ca == cb}};
    }
    return out;
}

}  // namespace gflow
