// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 3 9        selected criteria

#include "gflow/error.hpp"
#include "gflow/geodesic.hpp"
#include "gflow/optimality.hpp"
#include "gflow/oracles.hpp"
#include "gflow/pressure.hpp"
#include "gflow/projection.hpp"
#include "gflow/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace gflow;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPi2 = kPi * kPi;

// Torus translation (criteria 2, 6, 9).
constexpr double kTorusFloor = 2e-3;
// Disk rotation (criteria 3, 9); the coarse level keeps eps / (h^2 / dt) fixed.
constexpr double kDiskFloor = 4e-3;
constexpr double kDiskMarginalTol = 1e-4;
constexpr double kDiskStageTol = 1e-3;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

using Clock = std::chrono::steady_clock;

struct Timer {
    Clock::time_point t0 = Clock::now();
    double seconds() const { return std::chrono::duration<double>(Clock::now() - t0).count(); }
};

std::vector<int> lattice_shift(const GridDomain& d, int sx)
{
    std::vector<int> p(d.num_cells());
    for (int c = 0; c < d.num_cells(); ++c) {
        const auto [ix, iy] = d.lattice(c);
        p[c] = d.cell_at_lattice(ix + sx, iy);
    }
    return p;
}

std::vector<int> point_reflection(const GridDomain& d)
{
    std::vector<int> p(d.num_cells());
    for (int c = 0; c < d.num_cells(); ++c) p[c] = d.nearest_cell(d.wrap(-d.center(c)));
    return p;
}

// Weighted Pearson correlation of a and b over the cells in `keep`.
double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& w,
                   const std::vector<int>& keep, double* slope = nullptr)
{
    double sw = 0, sa = 0, sb = 0;
    for (int c : keep) {
        sw += w[c];
        sa += w[c] * a[c];
        sb += w[c] * b[c];
    }
    const double ma = sa / sw, mb = sb / sw;
    double caa = 0, cbb = 0, cab = 0;
    for (int c : keep) {
        caa += w[c] * (a[c] - ma) * (a[c] - ma);
        cbb += w[c] * (b[c] - mb) * (b[c] - mb);
        cab += w[c] * (a[c] - ma) * (b[c] - mb);
    }
    if (slope) *slope = cab / cbb;
    return cab / std::sqrt(caa * cbb);
}

// ---- shared solves -------------------------------------------------------

struct Solved {
    std::shared_ptr<const ChainFlow> flow;
    double seconds = 0.0;
};

std::map<std::string, Solved>& cache()
{
    static std::map<std::string, Solved> c;
    return c;
}

const Solved& torus_translation(int n, int K)
{
    const std::string key = fmt("torus %d %d", n, K);
    auto it = cache().find(key);
    if (it != cache().end()) return it->second;
    auto d = build_domain(DomainKind::Torus2D, n);
    SolverConfig cfg;
    cfg.epsilon_floor = kTorusFloor;
    Timer t;
    auto f = solve_geodesic(d, TimeGrid(1.0, K), MapEndpoint{lattice_shift(*d, n / 4)}, cfg);
    return cache()[key] = Solved{f, t.seconds()};
}

const Solved& disk_rotation(int n, int K, double floor)
{
    const std::string key = fmt("disk %d %d %g", n, K, floor);
    auto it = cache().find(key);
    if (it != cache().end()) return it->second;
    auto d = build_domain(DomainKind::Disk2D, n);
    SolverConfig cfg;
    cfg.epsilon_floor = floor;
    cfg.marginal_tol = kDiskMarginalTol;
    cfg.stage_tol = kDiskStageTol;
    Timer t;
    auto f = solve_geodesic(d, TimeGrid(kPi, K), MapEndpoint{point_reflection(*d)}, cfg);
    return cache()[key] = Solved{f, t.seconds()};
}

// ---- criteria ------------------------------------------------------------

Verdict oracle_equivalence()
{
    auto d = build_domain(DomainKind::Torus1D, 4);
    const TimeGrid time(1.0, 3);
    Verdict v{true, ""};
    const char* names[] = {"identity", "shift-1", "shift-2"};
    for (int s = 0; s < 3; ++s) {
        const MapEndpoint e{lattice_shift(*d, s)};
        const double lp = brute_force_geodesic(d, time, e).action;
        SolverConfig cfg;
        cfg.epsilon_floor = 1e-4;
        Timer t;
        auto f = solve_geodesic(d, time, e, cfg);
        const double secs = t.seconds();
        const double a = f->action();
        const bool ok = (lp < 1e-12 ? a <= 1e-3 : std::abs(a - lp) <= 0.02 * lp) && secs <= 10.0;
        v.pass = v.pass && ok;
        v.detail += fmt("%s %s lp=%.6g sinkhorn=%.6g (%.2fs); ", names[s], ok ? "ok" : "BAD", lp, a, secs);
    }
    return v;
}

Verdict translation_geodesic()
{
    const Solved& s = torus_translation(16, 8);
    const ChainFlow& f = *s.flow;
    const double a = f.action();
    const PressureField p = extract_pressure(f);
    const double linf = p.sup_norm();
    const auto crit = classical_optimality_criterion(PressureField::zero(f.domain(), f.time()), 1.0);
    const bool action_ok = std::abs(a - 0.03125) <= 0.05 * 0.03125;
    const bool p_ok = linf <= 5e-2;
    const bool c_ok = std::abs(crit.margin - kPi2) <= 0.05 * kPi2;
    const bool t_ok = s.seconds <= 120.0;
    return {action_ok && p_ok && c_ok && t_ok,
            fmt("action=%.6g (target 0.03125 +-5%%: %s; integer-step lattice optimum is 0.0625) "
                "pressure Linf=%.3g (%s) margin(p=0)=%.6g (%s) runtime=%.1fs (%s)",
                a, action_ok ? "ok" : "BAD", linf, p_ok ? "ok" : "BAD", crit.margin, c_ok ? "ok" : "BAD", s.seconds,
                t_ok ? "ok" : "BAD")};
}

Verdict disk_rotation_reproduction()
{
    const Solved& s = disk_rotation(32, 16, kDiskFloor);
    const ChainFlow& f = *s.flow;
    const GridDomain& d = *f.domain();
    const int K = f.time().K;

    const double a = f.action();
    const bool a_ok = std::abs(a - kPi / 4) <= 0.08 * kPi / 4;

    const PressureField p = extract_pressure(f);
    Eigen::VectorXd target(d.num_cells());
    std::vector<int> inner;
    for (int c = 0; c < d.num_cells(); ++c) {
        target[c] = 0.5 * d.center(c).squaredNorm();
        if (d.center(c).norm() <= 0.8) inner.push_back(c);
    }
    double worst_corr = 1.0, max_slope = 0.0;
    for (int k = 1; k < K; ++k) {
        double slope = 0.0;
        worst_corr = std::min(worst_corr, correlation(p.at(k), target, d.weights(), inner, &slope));
        max_slope = std::max(max_slope, slope);
    }
    const bool p_ok = worst_corr >= 0.95;

    const double conc = graph_concentration(f.joint_coupling(0, K / 2));
    auto torus = build_domain(DomainKind::Torus2D, 16);
    SolverConfig same;
    same.epsilon_floor = f.epsilon();
    auto tr = solve_geodesic(torus, TimeGrid(1.0, 8), MapEndpoint{lattice_shift(*torus, 4)}, same);
    const double conc_tr = graph_concentration(tr->joint_coupling(0, 4));
    const bool c_ok = conc <= 0.5 * conc_tr;

    // (*) on the least-squares quadratic a |x|^2 / 2 + b of the extracted field;
    // the raw grid Hessian is reported too (it is dominated by the boundary layer).
    const ScalarField quad{f.domain(), target};
    const double fitted = kPi * kPi * max_slope * hessian_sup(quad);
    const bool d_ok = std::abs(fitted - kPi2) <= 0.05 * kPi2;
    const auto raw = classical_optimality_criterion(p, kPi);

    const bool t_ok = s.seconds <= 900.0;
    return {a_ok && p_ok && c_ok && d_ok && t_ok,
            fmt("(a) action=%.6g vs pi/4=%.6g (%s) (b) min slice corr=%.5f (%s) (c) midtime concentration=%.4f vs "
                "translation %.4f at eps=%.3g (%s) (d) T^2 sup=%.5g vs pi^2 (%s; raw grid value %.4g) "
                "runtime=%.0fs (%s) converged=%d",
                a, kPi / 4, a_ok ? "ok" : "BAD", worst_corr, p_ok ? "ok" : "BAD", conc, conc_tr, f.epsilon(),
                c_ok ? "ok" : "BAD", fitted, d_ok ? "ok" : "BAD", raw.value, s.seconds, t_ok ? "ok" : "BAD",
                int(f.report().converged))};
}

Verdict connectivity_bound()
{
    auto d = build_domain(DomainKind::Torus2D, 8);
    SolverConfig cfg;
    cfg.epsilon_floor = 1e-3;
    cfg.marginal_tol = 1e-5;
    auto f = solve_geodesic(d, TimeGrid(1.0, 4), MapEndpoint{point_reflection(*d)}, cfg);
    const double bound = std::sqrt(2.0) * 1.05;
    return {f->action() <= bound && f->report().converged,
            fmt("torus-2d n=8 K=4 x->-x: action=%.6g bound=%.6g converged=%d", f->action(), bound,
                int(f->report().converged))};
}

Verdict certification_round_trip()
{
    auto disk = build_domain(DomainKind::Disk2D, 32);
    const TimeGrid time(kPi, 16);
    auto rot = generalized_rotation_flow(disk, time, 64, 4);
    const TimeField half = TimeField::from_function(disk, time, [](double, const Point& x) { return 0.5 * x.squaredNorm(); });
    const Certificate with_p = certify(*rot, half, CheckOptions{});
    const Certificate without = certify(*rot, TimeField::zero(disk, time), CheckOptions{});

    auto torus = build_domain(DomainKind::Torus2D, 16);
    const TimeGrid t8(1.0, 8);
    auto tr = translation_flow(torus, Point(0.25, 0.0), t8);
    const Certificate straight = certify(*tr, TimeField::zero(torus, t8), CheckOptions{});

    const bool ok = with_p.certified && !without.certified && straight.certified;
    return {ok, fmt("rotation q=|x|^2/2: %s (max violation %.3g, fraction %.4f); rotation q=0: %s (fraction %.4f); "
                    "translation q=0: %s",
                    with_p.certified ? "certified" : "rejected", with_p.condition_i.max_violation,
                    with_p.condition_i.violating_fraction, without.certified ? "certified" : "rejected",
                    without.condition_i.violating_fraction, straight.certified ? "certified" : "rejected")};
}

Verdict null_lagrangian()
{
    const ChainFlow& f = *torus_translation(16, 8).flow;
    const GridDomain& d = *f.domain();
    const double tol = 10 * SolverConfig{}.marginal_tol;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        double integral = 0.0;
        for (int k = 0; k <= f.time().K; ++k) {
            Eigen::VectorXd q(d.num_cells());
            for (int c = 0; c < q.size(); ++c) q[c] = u(rng);
            q.array() -= d.weights().dot(q);
            integral += f.time().dt() * f.slice_marginal(k).dot(q);
        }
        worst = std::max(worst, std::abs(integral));
    }
    return {worst <= tol, fmt("max |integral| over 20 potentials = %.3g (limit %.3g)", worst, tol)};
}

// 1/2 d(g, g0)^2 + 1/2 d(g1, g)^2 averaged over a plan (x -> j with mass plan(x, j)).
double plan_midpoint_objective(const GridDomain& d, const Eigen::MatrixXd& plan, const std::vector<int>& g1)
{
    double s = 0.0;
    for (int x = 0; x < d.num_cells(); ++x)
        for (int j = 0; j < d.num_cells(); ++j)
            if (plan(x, j) > 0)
                s += plan(x, j) * 0.5 * (d.sq_dist_cells(j, x) + d.sq_dist_cells(g1[x], j));
    return s;
}

Verdict projection_properties()
{
    std::string detail;
    bool ok = true;

    auto t2 = build_domain(DomainKind::Torus2D, 6);
    std::mt19937_64 rng(2024);
    int idempotent = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> p(t2->num_cells());
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), rng);
        const ProjectionResult r = project_to_S(t2, GridMap::from_permutation(t2, p));
        if (r.is_map() && *r.permutation == p && r.distance2 == 0.0) ++idempotent;
    }
    ok = ok && idempotent == 50;
    detail += fmt("idempotent on %d/50 bijections; ", idempotent);

    auto t1 = build_domain(DomainKind::Torus1D, 4);
    std::vector<int> base{0, 1, 2, 3};
    int matched = 0, total = 0;
    double worst = 0.0;
    std::vector<int> g1 = base;
    do {
        std::vector<int> g = base;
        double best = std::numeric_limits<double>::infinity();
        do {
            double s = 0.0;
            for (int x = 0; x < 4; ++x)
                s += t1->weight(x) * 0.5 * (t1->sq_dist_cells(g[x], x) + t1->sq_dist_cells(g1[x], g[x]));
            best = std::min(best, s);
        } while (std::next_permutation(g.begin(), g.end()));
        const ProjectionResult r = midpoint(t1, GridMap::identity(t1), GridMap::from_permutation(t1, g1));
        const double got = plan_midpoint_objective(*t1, r.plan.matrix, g1);
        worst = std::max(worst, std::abs(got - best));
        matched += std::abs(got - best) <= 1e-14;
        ++total;
    } while (std::next_permutation(g1.begin(), g1.end()));
    ok = ok && matched == total;
    detail += fmt("midpoint matches exhaustive search for %d/%d endpoints (max diff %.2g); ", matched, total, worst);

    auto disk = build_domain(DomainKind::Disk2D, 8);
    const ProjectionResult anti =
        midpoint(disk, GridMap::identity(disk), GridMap::from_permutation(disk, point_reflection(*disk)));
    ok = ok && anti.degenerate && !anti.is_map() && !anti.warning.empty();
    detail += fmt("disk antipodal midpoint degenerate=%d (%s)", int(anti.degenerate), anti.warning.c_str());
    return {ok, detail};
}

Verdict metric_properties()
{
    auto d = build_domain(DomainKind::Torus1D, 6);
    const TimeGrid time(1.0, 4);
    std::vector<TransportPlan> plans;
    plans.push_back(TransportPlan::diagonal(d->weights()));
    TransportPlan mixed = plan_from_map(*d, lattice_shift(*d, 1));
    mixed.matrix = 0.5 * (mixed.matrix + plan_from_map(*d, lattice_shift(*d, -1)).matrix);
    plans.push_back(mixed);
    plans.push_back(plan_from_map(*d, lattice_shift(*d, 2)));

    double dist[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            dist[i][j] = i == j ? 0.0 : std::sqrt(solve_el_geodesic(d, time, plans[i], plans[j], SolverConfig{})->action());
    bool ok = true;
    double worst_sym = 0.0, worst_tri = -1e9;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            const double rel = std::abs(dist[i][j] - dist[j][i]) / std::max(dist[i][j], dist[j][i]);
            worst_sym = std::max(worst_sym, rel);
            ok = ok && rel <= 0.02;
        }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) {
                if (a == b || b == c || a == c) continue;
                const double slack = dist[a][c] - (dist[a][b] + dist[b][c]);
                worst_tri = std::max(worst_tri, slack / (dist[a][b] + dist[b][c]));
                ok = ok && dist[a][c] <= 1.02 * (dist[a][b] + dist[b][c]);
            }
    return {ok, fmt("d(a,b)=%.5g d(b,c)=%.5g d(a,c)=%.5g; worst asymmetry %.3g%%; worst triangle excess %.3g%%",
                    dist[0][1], dist[1][2], dist[0][2], 100 * worst_sym, 100 * worst_tri)};
}

double residual_with_extracted_pressure(const ChainFlow& f)
{
    const auto fields = random_test_fields(f.domain(), f.time(), 10, 99);
    return weak_euler_residual(f, extract_pressure(f), fields);
}

// Both levels at roundoff count as converged.
constexpr double kRoundoff = 1e-12;

Verdict weak_residual_refinement()
{
    const double t_coarse = residual_with_extracted_pressure(*torus_translation(16, 8).flow);
    const double t_fine = residual_with_extracted_pressure(*torus_translation(32, 16).flow);
    const bool t_ok = t_fine * 1.5 <= t_coarse || std::max(t_coarse, t_fine) <= kRoundoff;

    const double d_coarse = residual_with_extracted_pressure(*disk_rotation(16, 8, 2 * kDiskFloor).flow);
    const double d_fine = residual_with_extracted_pressure(*disk_rotation(32, 16, kDiskFloor).flow);
    const bool d_ok = d_fine * 1.5 <= d_coarse;
    // reported only: coarse level at the fine epsilon instead of the fine blur ratio
    const double d_same = residual_with_extracted_pressure(*disk_rotation(16, 8, kDiskFloor).flow);
    return {t_ok && d_ok, fmt("translation (16,8)->(32,16): %.3g -> %.3g (%s); rotation (16,8)->(32,16): %.4g -> %.4g, "
                              "factor %.3g (%s); coarse at eps=%.3g: %.4g, factor %.3g",
                              t_coarse, t_fine, t_ok ? "ok" : "BAD", d_coarse, d_fine, d_coarse / d_fine,
                              d_ok ? "ok" : "BAD", kDiskFloor, d_same, d_same / d_fine)};
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Verdict determinism()
{
    const auto root = std::filesystem::temp_directory_path() / "gflow_acceptance";
    std::vector<RunConfig> configs(2);
    configs[0].domain = "torus-2d";
    configs[0].n = 4;
    configs[0].K = 4;
    configs[0].scenario = "random";
    configs[0].seed = 7;
    configs[1].domain = "disk-2d";
    configs[1].n = 12;
    configs[1].K = 4;
    configs[1].scenario = "rotation-generalized";
    configs[1].theta_samples = 16;
    configs[1].subsamples = 2;
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        std::string bytes[2];
        for (int rep = 0; rep < 2; ++rep) {
            RunConfig c = configs[i];
            c.out = (root / fmt("run%zu_%d", i, rep)).string();
            run(Command::Certify, c);
            bytes[rep] = slurp(std::filesystem::path(c.out) / "summary.json");
        }
        const bool same = !bytes[0].empty() && bytes[0] == bytes[1];
        ok = ok && same;
        detail += fmt("%s: %zu bytes, %s; ", configs[i].scenario.c_str(), bytes[0].size(), same ? "identical" : "DIFFER");
    }
    return {ok, detail};
}

}  // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"oracle equivalence", oracle_equivalence},
        {"translation geodesic", translation_geodesic},
        {"disk rotation", disk_rotation_reproduction},
        {"connectivity bound", connectivity_bound},
        {"certification round-trip", certification_round_trip},
        {"null-Lagrangian", null_lagrangian},
        {"projection", projection_properties},
        {"metric properties", metric_properties},
        {"weak Euler refinement", weak_residual_refinement},
        {"determinism", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Timer t;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << "AC" << id << ' ' << (v.pass ? "PASS" : "FAIL") << ' ' << criteria[i].first << ": " << v.detail
                  << fmt(" [%.1fs]", t.seconds()) << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
