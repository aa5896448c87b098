#include "gflow/pressure.hpp"

#include "gflow/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>

namespace gflow {

const Eigen::VectorXd& PressureField::at(int k) const
{
    if (k < first_slice() || k > last_slice())
        throw InvalidArgument("pressure is defined on slices 1..K-1, got " + std::to_string(k));
    return slices[k - 1];
}

ScalarField PressureField::slice(int k) const { return ScalarField{domain, at(k)}; }

PressureField PressureField::normalized() const
{
    PressureField r = *this;
    for (auto& s : r.slices) s.array() -= domain->weights().dot(s);
    r.mean_zero = true;
    return r;
}

double PressureField::sup_norm() const
{
    double m = 0.0;
    for (const auto& s : slices) m = std::max(m, s.cwiseAbs().maxCoeff());
    return m;
}

PressureField PressureField::zero(DomainPtr domain, TimeGrid time)
{
    PressureField p;
    p.slices.assign(time.K - 1, Eigen::VectorXd::Zero(domain->num_cells()));
    p.domain = std::move(domain);
    p.time = time;
    p.mean_zero = true;
    return p;
}

PressureField PressureField::from_function(DomainPtr domain, TimeGrid time,
                                           const std::function<double(double, const Point&)>& fn)
{
    PressureField p;
    p.domain = domain;
    p.time = time;
    for (int k = 1; k < time.K; ++k) {
        Eigen::VectorXd v(domain->num_cells());
        for (int c = 0; c < domain->num_cells(); ++c) v[c] = fn(time.time(k), domain->center(c));
        p.slices.push_back(std::move(v));
    }
    return p;
}

nlohmann::json PressureField::to_json() const
{
    nlohmann::json s = nlohmann::json::array();
    for (const auto& v : slices) s.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    return {{"K", time.K}, {"T", time.T}, {"mean_zero", mean_zero}, {"slices", s}};
}

PressureField extract_pressure(const ChainFlow& flow)
{
    const double limit = kPressureMaxRelativeEpsilon * median_step_cost(*flow.domain(), flow.time().dt());
    if (flow.epsilon() > limit)
        throw InvalidArgument("extract_pressure: epsilon " + std::to_string(flow.epsilon()) +
                              " is above the usable limit " + std::to_string(limit));
    PressureField p;
    p.domain = flow.domain();
    p.time = flow.time();
    const double dt = flow.time().dt();
    for (int k = 1; k < flow.time().K; ++k) p.slices.push_back(kPressureSign * flow.potential(k) / dt);
    return p.normalized();
}

double VelocityMoments::trace_gap(int k) const
{
    const GridDomain& d = *mean.at(k).domain;
    double s = 0.0;
    for (int c = 0; c < d.num_cells(); ++c) {
        const Point& v = mean[k].values[c];
        s += d.weight(c) * (tensor[k][c].trace() - v.squaredNorm());
    }
    return s;
}

VelocityMoments velocity_moments(const GeneralizedFlow& flow)
{
    const double dt = flow.time().dt();
    VelocityMoments vm;
    for (int k = 0; k < flow.time().K; ++k) {
        const StepStatistics st = flow.step_statistics(k);
        VectorField v{flow.domain(), st.mean_from};
        for (auto& x : v.values) x /= dt;
        std::vector<Eigen::Matrix2d> t = st.second_from;
        for (auto& m : t) m /= dt * dt;
        vm.mean.push_back(std::move(v));
        vm.tensor.push_back(std::move(t));
    }
    return vm;
}

std::vector<TestField> random_test_fields(const DomainPtr& domain, const TimeGrid& time, int count,
                                          std::uint64_t seed)
{
    if (count < 0) throw InvalidArgument("test field count must be nonnegative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const GridDomain& d = *domain;
    const int dim = d.dim();
    std::vector<TestField> out;
    for (int f = 0; f < count; ++f) {
        // Spatial part: low Fourier modes on tori, a bump times an affine field on the disk.
        struct Mode {
            int m0, m1;
            Point a, b;
        };
        std::vector<Mode> modes;
        Eigen::Matrix<double, 2, 3> affine = Eigen::Matrix<double, 2, 3>::Zero();
        if (d.periodic()) {
            for (int m0 = -2; m0 <= 2; ++m0)
                for (int m1 = dim == 2 ? -2 : 0; m1 <= (dim == 2 ? 2 : 0); ++m1) {
                    if (m0 == 0 && m1 == 0) continue;
                    Mode m{m0, m1, Point(gauss(rng), dim == 2 ? gauss(rng) : 0.0),
                           Point(gauss(rng), dim == 2 ? gauss(rng) : 0.0)};
                    modes.push_back(m);
                }
        } else {
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 3; ++j) affine(i, j) = gauss(rng);
        }
        const double phase = gauss(rng);
        auto spatial = [&](const Point& x) -> Point {
            if (d.periodic()) {
                Point w = Point::Zero();
                for (const auto& m : modes) {
                    const double arg = 2.0 * std::numbers::pi * (m.m0 * x.x() + m.m1 * x.y());
                    w += m.a * std::cos(arg) + m.b * std::sin(arg);
                }
                return w;
            }
            const double r2 = x.squaredNorm();
            const double bump = r2 < 1.0 ? (1.0 - r2) * (1.0 - r2) : 0.0;
            return bump * (affine.col(0) + affine.col(1) * x.x() + affine.col(2) * x.y());
        };
        TestField tf;
        double scale = 0.0;
        for (int k = 0; k <= time.K; ++k) {
            const double s = time.time(k) / time.T;
            // vanishes at both ends; the phase term varies the time profile
            const double profile = std::sin(std::numbers::pi * s) * (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * s + phase));
            VectorField v{domain, std::vector<Point>(d.num_cells())};
            for (int c = 0; c < d.num_cells(); ++c) {
                v.values[c] = (k == 0 || k == time.K) ? Point::Zero() : Point(profile * spatial(d.center(c)));
                scale = std::max(scale, v.values[c].norm());
            }
            tf.slices.push_back(std::move(v));
        }
        if (scale > 0)
            for (auto& v : tf.slices)
                for (auto& x : v.values) x /= scale;
        out.push_back(std::move(tf));
    }
    return out;
}

namespace {

void check_test_field(const GeneralizedFlow& flow, const TestField& w)
{
    const int K = flow.time().K;
    if (static_cast<int>(w.slices.size()) != K + 1) throw InvalidArgument("test field must have K+1 slices");
    for (const auto& v : w.slices)
        if (static_cast<int>(v.values.size()) != flow.domain()->num_cells())
            throw InvalidArgument("test field has the wrong number of cells");
    for (int k : {0, K})
        for (const auto& x : w.slices[k].values)
            if (x.norm() > 1e-12) throw InvalidArgument("test field must vanish at the first and last slice");
}

double pairing(const std::vector<StepStatistics>& steps, const PressureField& p, const TestField& w, double dt)
{
    const GridDomain& d = *p.domain;
    double s = 0.0;
    for (const auto& st : steps) {
        const int k = st.k;
        for (int c = 0; c < d.num_cells(); ++c) {
            s += st.mass_to[c] * st.mean_to[c].dot(w.slices[k + 1].values[c]) / dt;
            s -= st.mass_from[c] * st.mean_from[c].dot(w.slices[k].values[c]) / dt;
        }
    }
    for (int k = p.first_slice(); k <= p.last_slice(); ++k) {
        const ScalarField div = divergence(w.slices[k]);
        s += dt * (d.weights().array() * p.at(k).array() * div.values.array()).sum();
    }
    return s;
}

std::vector<StepStatistics> all_steps(const GeneralizedFlow& flow)
{
    std::vector<StepStatistics> steps;
    for (int k = 0; k < flow.time().K; ++k) steps.push_back(flow.step_statistics(k));
    return steps;
}

void check_pressure(const GeneralizedFlow& flow, const PressureField& p)
{
    if (p.domain.get() != flow.domain().get() && p.domain->num_cells() != flow.domain()->num_cells())
        throw InvalidArgument("pressure and flow live on different domains");
    if (p.time.K != flow.time().K) throw InvalidArgument("pressure and flow have different time grids");
}

}  // namespace

double weak_euler_pairing(const GeneralizedFlow& flow, const PressureField& p, const TestField& w)
{
    check_pressure(flow, p);
    check_test_field(flow, w);
    return pairing(all_steps(flow), p, w, flow.time().dt());
}

double weak_euler_residual(const GeneralizedFlow& flow, const PressureField& p, const std::vector<TestField>& fields)
{
    check_pressure(flow, p);
    for (const auto& w : fields) check_test_field(flow, w);
    const auto steps = all_steps(flow);
    double r = 0.0;
    for (const auto& w : fields) r = std::max(r, std::abs(pairing(steps, p, w, flow.time().dt())));
    return r;
}

namespace {

CriterionResult criterion_from_sup(double sup, double T)
{
    CriterionResult r;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    r.hessian_sup = sup;
    r.value = T * T * sup;
    r.margin = pi2 - r.value;
    r.satisfied = r.value <= pi2;
    return r;
}

}  // namespace

CriterionResult classical_optimality_criterion(const PressureField& p, double T)
{
    if (p.slices.empty()) throw InvalidArgument("criterion needs at least one pressure slice");
    double sup = -std::numeric_limits<double>::infinity();
    for (int k = p.first_slice(); k <= p.last_slice(); ++k) sup = std::max(sup, hessian_sup(p.slice(k)));
    return criterion_from_sup(sup, T);
}

CriterionResult classical_optimality_criterion(const ScalarField& p, double T)
{
    return criterion_from_sup(hessian_sup(p), T);
}

void write_pressure_csv(const PressureField& p, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw InvalidArgument("cannot open " + path);
    f << std::setprecision(17) << "slice,t,cell,x,y,value\n";
    for (int k = p.first_slice(); k <= p.last_slice(); ++k)
        for (int c = 0; c < p.domain->num_cells(); ++c) {
            const Point& x = p.domain->center(c);
            f << k << ',' << p.time.time(k) << ',' << c << ',' << x.x() << ',' << x.y() << ',' << p.at(k)[c] << '\n';
        }
}

}  // namespace gflow
