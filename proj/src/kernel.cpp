#include "gflow/kernel.hpp"

#include "gflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace gflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Flushes subnormals to zero for the lifetime of the guard. Underflowed
// kernel products are negligible next to the line maximum, and subnormal
// arithmetic is two orders of magnitude slower.
class FlushDenormals {
public:
    FlushDenormals()
    {
#if defined(__SSE2__)
        saved_ = _mm_getcsr();
        _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
        _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
    }
    ~FlushDenormals()
    {
#if defined(__SSE2__)
        _mm_setcsr(saved_);
#endif
    }
    FlushDenormals(const FlushDenormals&) = delete;
    FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
    unsigned int saved_ = 0;
};

// Lattice index of grid position g along an axis.
inline int axis_index(int g, int axis, int n) { return axis == 0 ? g % n : g / n; }

}  // namespace

std::string to_string(KernelBackend backend)
{
    switch (backend) {
    case KernelBackend::Auto: return "auto";
    case KernelBackend::LogDense: return "log-dense";
    case KernelBackend::Scaling: return "scaling";
    }
    return "auto";
}

KernelBackend parse_kernel_backend(std::string_view name)
{
    if (name == "auto") return KernelBackend::Auto;
    if (name == "log-dense") return KernelBackend::LogDense;
    if (name == "scaling") return KernelBackend::Scaling;
    throw InvalidArgument("unknown kernel backend '" + std::string(name) + "'");
}

StepKernel::StepKernel(DomainPtr domain, double dt, double epsilon, KernelBackend backend)
    : domain_(std::move(domain)), dt_(dt), epsilon_(epsilon), n_(domain_->n()), dim_(domain_->dim())
{
    if (!(dt > 0.0)) throw InvalidArgument("step kernel needs dt > 0");
    if (!(epsilon > 0.0)) throw InvalidArgument("step kernel needs epsilon > 0");
    backend_ = backend == KernelBackend::Auto
                   ? (domain_->grid_size() <= kLogDenseMaxGrid ? KernelBackend::LogDense : KernelBackend::Scaling)
                   : backend;
    for (int g = 0; g < domain_->grid_size(); ++g)
        if (domain_->cell_at_grid(g) < 0) non_cells_.push_back(g);

    disp_.resize(n_, n_);
    disp_sq_.resize(n_, n_);
    for (int t = 0; t < n_; ++t) {
        for (int s = 0; s < n_; ++s) {
            double d = domain_->axis_coordinate(s) - domain_->axis_coordinate(t);
            if (domain_->periodic()) d -= std::floor(d + 0.5);
            disp_sq_(t, s) = d * d;
            // Both ways round an exact antipode are equally short.
            disp_(t, s) = domain_->periodic() && std::abs(std::abs(d) - 0.5) < 1e-12 ? 0.0 : d;
        }
    }
    const Eigen::MatrixXd g = (-disp_sq_ / (2.0 * dt_ * epsilon_)).array().exp().matrix();
    axis_kernel_[0] = g;
    axis_kernel_[1] = g.cwiseProduct(disp_);
    axis_kernel_[2] = g.cwiseProduct(disp_sq_);
}

double StepKernel::cost(int a, int b) const
{
    double c = 0.0;
    for (int axis = 0; axis < dim_; ++axis) c += disp_sq_(axis_index(a, axis, n_), axis_index(b, axis, n_));
    return c / (2.0 * dt_);
}

void StepKernel::mask(Eigen::MatrixXd& m) const
{
    for (Eigen::Index a = 0; a < m.cols(); ++a) {
        double* col = m.col(a).data();
        for (int g : non_cells_) col[g] = kNegInf;
    }
}

void StepKernel::apply(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const
{
    if (in.rows() != domain_->grid_size()) throw InvalidArgument("kernel input has the wrong number of rows");
    if (backend_ == KernelBackend::LogDense) {
        apply_log_dense(in, out);
    } else {
        FlushDenormals guard;
        apply_scaling(in, out);
    }
    mask(out);
}

KernelMoments StepKernel::moments(const Eigen::MatrixXd& in) const
{
    if (in.rows() != domain_->grid_size()) throw InvalidArgument("kernel input has the wrong number of rows");
    KernelMoments m;
    if (backend_ == KernelBackend::LogDense) {
        m = moments_log_dense(in);
    } else {
        FlushDenormals guard;
        m = moments_scaling(in);
    }
    mask(m.log_mass);
    return m;
}

void StepKernel::apply_log_dense(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const
{
    const int G = domain_->grid_size();
    const int P = static_cast<int>(in.cols());
    out.resize(G, P);
    Eigen::MatrixXd logk(G, G);
    for (int t = 0; t < G; ++t)
        for (int s = 0; s < G; ++s) logk(s, t) = -cost(s, t) / epsilon_;
    Eigen::VectorXd z(G);
    for (int a = 0; a < P; ++a) {
        for (int t = 0; t < G; ++t) {
            z = in.col(a) + logk.col(t);
            const double mx = z.maxCoeff();
            out(t, a) = std::isfinite(mx) ? mx + std::log((z.array() - mx).exp().sum()) : kNegInf;
        }
    }
}

KernelMoments StepKernel::moments_log_dense(const Eigen::MatrixXd& in) const
{
    const int G = domain_->grid_size();
    const int P = static_cast<int>(in.cols());
    KernelMoments m;
    m.log_mass.resize(G, P);
    for (auto& x : m.mean) x = Eigen::MatrixXd::Zero(G, P);
    for (auto& x : m.second) x = Eigen::MatrixXd::Zero(G, P);
    Eigen::VectorXd z(G), w(G), d0(G), d1(G), q0(G), q1(G);
    for (int t = 0; t < G; ++t) {
        const int t0 = axis_index(t, 0, n_), t1 = axis_index(t, 1, n_);
        for (int s = 0; s < G; ++s) {
            const int s0 = axis_index(s, 0, n_), s1 = axis_index(s, 1, n_);
            d0[s] = disp_(t0, s0);
            q0[s] = disp_sq_(t0, s0);
            d1[s] = dim_ == 2 ? disp_(t1, s1) : 0.0;
            q1[s] = dim_ == 2 ? disp_sq_(t1, s1) : 0.0;
        }
        const Eigen::VectorXd logk = -(q0 + q1) / (2.0 * dt_ * epsilon_);
        for (int a = 0; a < P; ++a) {
            z = in.col(a) + logk;
            const double mx = z.maxCoeff();
            if (!std::isfinite(mx)) {
                m.log_mass(t, a) = kNegInf;
                continue;
            }
            w = (z.array() - mx).exp();
            const double tot = w.sum();
            m.log_mass(t, a) = mx + std::log(tot);
            w /= tot;
            m.mean[0](t, a) = w.dot(d0);
            m.mean[1](t, a) = w.dot(d1);
            m.second[0](t, a) = w.dot(q0);
            m.second[1](t, a) = w.dot(d0.cwiseProduct(d1));
            m.second[2](t, a) = w.dot(q1);
        }
    }
    return m;
}

namespace {

// Per-column shift so the largest finite entry is 0; -inf columns get shift 0.
template <class Derived>
Eigen::RowVectorXd column_shift(const Eigen::MatrixBase<Derived>& in)
{
    Eigen::RowVectorXd mx = in.colwise().maxCoeff();
    for (int a = 0; a < mx.size(); ++a)
        if (!std::isfinite(mx[a])) mx[a] = 0.0;
    return mx;
}

template <class Derived>
Eigen::VectorXd row_shift(const Eigen::MatrixBase<Derived>& in)
{
    Eigen::VectorXd mx = in.rowwise().maxCoeff();
    for (int a = 0; a < mx.size(); ++a)
        if (!std::isfinite(mx[a])) mx[a] = 0.0;
    return mx;
}

// y / y0 where y0 > 0, else 0.
Eigen::MatrixXd ratio(const Eigen::MatrixXd& y, const Eigen::MatrixXd& y0)
{
    return (y0.array() > 0).select(y.array() / y0.array(), 0.0).matrix();
}

// Log of A * exp(in) along the leading axis of an n x cols view, shifted per
// column. Writes the un-logged product to y and the shift to shift.
void shifted_product(const Eigen::MatrixXd& a, const Eigen::Map<const Eigen::MatrixXd>& in, Eigen::MatrixXd& e,
                     Eigen::MatrixXd& y, Eigen::RowVectorXd& shift)
{
    shift = column_shift(in);
    e.resize(in.rows(), in.cols());
    e.array() = (in.rowwise() - shift).array().exp();
    y.noalias() = a * e;
}

}  // namespace

// 2-D grids are handled one axis at a time. The first pass is shifted per
// 1-D line; between passes each line is rescaled against the largest shift
// of its column (label), so entries more than ~700 log units below the
// label maximum underflow to zero.
void StepKernel::apply_scaling(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const
{
    const int G = domain_->grid_size();
    const int P = static_cast<int>(in.cols());
    if (dim_ == 1) {
        Eigen::Map<const Eigen::MatrixXd> view(in.data(), G, P);
        shifted_product(axis_kernel_[0], view, scratch_e_, out, scratch_shift_);
        out.array() = out.array().log();
        out.rowwise() += scratch_shift_;
        return;
    }
    const int n = n_;
    const Eigen::Index cols = static_cast<Eigen::Index>(n) * P;
    Eigen::Map<const Eigen::MatrixXd> flat(in.data(), n, cols);
    Eigen::RowVectorXd line_max = flat.colwise().maxCoeff();
    scratch_e_.resize(n, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        if (std::isfinite(line_max[c]))
            scratch_e_.col(c).array() = (flat.col(c).array() - line_max[c]).exp();
        else
            scratch_e_.col(c).setZero();
    }
    scratch_y_.noalias() = axis_kernel_[0] * scratch_e_;

    scratch_shift_.resize(P);
    scratch_z_.resize(n, cols);
    for (int a = 0; a < P; ++a) {
        const auto block = line_max.segment(static_cast<Eigen::Index>(a) * n, n);
        double top = kNegInf;
        for (int j = 0; j < n; ++j)
            if (std::isfinite(block[j])) top = std::max(top, block[j]);
        scratch_shift_[a] = top;
        const Eigen::Index off = static_cast<Eigen::Index>(a) * n * n;
        Eigen::Map<const Eigen::MatrixXd> y(scratch_y_.data() + off, n, n);
        Eigen::Map<Eigen::MatrixXd> z(scratch_z_.data() + off, n, n);
        for (int j = 0; j < n; ++j) {
            const double f = std::isfinite(block[j]) ? std::exp(block[j] - top) : 0.0;
            z.row(j) = f * y.col(j).transpose();
        }
    }
    scratch_e_.noalias() = axis_kernel_[0] * scratch_z_;

    out.resize(G, P);
    for (int a = 0; a < P; ++a) {
        const Eigen::Index off = static_cast<Eigen::Index>(a) * n * n;
        Eigen::Map<const Eigen::MatrixXd> y2(scratch_e_.data() + off, n, n);
        Eigen::Map<Eigen::MatrixXd> o(out.data() + off, n, n);
        if (!std::isfinite(scratch_shift_[a])) {
            o.setConstant(kNegInf);
            continue;
        }
        o.noalias() = y2.transpose();
        o.array() = o.array().log() + scratch_shift_[a];
    }
}

KernelMoments StepKernel::moments_scaling(const Eigen::MatrixXd& in) const
{
    const int G = domain_->grid_size();
    const int P = static_cast<int>(in.cols());
    KernelMoments m;
    if (dim_ == 1) {
        const Eigen::RowVectorXd shift = column_shift(in);
        const Eigen::MatrixXd e = (in.rowwise() - shift).array().exp().matrix();
        const Eigen::MatrixXd mass = axis_kernel_[0] * e;
        m.mean[0] = ratio(axis_kernel_[1] * e, mass);
        m.second[0] = ratio(axis_kernel_[2] * e, mass);
        m.mean[1] = Eigen::MatrixXd::Zero(G, P);
        m.second[1] = Eigen::MatrixXd::Zero(G, P);
        m.second[2] = Eigen::MatrixXd::Zero(G, P);
        m.log_mass = mass.array().log().matrix();
        m.log_mass.rowwise() += shift;
        return m;
    }
    Eigen::Map<const Eigen::MatrixXd> flat(in.data(), n_, static_cast<Eigen::Index>(n_) * P);
    const Eigen::RowVectorXd shift0 = column_shift(flat);
    const Eigen::MatrixXd e = (flat.rowwise() - shift0).array().exp().matrix();
    Eigen::MatrixXd y0 = axis_kernel_[0] * e;
    const Eigen::MatrixXd r1 = ratio(axis_kernel_[1] * e, y0);
    const Eigen::MatrixXd r2 = ratio(axis_kernel_[2] * e, y0);
    y0 = y0.array().log().matrix();
    y0.rowwise() += shift0;

    m.log_mass.resize(G, P);
    for (auto& x : m.mean) x.resize(G, P);
    for (auto& x : m.second) x.resize(G, P);
    const Eigen::MatrixXd a0t = axis_kernel_[0].transpose();
    const Eigen::MatrixXd a1t = axis_kernel_[1].transpose();
    const Eigen::MatrixXd a2t = axis_kernel_[2].transpose();
    Eigen::MatrixXd ew(n_, n_), mass(n_, n_);
    for (int a = 0; a < P; ++a) {
        const Eigen::Index off = static_cast<Eigen::Index>(a) * n_ * n_;
        Eigen::Map<const Eigen::MatrixXd> ly(y0.data() + off, n_, n_);
        Eigen::Map<const Eigen::MatrixXd> q1(r1.data() + off, n_, n_);
        Eigen::Map<const Eigen::MatrixXd> q2(r2.data() + off, n_, n_);
        auto block = [&](Eigen::MatrixXd& x) { return Eigen::Map<Eigen::MatrixXd>(x.data() + off, n_, n_); };
        const Eigen::VectorXd shift1 = row_shift(ly);
        const Eigen::MatrixXd ex = (ly.colwise() - shift1).array().exp().matrix();
        mass.noalias() = ex * a0t;
        ew = ex.cwiseProduct(q1);
        block(m.mean[0]) = ratio(ew * a0t, mass);
        block(m.second[1]) = ratio(ew * a1t, mass);
        block(m.mean[1]) = ratio(ex * a1t, mass);
        block(m.second[0]) = ratio(ex.cwiseProduct(q2) * a0t, mass);
        block(m.second[2]) = ratio(ex * a2t, mass);
        block(m.log_mass) = (mass.array().log().colwise() + shift1.array()).matrix();
    }
    return m;
}

double median_step_cost(const GridDomain& domain, double dt)
{
    const int n = domain.num_cells();
    if (n < 2) throw InvalidArgument("median step cost needs at least two cells");
    std::vector<double> c;
    c.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) c.push_back(domain.sq_dist_cells(i, j) / (2.0 * dt));
    auto mid = c.begin() + static_cast<std::ptrdiff_t>(c.size() / 2);
    std::nth_element(c.begin(), mid, c.end());
    return *mid;
}

}  // namespace gflow
