#include "degbill/dynamics.hpp"

#include <cmath>
#include <sstream>

namespace degbill {

AmbientSpace::AmbientSpace(SpaceKind kind, int dim, Vec periods)
    : kind_(kind), dim_(dim), periods_(std::move(periods))
{
}

AmbientSpace AmbientSpace::euclidean(int dim)
{
    if (dim < 1)
        throw DomainError("ambient dimension must be positive");
    return AmbientSpace(SpaceKind::Euclidean, dim, Vec());
}

AmbientSpace AmbientSpace::torus(const Vec& periods)
{
    if (periods.size() < 1)
        throw DomainError("torus needs at least one period");
    for (Eigen::Index i = 0; i < periods.size(); ++i)
        if (!(periods[i] > 0.0))
            throw DomainError("torus periods must be strictly positive");
    return AmbientSpace(SpaceKind::FlatTorus, static_cast<int>(periods.size()), periods);
}

Vec AmbientSpace::wrap(const Vec& q) const
{
    if (!is_torus())
        return q;
    Vec r = q;
    for (int i = 0; i < dim_; ++i) {
        r[i] -= periods_[i] * std::floor(q[i] / periods_[i]);
        if (r[i] >= periods_[i])
            r[i] -= periods_[i];
    }
    return r;
}

Vec AmbientSpace::displacement(const Vec& from, const Vec& to, const IVec& winding) const
{
    Vec d = to - from;
    if (winding.size() == 0)
        return d;
    if (!is_torus())
        throw DomainError("winding label given on a Euclidean space");
    if (winding.size() != dim_)
        throw DomainError("winding label has wrong dimension");
    for (int i = 0; i < dim_; ++i)
        d[i] += winding[i] * periods_[i];
    return d;
}

Vec AmbientSpace::min_image(const Vec& dq) const
{
    if (!is_torus())
        return dq;
    Vec r = dq;
    for (int i = 0; i < dim_; ++i)
        r[i] -= periods_[i] * std::round(dq[i] / periods_[i]);
    return r;
}

Mat Potential::hessian(const Vec& q) const
{
    const Eigen::Index n = q.size();
    Mat hs(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double step = 1e-5 * std::max(1.0, std::abs(q[j]));
        Vec qp = q, qm = q;
        qp[j] += step;
        qm[j] -= step;
        hs.col(j) = (gradient(qp) - gradient(qm)) / (2.0 * step);
    }
    return 0.5 * (hs + hs.transpose());
}

HarmonicPotential::HarmonicPotential(Mat stiffness, Vec center) : k_(std::move(stiffness)), c_(std::move(center))
{
    if (k_.rows() != k_.cols() || k_.rows() != c_.size())
        throw DomainError("harmonic potential: dimension mismatch");
}

double HarmonicPotential::value(const Vec& q) const
{
    const Vec d = q - c_;
    return 0.5 * d.dot(k_ * d);
}

Vec HarmonicPotential::gradient(const Vec& q) const
{
    return k_ * (q - c_);
}

CoulombPotential::CoulombPotential(std::vector<Vec> centers, std::vector<double> strengths)
    : centers_(std::move(centers)), strengths_(std::move(strengths))
{
    if (centers_.size() != strengths_.size())
        throw DomainError("Coulomb potential: centers and strengths differ in length");
}

double CoulombPotential::value(const Vec& q) const
{
    double v = 0.0;
    for (size_t i = 0; i < centers_.size(); ++i) {
        const double r = (q - centers_[i]).norm();
        if (r == 0.0)
            throw DomainError("Coulomb potential evaluated at a center");
        v -= strengths_[i] / r;
    }
    return v;
}

Vec CoulombPotential::gradient(const Vec& q) const
{
    Vec g = Vec::Zero(q.size());
    for (size_t i = 0; i < centers_.size(); ++i) {
        const Vec d = q - centers_[i];
        const double r = d.norm();
        if (r == 0.0)
            throw DomainError("Coulomb potential evaluated at a center");
        g += strengths_[i] * d / (r * r * r);
    }
    return g;
}

Mat CoulombPotential::hessian(const Vec& q) const
{
    const Eigen::Index n = q.size();
    Mat hs = Mat::Zero(n, n);
    for (size_t i = 0; i < centers_.size(); ++i) {
        const Vec d = q - centers_[i];
        const double r = d.norm();
        if (r == 0.0)
            throw DomainError("Coulomb potential evaluated at a center");
        const double r3 = r * r * r;
        hs += strengths_[i] * (Mat::Identity(n, n) / r3 - 3.0 * d * d.transpose() / (r3 * r * r));
    }
    return hs;
}

UniformField::UniformField(int dim, double strength, int i, int j) : dim_(dim), i_(i), j_(j), b_(strength)
{
    if (i < 0 || j < 0 || i >= dim || j >= dim || i == j)
        throw DomainError("uniform field: invalid plane");
}

Vec UniformField::value(const Vec& q) const
{
    Vec w = Vec::Zero(dim_);
    w[i_] = -0.5 * b_ * q[j_];
    w[j_] = 0.5 * b_ * q[i_];
    return w;
}

Mat UniformField::jacobian(const Vec&) const
{
    Mat jw = Mat::Zero(dim_, dim_);
    jw(i_, j_) = -0.5 * b_;
    jw(j_, i_) = 0.5 * b_;
    return jw;
}

ClassicalHamiltonian::ClassicalHamiltonian(Mat mass, std::shared_ptr<const Potential> potential,
                                           std::shared_ptr<const CovectorField> magnetic)
    : mass_(std::move(mass)), potential_(std::move(potential)), magnetic_(std::move(magnetic))
{
    if (mass_.rows() != mass_.cols() || mass_.rows() < 1)
        throw DomainError("mass matrix must be square");
    if ((mass_ - mass_.transpose()).norm() > 1e-12 * mass_.norm())
        throw DomainError("mass matrix must be symmetric");
    Eigen::LLT<Mat> llt(mass_);
    if (llt.info() != Eigen::Success)
        throw DomainError("mass matrix must be positive definite");
    inv_mass_ = llt.solve(Mat::Identity(mass_.rows(), mass_.cols()));
    inv_mass_ = 0.5 * (inv_mass_ + inv_mass_.transpose());
    if (!potential_)
        potential_ = std::make_shared<ConstantPotential>(0.0);
}

Vec ClassicalHamiltonian::w(const Vec& q) const
{
    return magnetic_ ? magnetic_->value(q) : Vec::Zero(q.size());
}

double ClassicalHamiltonian::energy(const Vec& q, const Vec& p) const
{
    const Vec u = p - w(q);
    return 0.5 * u.dot(inv_mass_ * u) + W(q);
}

Vec ClassicalHamiltonian::velocity(const Vec& q, const Vec& p) const
{
    return inv_mass_ * (p - w(q));
}

Vec ClassicalHamiltonian::momentum(const Vec& q, const Vec& v) const
{
    return mass_ * v + w(q);
}

double ClassicalHamiltonian::vector_norm(const Vec& v) const
{
    return std::sqrt(v.dot(mass_ * v));
}

double ClassicalHamiltonian::covector_norm(const Vec& p) const
{
    return std::sqrt(p.dot(inv_mass_ * p));
}

Vec ClassicalHamiltonian::grad_q(const Vec& q, const Vec& p) const
{
    Vec g = grad_W(q);
    if (magnetic_)
        g -= magnetic_->jacobian(q).transpose() * velocity(q, p);
    return g;
}

double eval_energy(const ClassicalHamiltonian& h, const PhaseState& s)
{
    if (s.q.size() != h.dim() || s.p.size() != h.dim())
        throw DomainError("phase state dimension does not match the Hamiltonian");
    return h.energy(s.q, s.p);
}

namespace {

PhaseState verlet(const ClassicalHamiltonian& h, const PhaseState& s, double dt)
{
    PhaseState r;
    const Vec ph = s.p - 0.5 * dt * h.grad_W(s.q);
    r.q = s.q + dt * (h.inverse_mass() * ph);
    r.p = ph - 0.5 * dt * h.grad_W(r.q);
    r.t = s.t + dt;
    return r;
}

PhaseState implicit_midpoint(const ClassicalHamiltonian& h, const PhaseState& s, double dt)
{
    Vec q1 = s.q, p1 = s.p;
    for (int it = 0; it < 100; ++it) {
        const Vec qm = 0.5 * (s.q + q1);
        const Vec pm = 0.5 * (s.p + p1);
        const Vec qn = s.q + dt * h.velocity(qm, pm);
        const Vec pn = s.p - dt * h.grad_q(qm, pm);
        const double change = (qn - q1).lpNorm<Eigen::Infinity>() + (pn - p1).lpNorm<Eigen::Infinity>();
        q1 = qn;
        p1 = pn;
        if (change <= 1e-15 * (1.0 + q1.lpNorm<Eigen::Infinity>() + p1.lpNorm<Eigen::Infinity>()))
            break;
    }
    return {q1, p1, s.t + dt};
}

PhaseState base_step(const ClassicalHamiltonian& h, const PhaseState& s, double dt)
{
    return h.has_magnetic() ? implicit_midpoint(h, s, dt) : verlet(h, s, dt);
}

double relative_drift(const ClassicalHamiltonian& h, const PhaseState& a, const PhaseState& b)
{
    const double h0 = h.energy(a.q, a.p);
    const double h1 = h.energy(b.q, b.p);
    const Vec u = a.p - h.w(a.q);
    const double kin = 0.5 * u.dot(h.inverse_mass() * u);
    const double scale = std::max({std::abs(h0), kin, 1e-300});
    return std::abs(h1 - h0) / scale;
}

} // namespace

PhaseState symplectic_step(const ClassicalHamiltonian& h, const PhaseState& s, double dt, int order)
{
    if (order == 2)
        return base_step(h, s, dt);
    if (order != 4)
        throw IntegrationError("integrator order must be 2 or 4");
    const double c = std::cbrt(2.0);
    const double w1 = 1.0 / (2.0 - c);
    const double w0 = -c / (2.0 - c);
    PhaseState r = base_step(h, s, w1 * dt);
    r = base_step(h, r, w0 * dt);
    r = base_step(h, r, w1 * dt);
    r.t = s.t + dt;
    return r;
}

Trajectory integrate_steps(const ClassicalHamiltonian& h, const PhaseState& s0, double duration, int n, int order,
                           bool keep_samples, int sample_every)
{
    if (n < 1)
        throw IntegrationError("step count must be positive");
    const double dt = duration / n;
    Trajectory tr;
    tr.step = dt;
    if (keep_samples)
        tr.samples.reserve(static_cast<size_t>(n / std::max(1, sample_every) + 2));
    PhaseState cur = s0;
    if (keep_samples)
        tr.samples.push_back(cur);
    for (int i = 1; i <= n; ++i) {
        PhaseState nxt = symplectic_step(h, cur, dt, order);
        if (!nxt.q.allFinite() || !nxt.p.allFinite())
            throw IntegrationError("integration produced a non-finite state");
        tr.action += 0.5 * (cur.p + nxt.p).dot(nxt.q - cur.q);
        cur = std::move(nxt);
        if (keep_samples && (i % std::max(1, sample_every) == 0 || i == n))
            tr.samples.push_back(cur);
    }
    if (!keep_samples)
        tr.samples.push_back(cur);
    tr.energy_drift = relative_drift(h, s0, cur);
    return tr;
}

Trajectory flow_segment(const ClassicalHamiltonian& h, const PhaseState& s0, double duration,
                        const FlowOptions& options)
{
    if (!(duration > 0.0))
        throw IntegrationError("flow duration must be positive");
    if (s0.q.size() != h.dim() || s0.p.size() != h.dim())
        throw DomainError("phase state dimension does not match the Hamiltonian");
    double step = options.step;
    for (int refine = 0; refine <= options.max_refinements; ++refine) {
        const int n = std::max(1, static_cast<int>(std::ceil(duration / step - 1e-9)));
        Trajectory tr = integrate_steps(h, s0, duration, n, options.order, options.keep_samples,
                                        options.sample_every);
        if (tr.energy_drift <= options.energy_tol)
            return tr;
        step *= 0.5;
    }
    std::ostringstream msg;
    msg << "step underflow: energy drift above " << options.energy_tol << " at step " << step * 2.0;
    throw IntegrationError(msg.str());
}

double jacobi_action(const ClassicalHamiltonian& h, const std::vector<Vec>& curve, double E)
{
    for (size_t i = 0; i < curve.size(); ++i) {
        if (!(h.W(curve[i]) < E)) {
            std::ostringstream msg;
            msg << "curve sample " << i << " lies outside the domain of possible motion (W >= E)";
            throw DomainError(msg.str());
        }
    }
    double s = 0.0;
    for (size_t i = 0; i + 1 < curve.size(); ++i) {
        const Vec dq = curve[i + 1] - curve[i];
        const Vec mid = 0.5 * (curve[i] + curve[i + 1]);
        const double kin = 2.0 * (E - h.W(mid));
        if (!(kin > 0.0))
            throw DomainError("curve midpoint lies outside the domain of possible motion");
        s += std::sqrt(kin) * h.vector_norm(dq);
        if (h.has_magnetic())
            s += h.w(mid).dot(dq);
    }
    return s;
}

double jacobi_action(const ClassicalHamiltonian& h, const Trajectory& traj, double E)
{
    std::vector<Vec> curve;
    curve.reserve(traj.samples.size());
    for (const auto& s : traj.samples)
        curve.push_back(s.q);
    return jacobi_action(h, curve, E);
}

bool in_domain(const ClassicalHamiltonian& h, const Vec& q, double E)
{
    try {
        return h.W(q) < E;
    } catch (const DomainError&) {
        return false;
    }
}

Vec momentum_on_shell(const ClassicalHamiltonian& h, const Vec& q, const Vec& direction, double E)
{
    const double kin = 2.0 * (E - h.W(q));
    if (!(kin > 0.0))
        throw DomainError("point outside the domain of possible motion");
    const double n = h.vector_norm(direction);
    if (!(n > 0.0))
        throw DomainError("zero direction");
    return h.momentum(q, direction * (std::sqrt(kin) / n));
}

} // namespace degbill
