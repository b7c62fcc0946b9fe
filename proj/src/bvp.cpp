#include "degbill/bvp.hpp"

#include "degbill/scatterer.hpp"

#include <cmath>
#include <sstream>

namespace degbill {

namespace {

struct Shooter {
    const ClassicalHamiltonian& h;
    Vec q0;
    Vec target;
    double E;
    Vec e0; ///< M-unit initial velocity direction
    Mat t;  ///< M-orthonormal complement of e0

    void recenter(const Vec& direction)
    {
        e0 = direction / h.vector_norm(direction);
        Mat col(e0.size(), 1);
        col.col(0) = e0;
        t = metric_frames(col, h.mass()).normal;
    }

    Vec direction(const Vec& theta) const
    {
        Vec e = e0 + t * theta;
        return e / h.vector_norm(e);
    }

    PhaseState start(const Vec& theta) const
    {
        return {q0, momentum_on_shell(h, q0, direction(theta), E), 0.0};
    }

    Vec residual(const Vec& y, int n) const
    {
        const int d = static_cast<int>(q0.size());
        const Vec theta = y.head(d - 1);
        const double tau = y[d - 1];
        const Trajectory tr = integrate_steps(h, start(theta), tau, n, 4, false);
        return tr.back().q - target;
    }

    Mat jacobian(const Vec& y, int n, double fd) const
    {
        const int d = static_cast<int>(q0.size());
        Mat jm(d, d);
        for (int j = 0; j < d; ++j) {
            const double step = j == d - 1 ? fd * std::max(1.0, std::abs(y[j])) : fd;
            Vec yp = y, ym = y;
            yp[j] += step;
            ym[j] -= step;
            jm.col(j) = (residual(yp, n) - residual(ym, n)) / (2.0 * step);
        }
        return jm;
    }
};

int step_count(double tau, const ConnectOptions& o)
{
    if (o.steps > 0)
        return o.steps;
    return std::max(16, static_cast<int>(std::ceil(tau / o.flow_step)));
}

std::vector<Vec> downsample(const std::vector<PhaseState>& samples, int count)
{
    std::vector<Vec> path;
    const size_t n = samples.size();
    const size_t want = static_cast<size_t>(std::max(2, count));
    if (n <= want) {
        for (const auto& s : samples)
            path.push_back(s.q);
        return path;
    }
    for (size_t i = 0; i < want; ++i)
        path.push_back(samples[(i * (n - 1)) / (want - 1)].q);
    return path;
}

CollisionOrbit connect_free(const ClassicalHamiltonian& h, const AmbientSpace& space, const Vec& qm, const Vec& qp,
                            double E, const ConnectOptions& o)
{
    const double kin = 2.0 * (E - h.W(qm));
    if (!(kin > 0.0))
        throw DomainError("energy infeasible: E <= W");
    const Vec delta = space.displacement(qm, qp, o.winding);
    const double rho = h.vector_norm(delta);
    if (!(rho > 0.0))
        throw GeometryError("coincident endpoints with zero winding: no collision orbit");
    const double c = std::sqrt(kin);
    CollisionOrbit orb;
    orb.q_minus = qm;
    orb.q_plus = qm + delta;
    orb.winding = o.winding;
    orb.energy = E;
    orb.action = c * rho;
    orb.time = rho / c;
    orb.p_minus = c * (h.mass() * delta) / rho;
    orb.p_plus = orb.p_minus;
    orb.closed_form = true;
    const int ns = std::max(2, o.path_samples);
    for (int i = 0; i < ns; ++i)
        orb.path.push_back(qm + delta * (static_cast<double>(i) / (ns - 1)));
    if (o.compute_twist) {
        const Vec md = h.mass() * delta;
        orb.twist = -c * (h.mass() / rho - md * md.transpose() / (rho * rho * rho));
    }
    if (o.cross_check) {
        const PhaseState s0{qm, orb.p_minus, 0.0};
        const Trajectory tr = integrate_steps(h, s0, orb.time, step_count(orb.time, o), 4, true);
        const double miss = (tr.back().q - orb.q_plus).lpNorm<Eigen::Infinity>();
        const double sj = jacobi_action(h, tr, E);
        if (miss > 1e-8 * std::max(1.0, rho) || std::abs(sj - orb.action) > 1e-8 * std::max(1.0, orb.action))
            throw ConvergenceError("closed-form orbit disagrees with the integrator");
    }
    return orb;
}

} // namespace

CollisionOrbit connect(const ClassicalHamiltonian& h, const AmbientSpace& space, const Vec& q_minus,
                       const Vec& q_plus, double E, const ConnectOptions& o)
{
    const int d = h.dim();
    if (q_minus.size() != d || q_plus.size() != d || space.dim() != d)
        throw DomainError("connect: dimension mismatch");
    if (!in_domain(h, q_minus, E) || !in_domain(h, q_plus, E))
        throw DomainError("connect: endpoint outside the domain of possible motion");
    if (h.is_free())
        return connect_free(h, space, q_minus, q_plus, E, o);

    const Vec delta = space.displacement(q_minus, q_plus, o.winding);
    Shooter sh{h, q_minus, q_minus + delta, E, Vec(), Mat()};
    Vec dir = o.direction_guess.size() == d ? o.direction_guess : delta;
    if (!(dir.norm() > 0.0))
        throw GeometryError("connect: zero chord and no direction guess");
    sh.recenter(dir);
    double tau = o.time_guess;
    if (!(tau > 0.0))
        tau = h.vector_norm(delta) / std::sqrt(2.0 * (E - h.W(q_minus)));

    Vec y = Vec::Zero(d);
    y[d - 1] = tau;
    int n = step_count(tau, o);
    Vec r = sh.residual(y, n);
    int it = 0;
    for (; it < o.max_iter; ++it) {
        if (r.lpNorm<Eigen::Infinity>() <= o.tol)
            break;
        const Mat jm = sh.jacobian(y, n, o.fd_step);
        Eigen::JacobiSVD<Mat> svd(jm);
        const auto& sv = svd.singularValues();
        if (!(sv[d - 1] > 1e-12 * sv[0]))
            throw DegeneracyError("singular shooting Jacobian (conjugate endpoints)");
        const Vec step = -jm.colPivHouseholderQr().solve(r);
        double alpha = 1.0;
        Vec ytry, rtry;
        bool accepted = false;
        for (int k = 0; k < 30; ++k) {
            ytry = y + alpha * step;
            if (ytry[d - 1] > 0.0) {
                try {
                    rtry = sh.residual(ytry, n);
                    if (rtry.norm() < r.norm()) {
                        accepted = true;
                        break;
                    }
                } catch (const Error&) {
                }
            }
            alpha *= 0.5;
        }
        if (!accepted)
            throw ConvergenceError("shooting Newton: no decrease along the Newton direction");
        sh.recenter(sh.direction(ytry.head(d - 1)));
        y = Vec::Zero(d);
        y[d - 1] = ytry[d - 1];
        const int n_new = step_count(y[d - 1], o);
        r = n_new == n ? rtry : sh.residual(y, n_new);
        n = n_new;
    }
    if (r.lpNorm<Eigen::Infinity>() > o.tol) {
        std::ostringstream msg;
        msg << "shooting Newton diverged: residual " << r.lpNorm<Eigen::Infinity>() << " after " << it
            << " iterations";
        throw ConvergenceError(msg.str());
    }

    CollisionOrbit orb;
    const PhaseState s0 = sh.start(Vec::Zero(d - 1));
    const Trajectory tr = integrate_steps(h, s0, y[d - 1], n, 4, true);
    orb.q_minus = q_minus;
    orb.q_plus = sh.target;
    orb.winding = o.winding;
    orb.energy = E;
    orb.time = y[d - 1];
    orb.p_minus = s0.p;
    orb.p_plus = tr.back().p;
    orb.action = jacobi_action(h, tr, E);
    orb.path = downsample(tr.samples, o.path_samples);
    orb.steps = n;
    if (std::abs(h.energy(orb.q_plus, orb.p_plus) - E) > 1e-8 * std::max(1.0, std::abs(E)))
        throw IntegrationError("connect: terminal energy drift above 1e-8");
    if (o.compute_twist)
        orb.twist = twist(h, space, orb, o);
    return orb;
}

MomentumReport boundary_momenta_check(const ClassicalHamiltonian& h, const AmbientSpace& space,
                                      const CollisionOrbit& orbit, const ConnectOptions& options, double step)
{
    const int d = h.dim();
    ConnectOptions o = options;
    o.winding = orbit.winding;
    o.compute_twist = false;
    o.steps = orbit.steps;
    o.time_guess = orbit.time;
    o.direction_guess = h.velocity(orbit.q_minus, orbit.p_minus);
    const double scale = std::max(1.0, orbit.q_minus.lpNorm<Eigen::Infinity>());
    const double hstep = step * scale;
    // q_plus is lifted, so the winding is already folded in.
    const Vec qp = orbit.q_plus;
    o.winding = IVec();
    MomentumReport rep;
    rep.fd_minus.resize(d);
    rep.fd_plus.resize(d);
    for (int i = 0; i < d; ++i) {
        Vec a = orbit.q_minus, b = orbit.q_minus;
        a[i] += hstep;
        b[i] -= hstep;
        rep.fd_minus[i] = (connect(h, space, a, qp, orbit.energy, o).action -
                           connect(h, space, b, qp, orbit.energy, o).action) /
                          (2.0 * hstep);
        Vec c = qp, e = qp;
        c[i] += hstep;
        e[i] -= hstep;
        rep.fd_plus[i] = (connect(h, space, orbit.q_minus, c, orbit.energy, o).action -
                          connect(h, space, orbit.q_minus, e, orbit.energy, o).action) /
                         (2.0 * hstep);
    }
    const Vec dm = rep.fd_minus + orbit.p_minus;
    const Vec dp = rep.fd_plus - orbit.p_plus;
    rep.max_abs_deviation = std::max(dm.lpNorm<Eigen::Infinity>(), dp.lpNorm<Eigen::Infinity>());
    const double pscale = std::max(orbit.p_minus.lpNorm<Eigen::Infinity>(), orbit.p_plus.lpNorm<Eigen::Infinity>());
    rep.max_rel_deviation = rep.max_abs_deviation / std::max(pscale, 1e-300);
    return rep;
}

Mat twist(const ClassicalHamiltonian& h, const AmbientSpace& space, const CollisionOrbit& orbit,
          const ConnectOptions& options)
{
    if (orbit.closed_form && orbit.twist.size() > 0)
        return orbit.twist;
    const int d = h.dim();
    if (orbit.closed_form) {
        ConnectOptions o = options;
        o.winding = orbit.winding;
        o.compute_twist = true;
        return connect(h, space, orbit.q_minus, space.wrap(orbit.q_plus), orbit.energy, o).twist;
    }
    ConnectOptions o = options;
    o.winding = IVec();
    o.compute_twist = false;
    o.steps = orbit.steps;
    o.time_guess = orbit.time;
    o.direction_guess = h.velocity(orbit.q_minus, orbit.p_minus);
    const double hstep = 1e-5 * std::max(1.0, orbit.q_minus.lpNorm<Eigen::Infinity>());
    Mat b(d, d);
    for (int i = 0; i < d; ++i) {
        Vec a = orbit.q_minus, c = orbit.q_minus;
        a[i] += hstep;
        c[i] -= hstep;
        const Vec pa = connect(h, space, a, orbit.q_plus, orbit.energy, o).p_plus;
        const Vec pc = connect(h, space, c, orbit.q_plus, orbit.energy, o).p_plus;
        b.row(i) = ((pa - pc) / (2.0 * hstep)).transpose();
    }
    return b;
}

RestrictedTwist restrict_twist(const Mat& b, const Mat& tangent_minus, const Mat& tangent_plus)
{
    RestrictedTwist r;
    r.form = tangent_minus.transpose() * b * tangent_plus;
    r.det = r.form.rows() == r.form.cols() ? (r.form.size() == 0 ? 1.0 : r.form.determinant()) : 0.0;
    return r;
}

ConjugateReport conjugate_test(const ClassicalHamiltonian& h, const CollisionOrbit& orbit, double conj_tol,
                               const ConnectOptions& options)
{
    const int d = h.dim();
    Shooter sh{h, orbit.q_minus, orbit.q_plus, orbit.energy, Vec(), Mat()};
    sh.recenter(h.velocity(orbit.q_minus, orbit.p_minus));
    Vec y = Vec::Zero(d);
    y[d - 1] = orbit.time;
    const int n = orbit.steps > 0 ? orbit.steps : step_count(orbit.time, options);
    ConjugateReport rep;
    rep.sensitivity = sh.jacobian(y, n, options.fd_step);
    Eigen::JacobiSVD<Mat> svd(rep.sensitivity);
    rep.max_singular = svd.singularValues()[0];
    rep.min_singular = svd.singularValues()[d - 1];
    rep.nondegenerate = rep.min_singular > conj_tol * rep.max_singular;
    return rep;
}

} // namespace degbill
