#include "degbill/singular.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace degbill {

namespace {

class SingularPotential final : public Potential {
public:
    explicit SingularPotential(SingularPerturbation sp) : sp_(std::move(sp)) {}

    double value(const Vec& q) const override
    {
        const double w = sp_.base().W(q);
        if (sp_.mu() == 0.0)
            return w;
        return w + sp_.mu() * eval_singular(sp_, q).value;
    }

    Vec gradient(const Vec& q) const override
    {
        Vec g = sp_.base().grad_W(q);
        if (sp_.mu() == 0.0)
            return g;
        return g + sp_.mu() * eval_singular(sp_, q).gradient;
    }

private:
    SingularPerturbation sp_;
};

} // namespace

SingularPerturbation SingularPerturbation::centers(ClassicalHamiltonian base, std::shared_ptr<const Scatterer> n,
                                                   double mu, std::vector<double> alphas)
{
    if (n->kind() != ScattererKind::PointSet)
        throw DomainError("n-center perturbation needs a point scatterer");
    if (alphas.size() != n->points().size())
        throw DomainError("n-center perturbation: one coefficient per center");
    for (double a : alphas)
        if (a == 0.0)
            throw DomainError("n-center perturbation: coefficients must be nonzero");
    SingularPerturbation sp(std::move(base), std::move(n), mu);
    sp.alphas_ = std::move(alphas);
    return sp;
}

SingularPerturbation SingularPerturbation::general(ClassicalHamiltonian base, std::shared_ptr<const Scatterer> n,
                                                   double mu, Coefficient phi)
{
    if (!phi)
        throw DomainError("singular perturbation: missing coefficient");
    SingularPerturbation sp(std::move(base), std::move(n), mu);
    sp.phi_ = std::move(phi);
    return sp;
}

SingularPerturbation SingularPerturbation::with_mu(double mu) const
{
    SingularPerturbation sp = *this;
    sp.mu_ = mu;
    return sp;
}

ClassicalHamiltonian SingularPerturbation::hamiltonian() const
{
    return ClassicalHamiltonian(base_.mass(), std::make_shared<SingularPotential>(*this), base_.magnetic_ptr());
}

double SingularPerturbation::strength(const Vec& q) const
{
    if (point_centers()) {
        double s = 0.0;
        for (double a : alphas_)
            s += std::abs(a);
        return s;
    }
    return std::abs(phi_(q, mu_));
}

SingularEval eval_singular(const SingularPerturbation& sp, const Vec& q)
{
    const Scatterer& n = sp.scatterer();
    const Mat& g = n.metric();
    SingularEval ev;
    ev.gradient = Vec::Zero(q.size());
    if (sp.point_centers()) {
        ev.distance = std::numeric_limits<double>::infinity();
        const auto& pts = n.points();
        for (size_t i = 0; i < pts.size(); ++i) {
            const Vec d = n.space().min_image(q - pts[i]);
            const Vec gd = g * d;
            const double r = std::sqrt(d.dot(gd));
            ev.distance = std::min(ev.distance, r);
            if (!(r > sp.exclusion_radius()))
                break;
            const double a = sp.alphas_[i];
            ev.value -= a / r;
            ev.gradient += a * gd / (r * r * r);
        }
    } else {
        const Projection pr = n.nearest(q);
        ev.distance = pr.distance;
        if (ev.distance > sp.exclusion_radius()) {
            const double phi = sp.phi_(q, sp.mu());
            const Vec grad_d = g * pr.offset / pr.distance;
            Vec grad_phi(q.size());
            for (Eigen::Index i = 0; i < q.size(); ++i) {
                const double hstep = 1e-6 * std::max(1.0, std::abs(q[i]));
                Vec a = q, b = q;
                a[i] += hstep;
                b[i] -= hstep;
                grad_phi[i] = (sp.phi_(a, sp.mu()) - sp.phi_(b, sp.mu())) / (2.0 * hstep);
            }
            ev.value = -phi / ev.distance;
            ev.gradient = -grad_phi / ev.distance + phi * grad_d / (ev.distance * ev.distance);
        }
    }
    if (!(ev.distance > sp.exclusion_radius())) {
        std::ostringstream msg;
        msg << "exclusion radius breached: d = " << ev.distance << " <= " << sp.exclusion_radius();
        throw CollisionError(msg.str());
    }
    return ev;
}

namespace {

double distance_to_n(const SingularPerturbation& sp, const Vec& q)
{
    const Scatterer& n = sp.scatterer();
    if (n.kind() == ScattererKind::PointSet) {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& p : n.points()) {
            const Vec x = n.space().min_image(q - p);
            d = std::min(d, std::sqrt(x.dot(n.metric() * x)));
        }
        return d;
    }
    return n.nearest(q).distance;
}

struct SundmanRk4 {
    const SingularPerturbation& sp;
    const ClassicalHamiltonian& h;
    double length;
    double v_ref;
    double floor;

    double g(const Vec& q, double* dist) const
    {
        const double d = distance_to_n(sp, q);
        if (dist)
            *dist = d;
        if (!(d > sp.exclusion_radius())) {
            std::ostringstream msg;
            msg << "exclusion radius breached: d = " << d << " <= " << sp.exclusion_radius();
            throw CollisionError(msg.str());
        }
        const double de = std::sqrt(d * d + floor * floor);
        const double pull = sp.mu() == 0.0 ? 0.0 : 2.0 * sp.mu() * sp.strength(q) / de;
        return (de * length / (de + length)) / std::sqrt(v_ref * v_ref + pull);
    }

    // d/ds (q, p, t) scaled by g; g = 1 for physical time
    void rhs(const Vec& q, const Vec& p, double scale, Vec& dq, Vec& dp) const
    {
        dq = scale * h.velocity(q, p);
        dp = -scale * h.grad_q(q, p);
    }

    PhaseState step(const PhaseState& s, double ds, bool physical, double* min_d) const
    {
        auto scale_at = [&](const Vec& q) {
            double d = 0.0;
            const double sc = physical ? 1.0 : g(q, &d);
            if (physical)
                d = distance_to_n(sp, q);
            if (min_d)
                *min_d = std::min(*min_d, d);
            if (physical && !(d > sp.exclusion_radius()))
                throw CollisionError("exclusion radius breached");
            return sc;
        };
        Vec k1q, k1p, k2q, k2p, k3q, k3p, k4q, k4p;
        const double g1 = scale_at(s.q);
        rhs(s.q, s.p, g1, k1q, k1p);
        const Vec q2 = s.q + 0.5 * ds * k1q, p2 = s.p + 0.5 * ds * k1p;
        const double g2 = scale_at(q2);
        rhs(q2, p2, g2, k2q, k2p);
        const Vec q3 = s.q + 0.5 * ds * k2q, p3 = s.p + 0.5 * ds * k2p;
        const double g3 = scale_at(q3);
        rhs(q3, p3, g3, k3q, k3p);
        const Vec q4 = s.q + ds * k3q, p4 = s.p + ds * k3p;
        const double g4 = scale_at(q4);
        rhs(q4, p4, g4, k4q, k4p);
        PhaseState r;
        r.q = s.q + ds / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        r.p = s.p + ds / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        r.t = s.t + ds / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
        return r;
    }
};

SingularTrajectory flow_once(const SingularPerturbation& sp, const ClassicalHamiltonian& h, const PhaseState& s0,
                             double duration, const SingularFlowOptions& o, double ds)
{
    const double e0 = h.energy(s0.q, s0.p);
    const double v0 = h.vector_norm(h.velocity(s0.q, s0.p));
    const SundmanRk4 rk{sp, h, o.length, std::max(v0, 1e-8), 1e-9 * o.length};
    SingularTrajectory tr;
    tr.ds = ds;
    tr.min_distance = distance_to_n(sp, s0.q);
    PhaseState cur = s0;
    const double t_end = s0.t + duration;
    if (o.keep_samples)
        tr.samples.push_back(cur);
    while (true) {
        if (tr.steps >= o.max_steps)
            throw IntegrationError("flow_singular: step budget exhausted");
        const double gq = rk.g(cur.q, nullptr);
        if (cur.t + gq * ds >= t_end) {
            const double rest = t_end - cur.t;
            if (rest > 0.0)
                cur = rk.step(cur, rest, true, &tr.min_distance);
            cur.t = t_end;
            ++tr.steps;
            break;
        }
        cur = rk.step(cur, ds, false, &tr.min_distance);
        ++tr.steps;
        if (o.keep_samples && tr.steps % static_cast<std::size_t>(std::max(1, o.sample_every)) == 0)
            tr.samples.push_back(cur);
    }
    if (o.keep_samples)
        tr.samples.push_back(cur);
    tr.final = cur;
    const double e1 = h.energy(cur.q, cur.p);
    const double kin = 0.5 * v0 * v0;
    tr.energy_drift = std::abs(e1 - e0) / std::max({std::abs(e0), kin, 1e-300});
    return tr;
}

} // namespace

SingularTrajectory flow_singular(const SingularPerturbation& sp, const PhaseState& s0, double duration,
                                 const SingularFlowOptions& o)
{
    if (duration < 0.0)
        throw DomainError("flow_singular: negative duration");
    const ClassicalHamiltonian h = sp.hamiltonian();
    if (!(distance_to_n(sp, s0.q) > sp.exclusion_radius()))
        throw CollisionError("flow_singular: start inside the exclusion radius");
    double ds = o.ds;
    SingularTrajectory tr;
    for (int r = 0; r <= o.max_refinements; ++r) {
        tr = flow_once(sp, h, s0, duration, o, ds);
        if (tr.energy_drift <= o.energy_tol)
            return tr;
        ds *= 0.5;
    }
    std::ostringstream msg;
    msg << "flow_singular: energy drift " << tr.energy_drift << " above " << o.energy_tol;
    throw IntegrationError(msg.str());
}

double impact_parameter(double mu, double alpha, double speed, double deflection)
{
    const double t = std::tan(0.5 * deflection);
    if (!(t > 0.0))
        throw GeometryError("impact_parameter: zero deflection");
    return mu * std::abs(alpha) / (speed * speed * t);
}

namespace {

Vec perp(const Vec& u, const Vec& w)
{
    return w - w.dot(u) * u;
}

double point_segment_distance(const Vec& x, const Vec& a, const Vec& b)
{
    const Vec ab = b - a;
    const double l2 = ab.squaredNorm();
    if (l2 == 0.0)
        return (x - a).norm();
    const double t = std::clamp((x - a).dot(ab) / l2, 0.0, 1.0);
    return (x - (a + t * ab)).norm();
}

double polyline_distance(const Vec& x, const std::vector<Vec>& poly)
{
    double d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + 1 < poly.size(); ++i)
        d = std::min(d, point_segment_distance(x, poly[i], poly[i + 1]));
    return d;
}

struct ExperimentSetup {
    int n = 0;
    int dim = 0;
    double energy = 0.0;
    std::vector<Vec> centers;  ///< lifted chain points
    std::vector<Vec> mids;     ///< chain midpoints of the links
    std::vector<Vec> dirs;     ///< unit directions of the links at the midpoints
    std::vector<Vec> u_in, u_out;
    std::vector<double> alpha, speed, deflection;
    std::vector<double> link_time;
    std::vector<std::vector<Vec>> half_paths; ///< mid_j -> center_{j+1} -> mid_{j+1}
};

ExperimentSetup setup_experiment(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                 const SingularPerturbation& sp)
{
    ExperimentSetup s;
    s.n = static_cast<int>(c.points.size());
    const ClassicalHamiltonian& h = dl.action->hamiltonian();
    s.dim = h.dim();
    s.energy = dl.action->energy();
    const ChainState st = evaluate_chain(dl, c, false);
    const int samples = 129;
    std::vector<std::vector<Vec>> paths;
    for (int j = 0; j < s.n; ++j) {
        const auto js = static_cast<size_t>(j);
        const Vec& a = st.positions[js];
        const Vec& b = st.positions[static_cast<size_t>((j + 1) % s.n)];
        const LinkEval& e = st.links[js];
        auto path = dl.action->sample_path(c.code[js], a, b, samples);
        // shift so that the link starts at the stored chain point
        const Vec shift = a - path.front();
        for (auto& p : path)
            p += shift;
        const int m = samples / 2;
        s.mids.push_back(path[static_cast<size_t>(m)]);
        const Vec v = (path[static_cast<size_t>(m + 1)] - path[static_cast<size_t>(m - 1)]);
        s.dirs.push_back(v / v.norm());
        s.link_time.push_back(e.time);
        paths.push_back(std::move(path));
        s.centers.push_back(a);
    }
    for (int j = 0; j < s.n; ++j) {
        const auto js = static_cast<size_t>(j);
        const Vec vin = h.velocity(st.positions[js], st.p_in[js]);
        const Vec vout = h.velocity(st.positions[js], st.p_out[js]);
        s.u_in.push_back(vin / vin.norm());
        s.u_out.push_back(vout / vout.norm());
        s.speed.push_back(0.5 * (vin.norm() + vout.norm()));
        s.deflection.push_back(std::acos(std::clamp(s.u_in.back().dot(s.u_out.back()), -1.0, 1.0)));
        s.alpha.push_back(sp.alphas()[static_cast<size_t>(c.points[js].component)]);
    }
    for (int j = 0; j < s.n; ++j) {
        const auto& p0 = paths[static_cast<size_t>(j)];
        const auto& p1 = paths[static_cast<size_t>((j + 1) % s.n)];
        std::vector<Vec> half(p0.begin() + samples / 2, p0.end());
        // next link translated to start where this one ends
        const Vec shift = p0.back() - p1.front();
        for (size_t i = 1; i <= static_cast<size_t>(samples / 2); ++i)
            half.push_back(p1[i] + shift);
        s.half_paths.push_back(std::move(half));
    }
    return s;
}

ShadowExperimentRow run_one(const ExperimentSetup& s, const ChainConfiguration& c, const SingularPerturbation& base,
                            double mu, const ShadowExperimentOptions& o)
{
    (void)c;
    ShadowExperimentRow row;
    row.mu = mu;
    const SingularPerturbation sp = base.with_mu(mu);
    const ClassicalHamiltonian h = sp.hamiltonian();
    const int n = s.n, d = s.dim, blk = 2 * d + 1;
    // predictor: asymptotes offset by the hyperbola impact parameters
    std::vector<double> b(static_cast<size_t>(n));
    std::vector<Vec> off_in(static_cast<size_t>(n)), off_out(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const auto js = static_cast<size_t>(j);
        b[js] = impact_parameter(mu, s.alpha[js], s.speed[js], s.deflection[js]);
        const double sgn = s.alpha[js] > 0.0 ? 1.0 : -1.0;
        Vec bi = -perp(s.u_in[js], s.u_out[js]);
        Vec bo = perp(s.u_out[js], s.u_in[js]);
        off_in[js] = sgn * b[js] * bi / bi.norm();
        off_out[js] = sgn * b[js] * bo / bo.norm();
    }
    Vec x(n * blk);
    for (int j = 0; j < n; ++j) {
        const auto js = static_cast<size_t>(j);
        const auto jn = static_cast<size_t>((j + 1) % n);
        const Vec q = s.mids[js] + 0.5 * (off_out[js] + off_in[jn]);
        const double len = (s.centers[jn] - s.centers[js]).norm();
        Vec u = s.dirs[js] + (off_in[jn] - off_out[js]) / std::max(len, 1e-12);
        u /= h.vector_norm(u);
        const double kin = s.energy - h.W(q);
        if (!(kin > 0.0))
            throw DomainError("shadow_experiment: section outside the energy domain");
        const Vec p = h.momentum(q, std::sqrt(2.0 * kin) * u);
        x.segment(j * blk, d) = q;
        x.segment(j * blk + d, d) = p;
        x[j * blk + 2 * d] = 0.5 * (s.link_time[js] + s.link_time[jn]);
    }
    SingularFlowOptions fo = o.flow;
    fo.keep_samples = false;
    auto flow = [&](const Vec& xj, double tau) {
        PhaseState st{xj.head(d), xj.segment(d, d), 0.0};
        return flow_singular(sp, st, tau, fo);
    };
    const int rows = n * (2 * d + 1) + 1;
    auto residual = [&](const Vec& xx, std::vector<SingularTrajectory>* trs) {
        Vec f(rows);
        for (int j = 0; j < n; ++j) {
            const auto js = static_cast<size_t>(j);
            const int jn = (j + 1) % n;
            const Vec xj = xx.segment(j * blk, 2 * d);
            const SingularTrajectory tr = flow(xj, xx[j * blk + 2 * d]);
            f.segment(j * (2 * d + 1), d) = tr.final.q - xx.segment(jn * blk, d);
            f.segment(j * (2 * d + 1) + d, d) = tr.final.p - xx.segment(jn * blk + d, d);
            f[j * (2 * d + 1) + 2 * d] = (xj.head(d) - s.mids[js]).dot(s.dirs[js]);
            if (trs)
                trs->push_back(tr);
        }
        f[rows - 1] = h.energy(xx.head(d), xx.segment(d, d)) - s.energy;
        return f;
    };
    Vec f;
    try {
        f = residual(x, nullptr);
    } catch (const Error& e) {
        row.message = std::string("predictor: ") + e.what();
        return row;
    }
    const double hq = o.fd_scale * mu;
    for (row.iterations = 0; row.iterations <= o.max_iter; ++row.iterations) {
        row.residual = f.cwiseAbs().maxCoeff();
        if (row.residual <= o.tol) {
            row.converged = true;
            break;
        }
        if (row.iterations == o.max_iter)
            break;
        Mat jac = Mat::Zero(rows, n * blk);
        try {
            for (int j = 0; j < n; ++j) {
                const int jn = (j + 1) % n;
                const int r0 = j * (2 * d + 1);
                const Vec xj = x.segment(j * blk, 2 * d);
                const double tau = x[j * blk + 2 * d];
                for (int k = 0; k < 2 * d; ++k) {
                    Vec a = xj, bb = xj;
                    a[k] += hq;
                    bb[k] -= hq;
                    const PhaseState fa = flow(a, tau).final, fb = flow(bb, tau).final;
                    jac.block(r0, j * blk + k, d, 1) = (fa.q - fb.q) / (2.0 * hq);
                    jac.block(r0 + d, j * blk + k, d, 1) = (fa.p - fb.p) / (2.0 * hq);
                }
                const PhaseState end = flow(xj, tau).final;
                jac.block(r0, j * blk + 2 * d, d, 1) = h.velocity(end.q, end.p);
                jac.block(r0 + d, j * blk + 2 * d, d, 1) = -h.grad_q(end.q, end.p);
                jac.block(r0, jn * blk, 2 * d, 2 * d) -= Mat::Identity(2 * d, 2 * d);
                jac.block(r0 + 2 * d, j * blk, 1, d) = s.dirs[static_cast<size_t>(j)].transpose();
            }
            const Vec q0 = x.head(d), p0 = x.segment(d, d);
            jac.block(rows - 1, 0, 1, d) = h.grad_q(q0, p0).transpose();
            jac.block(rows - 1, d, 1, d) = h.velocity(q0, p0).transpose();
        } catch (const Error& e) {
            row.message = std::string("jacobian: ") + e.what();
            return row;
        }
        // column scaling, then least squares
        Vec scale(jac.cols());
        for (Eigen::Index k = 0; k < jac.cols(); ++k) {
            scale[k] = jac.col(k).norm();
            if (scale[k] == 0.0)
                scale[k] = 1.0;
        }
        const Mat js = jac * scale.cwiseInverse().asDiagonal();
        const Vec step = scale.cwiseInverse().asDiagonal() * Vec(js.colPivHouseholderQr().solve(-f));
        double alpha = 1.0;
        bool accepted = false;
        const double f0 = f.norm();
        for (int k = 0; k < 30; ++k) {
            const Vec trial = x + alpha * step;
            try {
                const Vec ft = residual(trial, nullptr);
                if (ft.norm() < f0) {
                    x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            } catch (const Error&) {
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            row.residual = f.cwiseAbs().maxCoeff();
            row.message = "line search failed";
            break;
        }
    }
    if (!row.converged) {
        if (row.message.empty())
            row.message = "no convergence";
        return row;
    }
    // error against the chain
    SingularFlowOptions so = o.flow;
    so.keep_samples = true;
    row.min_distance = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        const Vec xj = x.segment(j * blk, 2 * d);
        const double tau = x[j * blk + 2 * d];
        const SingularTrajectory tr = flow_singular(sp, {xj.head(d), xj.segment(d, d), 0.0}, tau, so);
        row.min_distance = std::min(row.min_distance, tr.min_distance);
        row.energy_drift = std::max(row.energy_drift, tr.energy_drift);
        for (const auto& smp : tr.samples)
            row.sup_error = std::max(row.sup_error, polyline_distance(smp.q, s.half_paths[static_cast<size_t>(j)]));
        row.sections.push_back({xj.head(d), xj.segment(d, d), 0.0});
        row.times.push_back(tau);
    }
    row.message = "ok";
    return row;
}

} // namespace

std::vector<ShadowExperimentRow> shadow_experiment(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                                   const SingularPerturbation& sp, const std::vector<double>& mus,
                                                   const ShadowExperimentOptions& o)
{
    if (c.boundary != Boundary::Periodic)
        throw DomainError("shadow_experiment: periodic chains only");
    if (!sp.point_centers())
        throw DomainError("shadow_experiment: point centers only");
    c.validate();
    AdmissibilityOptions ao = o.admissibility;
    bool attracting = false;
    for (double a : sp.alphas())
        attracting = attracting || a > 0.0;
    ao.attracting = ao.attracting || attracting;
    for (const auto& r : admissible(dl, c, ao)) {
        if (!r.admissible) {
            std::ostringstream msg;
            msg << "inadmissible chain at collision " << r.index << ": |dp| = " << r.jump
                << (r.straight_reflection ? ", straight reflection" : "");
            throw GeometryError(msg.str());
        }
    }
    const ExperimentSetup setup = setup_experiment(dl, c, sp);
    std::vector<ShadowExperimentRow> rows(mus.size());
    const int jobs = std::max(1, std::min<int>(o.jobs, static_cast<int>(mus.size())));
    auto work = [&](int t) {
        for (size_t i = static_cast<size_t>(t); i < mus.size(); i += static_cast<size_t>(jobs)) {
            try {
                rows[i] = run_one(setup, c, sp, mus[i], o);
            } catch (const Error& e) {
                rows[i].mu = mus[i];
                rows[i].message = e.what();
            }
        }
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back(work, t);
        for (auto& th : pool)
            th.join();
    }
    return rows;
}

} // namespace degbill
