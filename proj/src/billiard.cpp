#include "degbill/billiard.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace degbill {

BilliardDomain::BilliardDomain(ClassicalHamiltonian h, std::shared_ptr<const Scatterer> n, double eps,
                               std::optional<BoxWalls> box)
    : h_(std::move(h)), n_(std::move(n)), eps_(eps), box_(std::move(box))
{
    if (h_.dim() != n_->ambient_dim())
        throw DomainError("billiard domain: dimension mismatch");
    if (eps_ < 0.0)
        throw DomainError("billiard domain: eps must be nonnegative");
    if (eps_ >= n_->tube_radius())
        throw DomainError("billiard domain: eps above the tube radius");
    if (box_ && (box_->lo.size() != h_.dim() || box_->hi.size() != h_.dim()))
        throw DomainError("billiard domain: wall dimension mismatch");
}

BilliardDomain::Constraint BilliardDomain::constraint(const Vec& q) const
{
    Constraint c;
    const Projection pr = n_->nearest(q);
    c.value = pr.distance - eps_;
    c.kind = 0;
    c.index = pr.component;
    if (pr.distance > 0.0)
        c.grad = n_->metric() * pr.offset / pr.distance;
    else
        c.grad = Vec::Zero(q.size());
    if (box_) {
        const double m = margin();
        for (Eigen::Index i = 0; i < q.size(); ++i) {
            const double lo = q[i] - (box_->lo[i] + m);
            const double hi = (box_->hi[i] - m) - q[i];
            if (lo < c.value) {
                c.value = lo;
                c.grad = Vec::Unit(q.size(), i);
                c.kind = 1;
                c.index = static_cast<int>(2 * i);
            }
            if (hi < c.value) {
                c.value = hi;
                c.grad = -Vec::Unit(q.size(), i);
                c.kind = 1;
                c.index = static_cast<int>(2 * i + 1);
            }
        }
    }
    return c;
}

Vec reflect(const ClassicalHamiltonian& h, const Vec& q, const Vec& p, const Vec& n, double graze_tol)
{
    const Vec v = h.velocity(q, p);
    const double vn = v.dot(n);
    const double nn = n.dot(h.inverse_mass() * n);
    if (!(nn > 0.0))
        throw GeometryError("reflection normal is zero");
    if (std::abs(vn) <= graze_tol * h.vector_norm(v) * std::sqrt(nn))
        throw GeometryError("tangential incidence");
    return p - 2.0 * vn / nn * n;
}

namespace {

struct Mover {
    const BilliardDomain& dom;
    const BilliardOptions& o;
    bool free;

    PhaseState advance(const PhaseState& s, double dt) const
    {
        if (free) {
            PhaseState r = s;
            r.q = s.q + dt * dom.hamiltonian().velocity(s.q, s.p);
            r.t = s.t + dt;
            return r;
        }
        return symplectic_step(dom.hamiltonian(), s, dt, 4);
    }

    double g(const PhaseState& s) const { return dom.constraint(s.q).value; }

    double gdot(const PhaseState& s, const BilliardDomain::Constraint& c) const
    {
        return c.grad.dot(dom.hamiltonian().velocity(s.q, s.p));
    }
};

} // namespace

BilliardRun billiard_trajectory(const BilliardDomain& dom, const PhaseState& s0, int n_bounces,
                                const BilliardOptions& o)
{
    const ClassicalHamiltonian& h = dom.hamiltonian();
    const AmbientSpace& space = dom.space();
    const Mover mv{dom, o, h.is_free()};
    BilliardRun run;
    run.total_shift = IVec::Zero(space.is_torus() ? space.dim() : 0);
    PhaseState cur = s0;
    const double scale = dom.eps() > 0.0 ? dom.eps() : (dom.box() ? (dom.box()->hi - dom.box()->lo).minCoeff() : 1.0);
    {
        const double g0 = mv.g(cur);
        if (g0 < -1e-9 * scale)
            throw DomainError("billiard start lies outside Omega_eps");
    }
    if (o.keep_path)
        run.path.push_back(cur);
    bool leaving = true; // the start may sit on the boundary
    int counted = 0;
    long step_index = 0;
    while (counted < n_bounces) {
        const double remaining = s0.t + o.max_time - cur.t;
        if (!(remaining > 0.0))
            break;
        const double speed = h.vector_norm(h.velocity(cur.q, cur.p));
        if (!(speed > 0.0))
            throw IntegrationError("billiard: zero velocity");
        double dt = o.step_factor * scale / speed;
        if (!mv.free)
            dt = std::min(dt, o.flow_step);
        dt = std::min(dt, remaining);
        const BilliardDomain::Constraint c0 = dom.constraint(cur.q);
        const double g0 = leaving ? std::max(c0.value, 0.0) : c0.value;
        PhaseState nxt = mv.advance(cur, dt);
        const BilliardDomain::Constraint c1 = dom.constraint(nxt.q);
        double a = 0.0, b = -1.0;
        if (c1.value <= 0.0 && g0 >= 0.0 && !(leaving && c1.value > -1e-15 * scale && mv.gdot(nxt, c1) > 0)) {
            b = dt;
        } else if (c1.value > 0.0) {
            // Hermite cubic in t through (g0, g0'), (g1, g1'): look for a dip below zero.
            const double d0 = mv.gdot(cur, c0) * dt;
            const double d1 = mv.gdot(nxt, c1) * dt;
            if (!leaving && d0 < 0.0 && d1 > 0.0) {
                double lo = 0.0, hi = 1.0;
                auto hd = [&](double s) {
                    const double s2 = s * s;
                    return (6 * s2 - 6 * s) * g0 + (3 * s2 - 4 * s + 1) * d0 + (-6 * s2 + 6 * s) * c1.value +
                           (3 * s2 - 2 * s) * d1;
                };
                for (int k = 0; k < 60; ++k) {
                    const double mid = 0.5 * (lo + hi);
                    (hd(mid) < 0.0 ? lo : hi) = mid;
                }
                const double sm = 0.5 * (lo + hi);
                const double s2 = sm * sm, s3 = s2 * sm;
                const double gm = (2 * s3 - 3 * s2 + 1) * g0 + (s3 - 2 * s2 + sm) * d0 + (-2 * s3 + 3 * s2) * c1.value +
                                  (s3 - s2) * d1;
                if (gm < 0.25 * std::abs(g0)) {
                    // Refine on a fine grid to find an actual sign change.
                    const int sub = 64;
                    double prev = 0.0;
                    for (int k = 1; k <= sub; ++k) {
                        const double tk = dt * k / sub;
                        if (mv.g(mv.advance(cur, tk)) <= 0.0) {
                            a = prev;
                            b = tk;
                            break;
                        }
                        prev = tk;
                    }
                }
            }
        }
        if (b < 0.0) {
            cur = std::move(nxt);
            leaving = leaving && c1.value < 1e-9 * scale;
            if (o.keep_path && (++step_index % std::max(1, o.path_every) == 0))
                run.path.push_back(cur);
            continue;
        }
        // Bisection to time_tol, then Newton polish on the active constraint.
        while (b - a > o.time_tol) {
            const double m = 0.5 * (a + b);
            if (mv.g(mv.advance(cur, m)) > 0.0)
                a = m;
            else
                b = m;
        }
        double tstar = b;
        for (int k = 0; k < 4; ++k) {
            const PhaseState st = mv.advance(cur, tstar);
            const BilliardDomain::Constraint cs = dom.constraint(st.q);
            const double gd = mv.gdot(st, cs);
            if (gd == 0.0)
                break;
            const double nt = tstar - cs.value / gd;
            if (!(nt > a - 1e-9 * dt && nt < b + 1e-9 * dt))
                break;
            tstar = nt;
        }
        PhaseState hit = mv.advance(cur, tstar);
        const BilliardDomain::Constraint ch = dom.constraint(hit.q);
        BilliardEvent ev;
        ev.t = hit.t;
        ev.kind = ch.kind;
        ev.index = ch.index;
        ev.normal = ch.grad;
        ev.p_before = hit.p;
        ev.p_after = reflect(h, hit.q, hit.p, ch.grad, o.graze_tol);
        ev.shift = IVec::Zero(space.is_torus() ? space.dim() : 0);
        if (space.is_torus()) {
            const Vec wrapped = space.wrap(hit.q);
            Vec near = wrapped;
            if (ch.kind == 0) {
                const Projection pr = dom.scatterer().nearest(hit.q);
                near = dom.scatterer().embed(pr.component, pr.x) + pr.offset;
            }
            for (int i = 0; i < space.dim(); ++i)
                ev.shift[i] = static_cast<int>(std::llround((hit.q[i] - near[i]) / space.periods()[i]));
            for (int i = 0; i < space.dim(); ++i)
                hit.q[i] -= ev.shift[i] * space.periods()[i];
            run.total_shift += ev.shift;
        }
        ev.q = hit.q;
        hit.p = ev.p_after;
        run.events.push_back(ev);
        if (o.keep_path)
            run.path.push_back(hit);
        cur = hit;
        leaving = true;
        if (ev.kind == 0 || o.count_walls)
            ++counted;
    }
    run.final = cur;
    return run;
}

double generating_eps(const DiscreteLagrangian& dl, const Symbol& k, const ChainPoint& x_minus,
                      const ChainPoint& x_plus, double eps, double margin_factor)
{
    auto sm = std::dynamic_pointer_cast<const ScattererModel>(dl.points);
    if (!sm)
        throw DomainError("generating_eps needs a DLS on the scatterer chart");
    const TubeModel tube(sm->scatterer_ptr(), eps);
    const auto act = action_with_margin(dl.action, margin_factor * eps);
    return act->evaluate(k, tube.position(x_minus), tube.position(x_plus), false).value;
}

double generating_expansion(const DiscreteLagrangian& dl, const Symbol& k, const ChainPoint& x_minus,
                            const ChainPoint& x_plus, double eps)
{
    auto sm = std::dynamic_pointer_cast<const ScattererModel>(dl.points);
    if (!sm)
        throw DomainError("generating_expansion needs a DLS on the scatterer chart");
    const Scatterer& n = sm->scatterer();
    const LinkEval e = dl.action->evaluate(k, dl.points->position(x_minus), dl.points->position(x_plus), false);
    const Vec nm = n.frames(x_minus.component, x_minus.x).normal * x_minus.s;
    const Vec np = n.frames(x_plus.component, x_plus.x).normal * x_plus.s;
    // p- = -d_minus, p+ = d_plus
    return e.value + eps * e.d_minus.dot(nm) + eps * e.d_plus.dot(np);
}

ChainConfiguration shadow_predictor(const DiscreteLagrangian& dl, const ChainConfiguration& c)
{
    auto sm = std::dynamic_pointer_cast<const ScattererModel>(dl.points);
    if (!sm)
        throw DomainError("shadow predictor needs a DLS on the scatterer chart");
    const Scatterer& n = sm->scatterer();
    const ChainState st = evaluate_chain(dl, c, false);
    ChainConfiguration r = c;
    for (size_t j = 0; j < c.points.size(); ++j) {
        const Vec dp = st.p_out[j] - st.p_in[j];
        const Vec proj = n.frames(c.points[j].component, c.points[j].x).normal.transpose() * dp;
        const double nrm = proj.norm();
        if (!(nrm > 0.0))
            throw GeometryError("jump condition violated: normal momentum jump is zero");
        r.points[j].s = proj / nrm;
    }
    return r;
}

ShadowChain shadow_solve(const DiscreteLagrangian& dl, const ChainConfiguration& c, double eps,
                         const ShadowOptions& o)
{
    auto sm = std::dynamic_pointer_cast<const ScattererModel>(dl.points);
    if (!sm)
        throw DomainError("shadow_solve needs a DLS on the scatterer chart");
    const auto rep = admissible(dl, c, o.admissibility);
    for (const auto& r : rep) {
        if (!r.admissible) {
            std::ostringstream msg;
            msg << "inadmissible chain at collision " << r.index << ": |dp| = " << r.jump;
            throw GeometryError(msg.str());
        }
    }
    ShadowChain sc;
    sc.eps = eps;
    sc.dl.action = action_with_margin(dl.action, o.margin_factor * eps);
    sc.dl.points = std::make_shared<TubeModel>(sm->scatterer_ptr(), eps);
    const ChainConfiguration start = shadow_predictor(dl, c);
    NewtonOptions no = o.newton;
    if (no.tol < 0.0)
        no.tol = 1e-10 * std::sqrt(2.0 * std::abs(dl.action->energy()));
    sc.newton = newton_chain(sc.dl, start, no);
    // polish below the acceptance tolerance; stop quietly at the roundoff floor
    try {
        NewtonOptions po = no;
        po.tol = 1e-3 * no.tol;
        po.max_iter = 3;
        NewtonResult r = newton_chain(sc.dl, sc.newton.chain, po);
        if (r.residual_norm < sc.newton.residual_norm) {
            r.iterations += sc.newton.iterations;
            sc.newton = std::move(r);
        }
    } catch (const Error&) {
    }
    sc.chain = sc.newton.chain;
    sc.converged = sc.newton.converged;
    for (const auto& p : sc.chain.points)
        sc.tube_points.push_back(sc.dl.points->position(p));
    return sc;
}

double shadow_error(const DiscreteLagrangian& dl, const ChainConfiguration& c, const ShadowChain& sc, int samples)
{
    if (c.points.size() != sc.chain.points.size() || c.code != sc.chain.code)
        throw DomainError("shadow_error: codes differ");
    const ClassicalHamiltonian& h = dl.action->hamiltonian();
    const AmbientSpace& space = dl.action->space();
    double err = 0.0;
    for (size_t j = 0; j < c.points.size(); ++j) {
        const Vec a = dl.points->position(c.points[j]);
        const Vec b = dl.points->position(sc.chain.points[j]);
        err = std::max(err, h.vector_norm(space.min_image(a - b)));
    }
    const ChainState base = evaluate_chain(dl, c, false);
    const ChainState shad = evaluate_chain(sc.dl, sc.chain, false);
    const int nl = c.links();
    const int np = static_cast<int>(c.points.size());
    auto ends = [&](const ChainConfiguration& cc, const ChainState& st, int j) {
        Vec t, hd;
        if (cc.boundary == Boundary::Periodic) {
            t = st.positions[static_cast<size_t>(j)];
            hd = st.positions[static_cast<size_t>((j + 1) % np)];
        } else {
            t = j == 0 ? cc.start : st.positions[static_cast<size_t>(j - 1)];
            hd = j == nl - 1 ? cc.end : st.positions[static_cast<size_t>(j)];
        }
        return std::make_pair(t, hd);
    };
    for (int j = 0; j < nl; ++j) {
        const auto [t0, h0] = ends(c, base, j);
        const auto [t1, h1] = ends(sc.chain, shad, j);
        const auto pa = dl.action->sample_path(c.code[static_cast<size_t>(j)], t0, h0, samples);
        const auto pb = sc.dl.action->sample_path(c.code[static_cast<size_t>(j)], t1, h1, samples);
        for (size_t i = 0; i < pa.size() && i < pb.size(); ++i)
            err = std::max(err, h.vector_norm(space.min_image(pa[i] - pb[i])));
    }
    return err;
}

PhaseState shadow_state(const ShadowChain& sc, int j)
{
    const ChainState st = evaluate_chain(sc.dl, sc.chain, false);
    return {st.positions[static_cast<size_t>(j)], st.p_out[static_cast<size_t>(j)], 0.0};
}

double replay_deviation(const BilliardDomain& dom, const ShadowChain& sc, const BilliardOptions& o, bool per_link)
{
    const ChainState st = evaluate_chain(sc.dl, sc.chain, false);
    const int np = static_cast<int>(sc.chain.points.size());
    if (np == 0)
        return 0.0;
    BilliardOptions bo = o;
    bo.count_walls = false;
    const int nb = sc.chain.boundary == Boundary::Periodic ? np : np - 1;
    const AmbientSpace& space = dom.space();
    double dev = 0.0;
    auto compare = [&](const BilliardEvent& ev, int j) {
        dev = std::max(dev, space.min_image(ev.q - st.positions[static_cast<size_t>(j)]).norm());
        dev = std::max(dev, (ev.p_after - st.p_out[static_cast<size_t>(j)]).norm());
    };
    if (per_link) {
        for (int j = 0; j < nb; ++j) {
            const PhaseState s0{st.positions[static_cast<size_t>(j)], st.p_out[static_cast<size_t>(j)], 0.0};
            const BilliardRun run = billiard_trajectory(dom, s0, 1, bo);
            if (run.events.empty() || run.events.back().kind != 0)
                return std::numeric_limits<double>::infinity();
            compare(run.events.back(), (j + 1) % np);
        }
        return dev;
    }
    const PhaseState s0{st.positions[0], st.p_out[0], 0.0};
    const BilliardRun run = billiard_trajectory(dom, s0, nb, bo);
    int k = 0;
    for (const auto& ev : run.events) {
        if (ev.kind != 0)
            continue;
        ++k;
        compare(ev, k % np);
    }
    if (k < nb)
        return std::numeric_limits<double>::infinity();
    return dev;
}

double endpoint_deviation(const BilliardDomain& dom, const ShadowChain& sc, const BilliardOptions& o)
{
    const ChainConfiguration& c = sc.chain;
    if (c.boundary != Boundary::Fixed)
        return 0.0;
    const ChainState st = evaluate_chain(sc.dl, c, false);
    if (c.points.empty())
        return 0.0;
    BilliardOptions bo = o;
    bo.count_walls = false;
    auto travel = [&](const PhaseState& s0, double time) {
        bo.max_time = time;
        const BilliardRun run = billiard_trajectory(dom, s0, 1, bo);
        for (const auto& ev : run.events)
            if (ev.kind == 0)
                return Vec(Vec::Constant(s0.q.size(), std::numeric_limits<double>::infinity()));
        return run.final.q;
    };
    // first link backwards from point 0, last link forwards from the last point
    const Vec a = travel({st.positions.front(), -st.p_in.front(), 0.0}, st.links.front().time);
    const Vec b = travel({st.positions.back(), st.p_out.back(), 0.0}, st.links.back().time);
    return std::max((a - c.start).norm(), (b - c.end).norm());
}

namespace {

/// Post-reflection coordinates xi = (chart of Sigma_eps, tangential velocity) at a shadow point.
struct EventChart {
    const BilliardDomain& dom;
    const TubeModel& tube;
    ChainPoint ref;
    Mat tb;   ///< M-orthonormal basis of the tangent space of Sigma at ref
    double E;

    int dim() const { return static_cast<int>(tb.cols()); }

    Vec unit_normal(const ChainPoint& cp) const
    {
        return dom.scatterer().frames(cp.component, cp.x).normal * cp.s;
    }

    PhaseState decode(const Vec& xi) const
    {
        const int k = dim();
        const ChainPoint cp = tube.retract(ref, xi.head(k));
        const Vec z = tube.position(cp);
        const Vec nh = unit_normal(cp);
        const ClassicalHamiltonian& h = dom.hamiltonian();
        const Vec vt = tb * xi.tail(k);
        const double kin = 2.0 * (E - h.W(z));
        const double b = 2.0 * vt.dot(h.mass() * nh);
        const double c = vt.dot(h.mass() * vt) - kin;
        const double disc = b * b - 4.0 * c;
        if (disc < 0.0)
            throw GeometryError("event chart: no outgoing momentum");
        const double nu = 0.5 * (-b + std::sqrt(disc));
        return {z, h.mass() * (vt + nu * nh), 0.0};
    }

    Vec encode(const Vec& q, const Vec& p) const
    {
        const int k = dim();
        const Scatterer& n = dom.scatterer();
        const Projection pr = n.nearest(q, ref.x);
        if (pr.component != ref.component)
            throw GeometryError("event chart: collision with an unexpected component");
        const Frames f = n.frames(pr.component, pr.x);
        Vec s = f.normal.transpose() * (n.metric() * pr.offset);
        s /= s.norm();
        const int m = n.dim();
        Vec xi(2 * k);
        if (m > 0)
            xi.head(m) = pr.x - ref.x;
        const int ks = k - m;
        if (ks > 0) {
            const Mat t = TubeModel::sphere_basis(ref.s);
            xi.segment(m, ks) = t.transpose() * s / ref.s.dot(s);
        }
        const Vec v = dom.hamiltonian().velocity(q, p);
        const Vec nh = f.normal * s;
        Mat a(v.size(), k + 1);
        a.leftCols(k) = tb;
        a.col(k) = nh;
        const Vec sol = a.fullPivLu().solve(v);
        xi.tail(k) = sol.head(k);
        return xi;
    }
};

Mat richardson_jacobian(const std::function<Vec(const Vec&)>& f, int n, double h)
{
    auto central = [&](double step) {
        Mat jm;
        for (int j = 0; j < n; ++j) {
            Vec a = Vec::Zero(n), b = Vec::Zero(n);
            a[j] = step;
            b[j] = -step;
            const Vec col = (f(a) - f(b)) / (2.0 * step);
            if (jm.size() == 0)
                jm.resize(col.size(), n);
            jm.col(j) = col;
        }
        return jm;
    };
    const Mat d1 = central(h);
    const Mat d2 = central(0.5 * h);
    return (4.0 * d2 - d1) / 3.0;
}

} // namespace

LyapunovResult lyapunov_estimate(const BilliardDomain& dom, const ShadowChain& sc, const LyapunovOptions& o)
{
    if (sc.chain.boundary != Boundary::Periodic)
        throw DomainError("lyapunov_estimate needs a periodic shadow chain");
    const ClassicalHamiltonian& h = dom.hamiltonian();
    if (h.has_magnetic())
        throw DomainError("lyapunov_estimate: magnetic terms are not supported by the reversed map");
    auto tube = std::dynamic_pointer_cast<const TubeModel>(sc.dl.points);
    if (!tube)
        throw DomainError("lyapunov_estimate needs a shadow chain on the tube");
    const int np = static_cast<int>(sc.chain.points.size());
    const double E = sc.dl.action->energy();
    const ChainState st = evaluate_chain(sc.dl, sc.chain, false);

    BilliardOptions bo = o.billiard;
    bo.count_walls = false;
    bo.keep_path = false;

    LyapunovResult res;
    {
        res.closure_error = replay_deviation(dom, sc, bo, true);
        if (!(res.closure_error <= o.closure_tol)) {
            std::ostringstream msg;
            msg << "periodic shadow orbit does not close: error " << res.closure_error;
            throw ConvergenceError(msg.str());
        }
    }

    std::vector<EventChart> charts;
    for (int j = 0; j < np; ++j) {
        const ChainPoint& cp = sc.chain.points[static_cast<size_t>(j)];
        const Mat jm = tube->jacobian(cp);
        charts.push_back({dom, *tube, cp, metric_frames(jm, h.mass()).tangent, E});
    }
    const int k = charts[0].dim();

    auto next_event = [&](const PhaseState& s) {
        const BilliardRun run = billiard_trajectory(dom, s, 1, bo);
        if (run.events.empty() || run.events.back().kind != 0)
            throw GeometryError("event map: no collision with the scatterer");
        return run.events.back();
    };

    const double h_fd = o.fd_scale * dom.eps();
    Mat fwd = Mat::Identity(2 * k, 2 * k);
    Mat bwd = Mat::Identity(2 * k, 2 * k);
    for (int j = 0; j < np; ++j) {
        const EventChart& a = charts[static_cast<size_t>(j)];
        const EventChart& b = charts[static_cast<size_t>((j + 1) % np)];
        const Vec xa = a.encode(st.positions[static_cast<size_t>(j)], st.p_out[static_cast<size_t>(j)]);
        const Vec xb = b.encode(st.positions[static_cast<size_t>((j + 1) % np)],
                                st.p_out[static_cast<size_t>((j + 1) % np)]);
        auto fmap = [&](const Vec& dxi) {
            const BilliardEvent ev = next_event(a.decode(xa + dxi));
            return b.encode(ev.q, ev.p_after);
        };
        fwd = richardson_jacobian(fmap, 2 * k, h_fd) * fwd;
        if (o.backward) {
            auto bmap = [&](const Vec& dxi) {
                const Vec xi = xb + dxi;
                const PhaseState s = b.decode(xi);
                const Vec nh = b.unit_normal(b.tube.retract(b.ref, xi.head(k)));
                const Vec pin = reflect(h, s.q, s.p, h.mass() * nh);
                const BilliardEvent ev = next_event({s.q, -pin, 0.0});
                return a.encode(ev.q, -ev.p_before);
            };
            bwd = bwd * richardson_jacobian(bmap, 2 * k, h_fd);
        }
    }
    res.monodromy = fwd;
    Eigen::EigenSolver<Mat> ef(fwd, false);
    std::vector<double> lf;
    for (int i = 0; i < 2 * k; ++i)
        lf.push_back(std::log(std::abs(ef.eigenvalues()[i])) / np);
    std::sort(lf.begin(), lf.end(), std::greater<>());
    if (o.backward) {
        Eigen::EigenSolver<Mat> eb(bwd, false);
        std::vector<double> lb;
        for (int i = 0; i < 2 * k; ++i)
            lb.push_back(-std::log(std::abs(eb.eigenvalues()[i])) / np);
        std::sort(lb.begin(), lb.end(), std::greater<>());
        for (int i = 0; i < k; ++i)
            res.exponents.push_back(lf[static_cast<size_t>(i)]);
        for (int i = k; i < 2 * k; ++i)
            res.exponents.push_back(lb[static_cast<size_t>(i)]);
    } else {
        res.exponents = lf;
    }
    const double large = o.large_factor * std::log(1.0 / dom.eps());
    for (double l : res.exponents)
        if (std::abs(l) >= large)
            ++res.large_count;
    return res;
}

} // namespace degbill
