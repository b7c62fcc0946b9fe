#include "degbill/kepler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace degbill {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

double angle_ccw(const Vec& a, const Vec& b)
{
    const double cr = a[0] * b[1] - a[1] * b[0];
    const double dt = a.dot(b);
    double t = std::atan2(cr, dt);
    if (t < 0.0)
        t += kTwoPi;
    return t;
}

void check_planar(const Vec& x, const char* what)
{
    if (x.size() != 2)
        throw DomainError(std::string(what) + ": Kepler arcs are planar");
}

// 8-point Gauss-Legendre on [-1, 1]
constexpr std::array<double, 8> kGlx{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                     -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                     0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGlw{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                     0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                     0.2223810344533745, 0.1012285362903763};

} // namespace

double solve_kepler_hyperbolic(double mean_anomaly, double e)
{
    if (!(e > 1.0))
        throw DomainError("solve_kepler_hyperbolic: eccentricity must exceed 1");
    // e sinh H - H = M is increasing in H; bracket, then safeguarded Newton
    double lo = -1.0, hi = 1.0;
    auto f = [&](double x) { return e * std::sinh(x) - x - mean_anomaly; };
    while (f(lo) > 0.0)
        lo *= 2.0;
    while (f(hi) < 0.0)
        hi *= 2.0;
    double x = std::asinh(mean_anomaly / e);
    if (!(x > lo && x < hi))
        x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double fx = f(x);
        if (fx > 0.0)
            hi = x;
        else
            lo = x;
        const double d = e * std::cosh(x) - 1.0;
        double nx = x - fx / d;
        if (!(nx > lo && nx < hi))
            nx = 0.5 * (lo + hi);
        if (std::abs(nx - x) <= 1e-15 * std::max(1.0, std::abs(x)))
            return nx;
        x = nx;
    }
    return x;
}

double solve_kepler(double mean_anomaly, double e)
{
    if (e < 0.0)
        throw DomainError("solve_kepler: negative eccentricity");
    if (e > 1.0)
        return solve_kepler_hyperbolic(mean_anomaly, e);
    if (e == 1.0)
        throw DomainError("solve_kepler: parabolic orbit");
    if (e == 0.0)
        return mean_anomaly;
    // root lies in [M - e, M + e], inside the branch [M - pi, M + pi]
    double lo = mean_anomaly - e, hi = mean_anomaly + e;
    auto f = [&](double x) { return x - e * std::sin(x) - mean_anomaly; };
    double x = mean_anomaly + e * std::sin(mean_anomaly);
    if (!(x >= lo && x <= hi))
        x = mean_anomaly;
    for (int it = 0; it < 200; ++it) {
        const double fx = f(x);
        if (fx == 0.0)
            return x;
        if (fx > 0.0)
            hi = x;
        else
            lo = x;
        double nx = x - fx / (1.0 - e * std::cos(x));
        if (!(nx >= lo && nx <= hi))
            nx = 0.5 * (lo + hi);
        if (std::abs(nx - x) <= 1e-16 * std::max(1.0, std::abs(x)) || hi - lo <= 1e-16 * std::max(1.0, std::abs(x)))
            return nx;
        x = nx;
    }
    return x;
}

ArcType reversed(ArcType t)
{
    t.orientation = t.orientation == Orientation::Counterclockwise ? Orientation::Clockwise : Orientation::Counterclockwise;
    return t;
}

ArcType dual(ArcType t)
{
    t = reversed(t);
    t.branch = t.branch == Branch::Short ? Branch::Long : Branch::Short;
    return t;
}

KeplerArc kepler_arc(const Vec& x_minus, const Vec& x_plus, double a, ArcType type)
{
    check_planar(x_minus, "kepler_arc");
    check_planar(x_plus, "kepler_arc");
    if (!(a > 0.0))
        throw DomainError("kepler_arc: semimajor axis must be positive");
    KeplerArc k;
    k.x_minus = x_minus;
    k.x_plus = x_plus;
    k.a = a;
    k.h = -0.5 / a;
    k.type = type;
    k.r1 = x_minus.norm();
    k.r2 = x_plus.norm();
    if (!(k.r1 > 0.0 && k.r2 > 0.0))
        throw DomainError("kepler_arc: endpoint at the attracting center");
    k.c = (x_plus - x_minus).norm();
    k.s = 0.5 * (k.r1 + k.r2 + k.c);
    if (k.s > 2.0 * a * (1.0 + 1e-14)) {
        std::ostringstream msg;
        msg << "kepler_arc: no arc with semimajor axis " << a << " (s = " << k.s << ")";
        throw GeometryError(msg.str());
    }
    const double ccw = angle_ccw(x_minus, x_plus);
    k.theta = type.orientation == Orientation::Counterclockwise ? ccw : std::fmod(kTwoPi - ccw, kTwoPi);
    const double alpha0 = 2.0 * std::asin(std::min(1.0, std::sqrt(k.s / (2.0 * a))));
    const double beta0 = 2.0 * std::asin(std::min(1.0, std::sqrt(std::max(0.0, k.s - k.c) / (2.0 * a))));
    k.alpha = type.branch == Branch::Short ? alpha0 : kTwoPi - alpha0;
    k.beta = k.theta <= M_PI ? beta0 : -beta0;
    k.action = std::sqrt(a) * ((k.alpha + std::sin(k.alpha)) - (k.beta + std::sin(k.beta)));
    k.time = a * std::sqrt(a) * ((k.alpha - std::sin(k.alpha)) - (k.beta - std::sin(k.beta)));
    const double d = 0.5 * (k.alpha - k.beta);
    const double ecm = std::cos(0.5 * (k.alpha + k.beta));
    double m;
    if (std::abs(std::sin(d)) > 1e-14) {
        const double esm = (k.r2 - k.r1) / (2.0 * a * std::sin(d));
        k.e = std::hypot(ecm, esm);
        m = std::atan2(esm, ecm);
    } else {
        k.e = std::abs(1.0 - k.r1 / a);
        m = k.r1 <= a ? 0.0 : M_PI;
    }
    k.e_minus = m - d;
    k.e_plus = m + d;
    return k;
}

double arc_action_quadrature(const KeplerArc& arc, int revolutions, int panels)
{
    const double a = arc.a, e = arc.e;
    const double e0 = arc.e_minus;
    const double e1 = arc.e_plus + kTwoPi * revolutions;
    if (e1 == e0)
        return 0.0;
    const int n = std::max(1, panels * (1 + revolutions));
    const double w = (e1 - e0) / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double mid = e0 + (i + 0.5) * w;
        for (size_t g = 0; g < kGlx.size(); ++g) {
            const double E = mid + 0.5 * w * kGlx[g];
            const double r = a * (1.0 - e * std::cos(E));
            const double ds = a * std::sqrt(std::max(0.0, 1.0 - e * e * std::cos(E) * std::cos(E)));
            const double v = std::sqrt(std::max(0.0, 2.0 / r - 1.0 / a));
            sum += kGlw[g] * v * ds;
        }
    }
    return 0.5 * w * sum;
}

double arc_action_f(const Vec& x_minus, const Vec& x_plus, ArcType type, bool check)
{
    const KeplerArc k = kepler_arc(x_minus, x_plus, 1.0, type);
    if (check) {
        const double q = arc_action_quadrature(k);
        if (std::abs(q - k.action) > 1e-8 * std::max(1.0, std::abs(k.action))) {
            std::ostringstream msg;
            msg << "arc_action_f: closed form " << k.action << " disagrees with quadrature " << q;
            throw ConvergenceError(msg.str());
        }
    }
    return k.action;
}

std::pair<Vec, Vec> arc_action_gradient(const Vec& x_minus, const Vec& x_plus, ArcType type)
{
    const KeplerArc k = kepler_arc(x_minus, x_plus, 1.0, type);
    if (!(k.c > 0.0))
        throw GeometryError("arc_action_gradient: coincident endpoints");
    const double alpha0 = type.branch == Branch::Short ? k.alpha : kTwoPi - k.alpha;
    const double beta0 = std::abs(k.beta);
    const double sa = type.branch == Branch::Short ? 1.0 : -1.0;
    const double sb = k.beta >= 0.0 ? 1.0 : -1.0;
    const double A = sa / std::tan(0.5 * alpha0);
    if (!(beta0 > 0.0))
        throw GeometryError("arc_action_gradient: radial arc");
    const double B = sb / std::tan(0.5 * beta0);
    const Vec u = (x_minus - x_plus) / k.c;
    const Vec gm = 0.5 * (A - B) * x_minus / k.r1 + 0.5 * (A + B) * u;
    const Vec gp = 0.5 * (A - B) * x_plus / k.r2 - 0.5 * (A + B) * u;
    return {gm, gp};
}

double min_arc_energy(const Vec& x_minus, const Vec& x_plus)
{
    const double s = 0.5 * (x_minus.norm() + x_plus.norm() + (x_plus - x_minus).norm());
    return -1.0 / s;
}

namespace {

void check_jn(int n, double h)
{
    if (n == 0)
        throw DomainError("J_n: n = 0 is the simple arc, use arc_action_f");
    if (!(h < 0.0))
        throw DomainError("J_n: energy must be negative");
}

} // namespace

double kepler_J(int n, double h, const Vec& x_minus, const Vec& x_plus, ArcType type)
{
    check_jn(n, h);
    const double lam = -2.0 * h;
    const KeplerArc k = kepler_arc(lam * x_minus, lam * x_plus, 1.0, type);
    return (kTwoPi * std::abs(n) + (n > 0 ? 1.0 : -1.0) * k.action) / std::sqrt(lam);
}

double kepler_J_dh(int n, double h, const Vec& x_minus, const Vec& x_plus, ArcType type)
{
    check_jn(n, h);
    const double lam = -2.0 * h;
    const KeplerArc k = kepler_arc(lam * x_minus, lam * x_plus, 1.0, type);
    return (kTwoPi * std::abs(n) + (n > 0 ? 1.0 : -1.0) * k.time) / (lam * std::sqrt(lam));
}

std::pair<Vec, Vec> kepler_J_gradient(int n, double h, const Vec& x_minus, const Vec& x_plus, ArcType type)
{
    check_jn(n, h);
    const double lam = -2.0 * h;
    auto g = arc_action_gradient(lam * x_minus, lam * x_plus, type);
    const double f = (n > 0 ? 1.0 : -1.0) * std::sqrt(lam);
    return {f * g.first, f * g.second};
}

ThreeBodyResult three_body_lagrangian(int k1, int k2, const Vec& x1_minus, const Vec& x1_plus, const Vec& x2_minus,
                                      const Vec& x2_plus, double alpha1, double alpha2, double E,
                                      const ThreeBodyOptions& o)
{
    if (k1 == 0 || k2 == 0)
        throw DomainError("three_body_lagrangian: revolution counts must be nonzero");
    if (!(alpha1 > 0.0 && alpha2 > 0.0))
        throw DomainError("three_body_lagrangian: masses must be positive");
    const double hmin1 = min_arc_energy(x1_minus, x1_plus);
    const double hmin2 = min_arc_energy(x2_minus, x2_plus);
    // h1 = t, h2 = (E - alpha1 t) / alpha2
    const double lo = std::max(hmin1, E / alpha1);
    const double hi = std::min(0.0, (E - alpha2 * hmin2) / alpha1);
    if (!(lo < hi))
        throw GeometryError("three_body_lagrangian: empty energy split interval");
    const bool lo_closed = hmin1 >= E / alpha1;
    const bool hi_closed = (E - alpha2 * hmin2) / alpha1 < 0.0;
    auto h2_of = [&](double t) { return (E - alpha1 * t) / alpha2; };
    auto value = [&](double t) {
        return alpha1 * kepler_J(k1, t, x1_minus, x1_plus, o.type1) +
               alpha2 * kepler_J(k2, h2_of(t), x2_minus, x2_plus, o.type2);
    };
    auto gap = [&](double t) {
        return kepler_J_dh(k1, t, x1_minus, x1_plus, o.type1) - kepler_J_dh(k2, h2_of(t), x2_minus, x2_plus, o.type2);
    };
    const double width = hi - lo;
    const double pad = 1e-12 * width;
    const double a0 = lo + pad, b0 = hi - pad;
    // coarse scan, then golden section around the best sample
    const int scan = 200;
    int best = 0;
    double fbest = std::numeric_limits<double>::infinity();
    std::vector<double> ts(scan + 1);
    for (int i = 0; i <= scan; ++i) {
        ts[static_cast<size_t>(i)] = a0 + (b0 - a0) * i / scan;
        double f;
        try {
            f = value(ts[static_cast<size_t>(i)]);
        } catch (const GeometryError&) {
            f = std::numeric_limits<double>::infinity();
        }
        if (f < fbest) {
            fbest = f;
            best = i;
        }
    }
    double a = ts[static_cast<size_t>(std::max(0, best - 1))];
    double b = ts[static_cast<size_t>(std::min(scan, best + 1))];
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = value(x1), f2 = value(x2);
    ThreeBodyResult res;
    while (b - a > 1e-6 * width) {
        ++res.iterations;
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = value(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = value(x2);
        }
    }
    double t = 0.5 * (a + b);
    // Newton on the time mismatch T1 - T2 (the derivative of the objective over alpha1)
    for (int it = 0; it < 50; ++it) {
        ++res.iterations;
        const double g = gap(t);
        const double dt = 1e-7 * width;
        const double tp = std::min(t + dt, b0), tm = std::max(t - dt, a0);
        const double dg = (gap(tp) - gap(tm)) / (tp - tm);
        if (!(dg > 0.0))
            break;
        double nt = t - g / dg;
        nt = std::clamp(nt, a0, b0);
        const double step = std::abs(nt - t);
        t = nt;
        if (step <= o.tol * std::max(1.0, std::abs(t)))
            break;
    }
    const double edge = 1e-9 * width;
    if ((lo_closed && t - lo <= edge) || (hi_closed && hi - t <= edge))
        throw ConvergenceError("three_body_lagrangian: minimum on the feasibility boundary");
    res.h1 = t;
    res.h2 = h2_of(t);
    res.value = value(t);
    res.time = kepler_J_dh(k1, res.h1, x1_minus, x1_plus, o.type1);
    const auto g1 = kepler_J_gradient(k1, res.h1, x1_minus, x1_plus, o.type1);
    const auto g2 = kepler_J_gradient(k2, res.h2, x2_minus, x2_plus, o.type2);
    res.d_minus = Vec(4);
    res.d_plus = Vec(4);
    res.d_minus << alpha1 * g1.first, alpha2 * g2.first;
    res.d_plus << alpha1 * g1.second, alpha2 * g2.second;
    return res;
}

ThreeBodyResult three_body_lagrangian(int k1, int k2, const Vec& x_minus, const Vec& x_plus, double alpha1,
                                      double alpha2, double E, const ThreeBodyOptions& o)
{
    return three_body_lagrangian(k1, k2, x_minus, x_plus, x_minus, x_plus, alpha1, alpha2, E, o);
}

Commensurability commensurability_check(int k1, int k2, double h1, double h2, double early_tol)
{
    if (!(h1 < 0.0 && h2 < 0.0))
        throw DomainError("commensurability_check: energies must be elliptic");
    Commensurability c;
    c.t1 = kTwoPi * std::pow(-2.0 * h1, -1.5);
    c.t2 = kTwoPi * std::pow(-2.0 * h2, -1.5);
    const double tol = early_tol < 0.0 ? 1e-3 * std::min(c.t1, c.t2) : early_tol;
    c.mismatch = std::numeric_limits<double>::infinity();
    for (int n1 = 1; n1 < std::abs(k1); ++n1) {
        for (int n2 = 1; n2 < std::abs(k2); ++n2) {
            const double m = std::abs(n1 * c.t1 - n2 * c.t2);
            if (m <= tol && !c.early_collision_risk) {
                c.early_collision_risk = true;
                c.n1 = n1;
                c.n2 = n2;
                c.mismatch = m;
            }
        }
    }
    return c;
}

double KeplerPairPotential::value(const Vec& q) const
{
    const double r1 = q.head(2).norm(), r2 = q.tail(2).norm();
    if (!(r1 > 0.0 && r2 > 0.0))
        throw DomainError("Kepler potential: body at the center");
    return -a1_ / r1 - a2_ / r2;
}

Vec KeplerPairPotential::gradient(const Vec& q) const
{
    const double r1 = q.head(2).norm(), r2 = q.tail(2).norm();
    if (!(r1 > 0.0 && r2 > 0.0))
        throw DomainError("Kepler potential: body at the center");
    Vec g(4);
    g << a1_ * q.head(2) / (r1 * r1 * r1), a2_ * q.tail(2) / (r2 * r2 * r2);
    return g;
}

ClassicalHamiltonian two_kepler_hamiltonian(double alpha1, double alpha2)
{
    Vec m(4);
    m << alpha1, alpha1, alpha2, alpha2;
    return ClassicalHamiltonian(m.asDiagonal(), std::make_shared<KeplerPairPotential>(alpha1, alpha2));
}

ThreeBodyAction::ThreeBodyAction(double alpha1, double alpha2, double E, double fd_step)
    : a1_(alpha1), a2_(alpha2), e_(E), fd_(fd_step), h_(two_kepler_hamiltonian(alpha1, alpha2)),
      space_(AmbientSpace::euclidean(4))
{
}

LinkEval ThreeBodyAction::evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const
{
    if (k.size() != 2 && k.size() != 4)
        throw DomainError("three-body symbol must be (k1, k2) or (k1, k2, b1, b2)");
    ThreeBodyOptions o;
    if (k.size() == 4) {
        o.type1.branch = k[2] ? Branch::Long : Branch::Short;
        o.type2.branch = k[3] ? Branch::Long : Branch::Short;
    }
    auto run = [&](const Vec& qm, const Vec& qp) {
        return three_body_lagrangian(k[0], k[1], qm.head(2), qp.head(2), qm.tail(2), qp.tail(2), a1_, a2_, e_, o);
    };
    const ThreeBodyResult r = run(q_minus, q_plus);
    LinkEval ev;
    ev.value = r.value;
    ev.time = r.time;
    ev.d_minus = r.d_minus;
    ev.d_plus = r.d_plus;
    if (second) {
        ev.h_mm.resize(4, 4);
        ev.h_mp.resize(4, 4);
        ev.h_pp.resize(4, 4);
        for (int j = 0; j < 4; ++j) {
            Vec dm = Vec::Zero(4);
            dm[j] = fd_;
            const ThreeBodyResult a = run(q_minus + dm, q_plus), b = run(q_minus - dm, q_plus);
            ev.h_mm.col(j) = (a.d_minus - b.d_minus) / (2.0 * fd_);
            // h_mp(i, j) = d^2 L / dq-_i dq+_j
            const ThreeBodyResult c = run(q_minus, q_plus + dm), d = run(q_minus, q_plus - dm);
            ev.h_mp.col(j) = (c.d_minus - d.d_minus) / (2.0 * fd_);
            ev.h_pp.col(j) = (c.d_plus - d.d_plus) / (2.0 * fd_);
        }
        ev.h_mm = 0.5 * (ev.h_mm + ev.h_mm.transpose());
        ev.h_pp = 0.5 * (ev.h_pp + ev.h_pp.transpose());
        ev.has_second = true;
    }
    return ev;
}

} // namespace degbill
