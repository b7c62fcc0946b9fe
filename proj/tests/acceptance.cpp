// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "degbill/scenario.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace degbill;
using oracle::vec;

namespace {

const std::string root = DEGBILL_SOURCE_DIR;

Scenario scenario(const std::string& name)
{
    return load_scenario(root + "/scenarios/" + name + ".json");
}

// Collects named checks of one criterion.
struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what, double value, const std::string& bound)
    {
        if (!ok)
            pass = false;
        detail << (ok ? "" : "!") << what << "=" << value << " (" << bound << ") ";
    }
    void check(bool ok, const std::string& what)
    {
        if (!ok)
            pass = false;
        detail << (ok ? "" : "!") << what << " ";
    }
};

std::shared_ptr<const Scatterer> torus_point()
{
    return std::make_shared<Scatterer>(Scatterer::point_set(AmbientSpace::torus(vec({1, 1})), {vec({0, 0})}));
}

DiscreteLagrangian torus_dls()
{
    auto n = torus_point();
    return {std::make_shared<FreeFlightAction>(ClassicalHamiltonian::free(2), n->space(), 0.5),
            std::make_shared<ScattererModel>(n)};
}

ChainConfiguration alternating()
{
    ChainConfiguration c;
    c.code = {{1, 0}, {0, 1}};
    c.points = {{0, Vec(), Vec()}, {0, Vec(), Vec()}};
    return c;
}

const std::vector<double> torus_sweep{1e-2, std::pow(10, -2.5), 1e-3, std::pow(10, -3.5)};

void torus_action(Outcome& o)
{
    auto sp = AmbientSpace::torus(vec({1, 1}));
    ConnectOptions co;
    co.winding = IVec(2);
    co.winding << 3, 4;
    auto r = connect(ClassicalHamiltonian::free(2), sp, vec({0, 0}), vec({0, 0}), 0.5, co);
    o.check(std::abs(r.action - 5.0) <= 1e-9, "|S-5|", std::abs(r.action - 5.0), "<= 1e-9");
}

void check_variational(Outcome& o, const std::string& tag, const DiscreteLagrangian& dl, const ChainConfiguration& c)
{
    auto v = variational_check(dl, c);
    if (v.unknowns == 0) {
        o.check(true, tag + ":no-unknowns");
        return;
    }
    o.check(v.gradient_error <= 1e-5, tag + ".grad", v.gradient_error, "<= 1e-5");
    o.check(v.hessian_error <= 1e-4, tag + ".hess", v.hessian_error, "<= 1e-4");
    o.check(v.band_violation == 0.0 && v.symmetry_error <= 1e-12, tag + ".band+sym");
}

ChainConfiguration perturbed(const DiscreteLagrangian& dl, const ChainConfiguration& c, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1e-2, 1e-2);
    std::vector<Vec> kick;
    for (const auto& p : c.points) {
        Vec k(dl.points->dim(p));
        for (Eigen::Index i = 0; i < k.size(); ++i)
            k(i) = u(rng);
        kick.push_back(k);
    }
    return retract_chain(dl, c, kick);
}

void variational(Outcome& o)
{
    for (const char* name : {"torus_point", "two_balls_box", "two_balls_torus", "ncenter_square", "kepler_table"}) {
        auto s = scenario(name);
        if (!s.chain) {
            o.check(true, std::string(name) + ":no-chain");
            continue;
        }
        ChainConfiguration crit = *s.chain;
        if (s.solve.newton.max_iter > 0)
            crit = newton_chain(s.dl, crit, s.solve.newton).chain;
        check_variational(o, std::string(name) + ".crit", s.dl, crit);
        check_variational(o, std::string(name) + ".pert", s.dl, perturbed(s.dl, crit, s.seed));
        bool zero_dim = true;
        for (const auto& p : crit.points)
            zero_dim = zero_dim && s.dl.points->dim(p) == 0;
        if (zero_dim) {
            // the base DLS has no unknowns; check the tube DLS of the shadow chain instead
            auto sc = shadow_solve(s.dl, crit, 1e-2);
            check_variational(o, std::string(name) + ".tube", sc.dl, sc.chain);
            check_variational(o, std::string(name) + ".tube-pert", sc.dl, perturbed(sc.dl, sc.chain, s.seed));
        }
    }
}

void reflections(Outcome& o)
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.5, 3.0);
    double worst_e = 0, worst_par = 0;
    int done = 0;
    while (done < 100000) {
        Mat m = vec({u(rng), u(rng), u(rng)}).asDiagonal();
        ClassicalHamiltonian h(m);
        Vec q = vec({g(rng), g(rng), g(rng)});
        Vec p = vec({g(rng), g(rng), g(rng)});
        Vec n = vec({g(rng), g(rng), g(rng)});
        Vec v = h.velocity(q, p);
        if (std::abs(v.dot(n)) <= 1e-3 * h.vector_norm(v) * h.covector_norm(n))
            continue;
        Vec pp = reflect(h, q, p, n);
        double e = h.energy(q, p);
        worst_e = std::max(worst_e, std::abs(h.energy(q, pp) - e) / e);
        Vec dp = pp - p;
        worst_par = std::max(worst_par, (dp - dp.dot(n) / n.squaredNorm() * n).norm() / dp.norm());
        ++done;
    }
    o.check(worst_e <= 1e-12, "dH/H", worst_e, "<= 1e-12");
    o.check(worst_par <= 1e-10, "dp_perp", worst_par, "<= 1e-10");
}

void shadow_scaling(Outcome& o)
{
    auto dl = torus_dls();
    auto c = alternating();
    std::vector<double> err;
    bool all = true;
    for (double e : torus_sweep) {
        auto sc = shadow_solve(dl, c, e);
        all = all && sc.converged;
        err.push_back(shadow_error(dl, c, sc));
    }
    o.check(all, "all-converged");
    auto f = loglog_fit(torus_sweep, err);
    o.check(f.slope >= 0.9 && f.slope <= 1.1, "slope", f.slope, "in [0.9, 1.1]");
}

void lyapunov(Outcome& o)
{
    auto dl = torus_dls();
    auto c = alternating();
    std::vector<double> x, top;
    bool counts = true;
    for (double e : torus_sweep) {
        auto sc = shadow_solve(dl, c, e);
        auto ly = lyapunov_estimate(BilliardDomain(ClassicalHamiltonian::free(2), torus_point(), e), sc);
        counts = counts && ly.large_count == 2;
        x.push_back(std::log(1 / e));
        top.push_back(ly.exponents.front());
    }
    auto f = linear_fit(x, top);
    o.check(f.slope > 0, "b", f.slope, "> 0");
    o.check(f.r2 >= 0.98, "R2", f.r2, ">= 0.98");
    o.check(counts, "large_count==2");
}

void expansion(Outcome& o)
{
    auto dl = torus_dls();
    ChainPoint pm{0, Vec(), vec({0.6, 0.8})}, pp{0, Vec(), vec({-0.28, 0.96})};
    std::vector<double> eps{1e-2, 1e-3, 1e-4}, rem;
    for (double e : eps)
        rem.push_back(std::abs(generating_eps(dl, {1, 2}, pm, pp, e) - generating_expansion(dl, {1, 2}, pm, pp, e)));
    auto f = loglog_fit(eps, rem);
    o.check(std::abs(f.slope - 2) <= 0.1, "slope", f.slope, "2 +- 0.1");
}

void certificate(Outcome& o)
{
    auto sc = shadow_solve(torus_dls(), alternating(), 1e-2);
    auto cert = hyperbolicity_certificate(sc.dl, sc.chain, {8, 16});
    o.check(cert.relative_change <= 0.05, "C8->C16", cert.relative_change, "<= 0.05");
    auto g = green_decay(sc.dl, sc.chain, 0, 16);
    o.check(g.lambda > 0, "lambda", g.lambda, "> 0");
    o.check(g.r2 >= 0.95, "R2", g.r2, ">= 0.95");

    auto s = scenario("two_balls_torus");
    auto sym = hyperbolicity_certificate(s.dl, *s.chain, {2, 4, 8, 16});
    double growth = sym.values.back() / sym.values.front();
    o.check(!sym.stabilized && growth > 2, "C16/C2", growth, "> 2, not stabilized");
    double kern = 0;
    for (const Vec& u : {vec({1, 0}), vec({0, 1})})
        kern = std::max(kern, symmetry_kernel_error(s.dl, *s.chain, u));
    o.check(kern <= 1e-8, "kernel", kern, "<= 1e-8");
}

void two_balls(Outcome& o)
{
    auto s = scenario("two_balls_box");
    NewtonOptions no = s.solve.newton;
    auto crit = newton_chain(s.dl, *s.chain, no);
    o.check(crit.converged, "base-converged");
    std::mt19937_64 rng(s.seed);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    double spread = 0;
    bool all = true;
    for (int r = 0; r < 20; ++r) {
        ChainConfiguration c = *s.chain;
        for (auto& p : c.points)
            p.x = vec({u(rng), u(rng)});
        auto res = newton_chain(s.dl, c, no);
        all = all && res.converged;
        for (size_t j = 0; j < c.points.size(); ++j)
            spread = std::max(spread, (res.chain.points[j].x - crit.chain.points[j].x).norm());
    }
    o.check(all, "20-random-starts");
    o.check(spread <= 1e-8, "unique", spread, "<= 1e-8");
    auto sc = shadow_solve(s.dl, crit.chain, 1e-3);
    o.check(sc.converged, "shadow(1e-3)");
    BilliardDomain dom(s.dl.action->hamiltonian(), s.scatterer, 1e-3, *s.box);
    double ep = endpoint_deviation(dom, sc);
    o.check(ep <= 1e-9, "endpoints", ep, "<= 1e-9");
}

void kepler(Outcome& o)
{
    struct Z {
        double e, E1, dE;
    };
    const std::vector<Z> zs{{0.3, 0.2, 1.1}, {0.6, -0.7, 2.5}, {0.75, 2.0, 3.3}};
    double worst = 0;
    for (double h : {-2.0, -0.5, -0.1})
        for (const auto& z : zs) {
            oracle::Ellipse el{-1 / (2 * h), z.e};
            Vec a = el.point(z.E1), b = el.point(z.E1 + z.dE);
            auto t = oracle::arc_type(el, z.E1, z.E1 + z.dE);
            double arc = el.action(z.E1, z.E1 + z.dE), full = el.action(0, 2 * M_PI, 20000);
            for (int n : {-2, 1, 3}) {
                double ref = n > 0 ? n * full + arc : -n * full - arc;
                worst = std::max(worst, std::abs(kepler_J(n, h, a, b, t) - ref) / ref);
            }
        }
    o.check(worst <= 1e-6, "J_n", worst, "<= 1e-6");
    Vec xm = vec({0.7, 0.2}), xp = vec({-0.3, 0.9});
    auto r = three_body_lagrangian(2, 3, xm, xp, 0.4, 0.6, -0.5);
    double bf = oracle::three_body_brute_force(2, 3, xm, xp, 0.4, 0.6, -0.5);
    double rel = std::abs(r.value - bf) / std::abs(bf);
    o.check(rel <= 1e-9, "L_k", rel, "<= 1e-9");
}

void symbolic(Outcome& o)
{
    auto k3 = graph_from_successors({{0, 1, 2}, {0, 1, 2}, {0, 1, 2}});
    double d = std::abs(entropy(k3).entropy - std::log(3.0));
    o.check(d <= 1e-10, "|h-ln3|", d, "<= 1e-10");

    std::vector<Vec> c{vec({0, 0}), vec({1, 0}), vec({0.3, 0.8})};
    auto h = ClassicalHamiltonian::free(2);
    FreeFlightAction a(h, AmbientSpace::euclidean(2), 0.5);
    std::vector<GraphOrbit> segs;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j)
                segs.push_back(graph_orbit(h, std::to_string(i) + std::to_string(j), i, j, c[i], c[j],
                                           a.evaluate({}, c[i], c[j], false)));
    auto tri = build_graph(segs);
    double ht = entropy(tri).entropy;
    o.check(ht > 0, "triangle h", ht, "> 0");

    bool exact = true;
    for (const auto* g : {&k3, &tri}) {
        oracle::IMat adj = oracle::IMat::Zero(g->size(), g->size());
        for (int i = 0; i < g->size(); ++i)
            for (int j : g->successors[i])
                adj(i, j) += 1;
        oracle::IMat pw = oracle::IMat::Identity(g->size(), g->size());
        for (int n = 1; n <= 12; ++n) {
            pw = pw * adj;
            exact = exact && static_cast<long long>(path_count(*g, n)) == pw.sum() &&
                    static_cast<long long>(path_count(*g, n, true)) == pw.trace();
        }
    }
    o.check(exact, "counts==A^n (n<=12)");
}

void ncenter(Outcome& o)
{
    auto s = scenario("ncenter_square");
    const auto& nc = *s.ncenter;
    auto sp = SingularPerturbation::centers(s.dl.action->hamiltonian(), s.scatterer, nc.mu.front(), nc.alphas);
    ShadowExperimentOptions opt = nc.options;
    opt.jobs = 3;
    auto rows = shadow_experiment(s.dl, *s.chain, sp, nc.mu, opt);
    bool all = rows.size() == nc.mu.size();
    std::vector<double> err;
    double lo = INFINITY, hi = 0;
    for (const auto& r : rows) {
        all = all && r.converged;
        err.push_back(r.sup_error);
        lo = std::min(lo, r.min_distance / r.mu);
        hi = std::max(hi, r.min_distance / r.mu);
    }
    o.check(all, "all-converged");
    double slope = loglog_fit(nc.mu, err).slope;
    o.check(slope >= 0.8, "slope", slope, ">= 0.8");
    o.check(hi / lo <= 3, "dmin/mu spread", hi / lo, "<= 3");
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<void(Outcome&)> run;
};

} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {1, "torus (3,4) collision action", 1, torus_action},
        {2, "variational consistency on shipped scenarios", 60, variational},
        {3, "reflection law, 1e5 samples", 10, reflections},
        {4, "shadowing error scales like eps", 300, shadow_scaling},
        {5, "Lyapunov growth ~ ln(1/eps)", 300, lyapunov},
        {6, "generating-function expansion remainder", 60, expansion},
        {7, "hyperbolicity certificate and Green decay", 120, certificate},
        {8, "two balls in a box, Fixed chain", 120, two_balls},
        {9, "Kepler actions and 3-body Lagrangian", 120, kepler},
        {10, "symbolic dynamics", 10, symbolic},
        {11, "4-center shadow experiment", 600, ncenter},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool in_time = secs <= c.limit_s;
        bool ok = o.pass && in_time;
        failed += ok ? 0 : 1;
        std::printf("%s %2d %-46s %s[%.2fs / %.0fs]\n", ok ? "PASS" : "FAIL", c.id, c.name, o.detail.str().c_str(),
                    secs, c.limit_s);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
