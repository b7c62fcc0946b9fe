#include "degbill/billiard.hpp"
#include "degbill/dls.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace degbill;

namespace {

Vec vec(std::initializer_list<double> xs)
{
    Vec v(static_cast<Eigen::Index>(xs.size()));
    int i = 0;
    for (double x : xs)
        v(i++) = x;
    return v;
}

DiscreteLagrangian torus_point_dls(double E = 0.5)
{
    auto sp = AmbientSpace::torus(vec({1, 1}));
    auto n = std::make_shared<Scatterer>(Scatterer::point_set(sp, {vec({0, 0})}));
    DiscreteLagrangian dl;
    dl.action = std::make_shared<FreeFlightAction>(ClassicalHamiltonian::free(2), sp, E);
    dl.points = std::make_shared<ScattererModel>(n);
    return dl;
}

ChainConfiguration periodic(std::vector<Symbol> code, std::vector<ChainPoint> pts)
{
    ChainConfiguration c;
    c.code = std::move(code);
    c.points = std::move(pts);
    c.boundary = Boundary::Periodic;
    return c;
}

// two balls on a segment: ambient (q1, q2) in [0,1]^2, collision set q1 = q2
DiscreteLagrangian segment_balls(double m1, double m2, double E = 0.5)
{
    auto sp = AmbientSpace::euclidean(2);
    Mat m = vec({m1, m2}).asDiagonal();
    auto n = std::make_shared<Scatterer>(Scatterer::diagonal(sp, 1, m));
    DiscreteLagrangian dl;
    dl.action = std::make_shared<BoxAction>(ClassicalHamiltonian(m), vec({0, 0}), vec({1, 1}), E);
    dl.points = std::make_shared<ScattererModel>(n);
    return dl;
}

ChainConfiguration segment_chain(const std::vector<double>& xs)
{
    ChainConfiguration c;
    c.boundary = Boundary::Fixed;
    c.start = vec({0.2, 0.7});
    c.end = vec({0.6, 0.3});
    // unfolded displacements of these codes never vanish, so every link is smooth
    c.code = {{2, 0}, {1, -1}, {0, 2}, {-1, 1}};
    for (double x : xs)
        c.points.push_back({0, vec({x}), Vec()});
    return c;
}

// two balls on T^2 = (R/Z)^2 each: ambient T^4, collision set q1 = q2
DiscreteLagrangian torus_balls(double E = 0.5)
{
    auto sp = AmbientSpace::torus(vec({1, 1, 1, 1}));
    auto n = std::make_shared<Scatterer>(Scatterer::diagonal(sp, 2));
    DiscreteLagrangian dl;
    dl.action = std::make_shared<FreeFlightAction>(ClassicalHamiltonian::free(4), sp, E);
    dl.points = std::make_shared<ScattererModel>(n);
    return dl;
}

ChainConfiguration torus_balls_chain(int repeats)
{
    ChainConfiguration c;
    for (int r = 0; r < repeats; ++r) {
        c.code.push_back({1, 0, 0, 1});
        c.points.push_back({0, vec({0.3, 0.4}), Vec()});
        c.code.push_back({0, 1, 1, 0});
        c.points.push_back({0, vec({0.3, 0.4}), Vec()});
    }
    return c;
}

std::vector<Vec> zeros_like(const DiscreteLagrangian& dl, const ChainConfiguration& c)
{
    std::vector<Vec> z;
    for (const auto& p : c.points)
        z.push_back(Vec::Zero(dl.points->dim(p)));
    return z;
}

// central differences of the chain action in chart coordinates
std::vector<Vec> fd_gradient(const DiscreteLagrangian& dl, const ChainConfiguration& c, double h = 1e-6)
{
    auto g = zeros_like(dl, c);
    for (size_t j = 0; j < g.size(); ++j)
        for (Eigen::Index i = 0; i < g[j].size(); ++i) {
            auto d = zeros_like(dl, c);
            d[j](i) = h;
            double ap = chain_action(dl, retract_chain(dl, c, d));
            d[j](i) = -h;
            double am = chain_action(dl, retract_chain(dl, c, d));
            g[j](i) = (ap - am) / (2 * h);
        }
    return g;
}

Mat flatten_fd_hessian(const DiscreteLagrangian& dl, const ChainConfiguration& c, double h = 1e-5)
{
    auto z = zeros_like(dl, c);
    int n = 0;
    for (const auto& v : z)
        n += static_cast<int>(v.size());
    Mat out(n, n);
    int col = 0;
    for (size_t j = 0; j < z.size(); ++j)
        for (Eigen::Index i = 0; i < z[j].size(); ++i, ++col) {
            auto d = zeros_like(dl, c);
            d[j](i) = h;
            auto rp = residual(dl, retract_chain(dl, c, d));
            d[j](i) = -h;
            auto rm = residual(dl, retract_chain(dl, c, d));
            int row = 0;
            for (size_t b = 0; b < rp.size(); ++b)
                for (Eigen::Index k = 0; k < rp[b].size(); ++k)
                    out(row++, col) = (rp[b](k) - rm[b](k)) / (2 * h);
        }
    return out;
}

} // namespace

TEST_CASE("chain_action examples")
{
    auto dl = torus_point_dls();
    auto c = periodic({{1, 0}, {0, 1}}, {{0, Vec(), Vec()}, {0, Vec(), Vec()}});
    CHECK(chain_action(dl, c) == doctest::Approx(2.0).epsilon(1e-15));

    FreeFlightAction two(ClassicalHamiltonian::free(2), AmbientSpace::euclidean(2), 0.5);
    CHECK(two.evaluate({}, vec({0, 0}), vec({3, 4}), false).value == doctest::Approx(5.0).epsilon(1e-15));
    FreeFlightAction heavy(ClassicalHamiltonian(Mat(vec({2, 3}).asDiagonal())), AmbientSpace::euclidean(2), 0.5);
    CHECK(heavy.evaluate({}, vec({0, 0}), vec({1, 2}), false).value ==
          doctest::Approx(std::sqrt(2 * 1 + 3 * 4)).epsilon(1e-15));
}

TEST_CASE("single-link Fixed chain equals the connector action")
{
    auto h = ClassicalHamiltonian(Mat::Identity(2, 2),
                                  std::make_shared<HarmonicPotential>(Mat::Identity(2, 2), Vec::Zero(2)));
    auto sp = AmbientSpace::euclidean(2);
    auto n = std::make_shared<Scatterer>(Scatterer::point_set(sp, {vec({0, 0})}));
    DiscreteLagrangian dl{std::make_shared<ShootingAction>(h, sp, 1.0), std::make_shared<ScattererModel>(n)};
    ChainConfiguration c;
    c.boundary = Boundary::Fixed;
    c.start = vec({0.2, 0.1});
    c.end = vec({0.6, 0.5});
    c.code = {{}};
    CHECK(chain_action(dl, c) == doctest::Approx(connect(h, sp, c.start, c.end, 1.0).action).epsilon(1e-12));
}

TEST_CASE("0-dimensional scatterer: empty residual, Newton is the identity")
{
    auto dl = torus_point_dls();
    auto c = periodic({{1, 0}, {0, 1}}, {{0, Vec(), Vec()}, {0, Vec(), Vec()}});
    auto r = residual(dl, c);
    REQUIRE(r.size() == 2);
    CHECK(r[0].size() == 0);
    CHECK(residual_norm(r) == 0.0);
    auto res = newton_chain(dl, c);
    CHECK(res.converged);
    CHECK(res.iterations == 0);
    CHECK(chain_action(dl, res.chain) == chain_action(dl, c));
}

TEST_CASE("gradient and Hessian match finite differences")
{
    auto dl = segment_balls(1.0, 2.0);
    auto c = segment_chain({0.31, 0.52, 0.44});
    auto r = residual(dl, c);
    auto fd = fd_gradient(dl, c);
    for (size_t j = 0; j < r.size(); ++j)
        CHECK((r[j] - fd[j]).norm() <= 1e-5 * std::max(1.0, fd[j].norm()));

    auto h = hessian(dl, c);
    Mat dense = h.dense();
    Mat oracle = flatten_fd_hessian(dl, c);
    CHECK((dense - oracle).cwiseAbs().maxCoeff() <= 1e-4 * dense.cwiseAbs().maxCoeff());
    CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * dense.cwiseAbs().maxCoeff());
    // exact tridiagonal sparsity for 1-dim blocks
    for (int i = 0; i < dense.rows(); ++i)
        for (int j = 0; j < dense.cols(); ++j)
            if (std::abs(i - j) > 1)
                CHECK(dense(i, j) == 0.0);

    auto bt = torus_balls_chain(2);
    auto dt = torus_balls();
    auto rt = residual(dt, bt);
    auto ft = fd_gradient(dt, bt);
    for (size_t j = 0; j < rt.size(); ++j)
        CHECK((rt[j] - ft[j]).norm() <= 1e-5);
}

TEST_CASE("one free point: the Hessian is a single block")
{
    auto dl = segment_balls(1.0, 1.0);
    ChainConfiguration c;
    c.boundary = Boundary::Fixed;
    c.start = vec({0.2, 0.7});
    c.end = vec({0.6, 0.3});
    c.code = {{2, 0}, {1, -1}};
    c.points = {{0, vec({0.5}), Vec()}};
    auto h = hessian(dl, c);
    CHECK(h.blocks() == 1);
    CHECK(h.upper.empty());
    CHECK(hyperbolicity_certificate(h, {1}).values[0] == doctest::Approx(1.0 / std::abs(h.diag[0](0, 0))));
}

TEST_CASE("newton_chain: convex two-ball functional has a unique critical point")
{
    auto dl = segment_balls(1.0, 2.0);
    NewtonOptions o;
    o.minimize = true;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::vector<double> first;
    for (int trial = 0; trial < 10; ++trial) {
        auto res = newton_chain(dl, segment_chain({u(rng), u(rng), u(rng)}), o);
        REQUIRE(res.converged);
        CHECK(residual_norm(residual(dl, res.chain)) <= 1e-10);
        std::vector<double> xs;
        for (const auto& p : res.chain.points)
            xs.push_back(p.x(0));
        if (first.empty())
            first = xs;
        for (size_t j = 0; j < xs.size(); ++j)
            CHECK(std::abs(xs[j] - first[j]) <= 1e-8);
        // strictly convex: positive definite Hessian at the minimum
        CHECK(hessian(dl, res.chain).dense().eigenvalues().real().minCoeff() > 0);
    }
}

TEST_CASE("newton_chain: odd reflection count is nondegenerate")
{
    auto dl = segment_balls(1.0, 1.0);
    ChainConfiguration c;
    c.boundary = Boundary::Fixed;
    c.start = vec({0.2, 0.7});
    c.end = vec({0.3, 0.1});
    c.code = {{2, 1}, {1, 2}, {-1, 2}};
    c.points = {{0, vec({0.5}), Vec()}, {0, vec({0.5}), Vec()}};
    for (const auto& k : c.code)
        CHECK(BoxAction::reflections(k) % 2 == 1);
    auto res = newton_chain(dl, c);
    REQUIRE(res.converged);
    CHECK(res.residual_norm <= 1e-10);
    CHECK(res.min_singular > 1e-6);
}

TEST_CASE("critical chains reflect tangentially and conserve the Noether momentum")
{
    // two discs in the unit square, masses 1 and 2
    auto sp = AmbientSpace::euclidean(4);
    Mat m = vec({1, 1, 2, 2}).asDiagonal();
    auto n = std::make_shared<Scatterer>(Scatterer::diagonal(sp, 2, m));
    DiscreteLagrangian dl{std::make_shared<BoxAction>(ClassicalHamiltonian(m), Vec::Zero(4), Vec::Ones(4), 0.5),
                          std::make_shared<ScattererModel>(n)};
    ChainConfiguration c;
    c.boundary = Boundary::Fixed;
    c.start = vec({0.2, 0.3, 0.7, 0.6});
    c.end = vec({0.8, 0.25, 0.35, 0.55});
    c.code = {{1, -1, -1, 0}, {1, -1, 0, 0}, {1, 0, -1, 1}, {0, -1, 0, 0}, {0, 1, 1, 0}, {-1, 1, 0, -1}};
    for (int j = 0; j < 5; ++j)
        c.points.push_back({0, vec({0.5, 0.5}), Vec()});
    NewtonOptions o;
    o.minimize = true;
    auto res = newton_chain(dl, c, o);
    REQUIRE(all_admissible(admissible(dl, res.chain)));
    auto st = evaluate_chain(dl, res.chain, false);
    const auto& model = dynamic_cast<const ScattererModel&>(*dl.points);
    for (size_t j = 0; j < res.chain.points.size(); ++j) {
        Mat t = model.jacobian(res.chain.points[j]);
        Vec dp = st.p_out[j] - st.p_in[j];
        CHECK((t.transpose() * dp).norm() <= 1e-9);
        CHECK(dp.norm() >= 1e-6);
    }

    auto dt = torus_balls();
    auto ct = torus_balls_chain(3);
    auto s = evaluate_chain(dt, ct, false);
    Vec u = vec({1, 0, 1, 0});
    double g0 = u.dot(s.p_out[0]);
    for (size_t j = 0; j < ct.points.size(); ++j) {
        CHECK(std::abs(u.dot(s.p_out[j]) - g0) <= 1e-9);
        CHECK(std::abs(u.dot(s.p_in[j]) - g0) <= 1e-9);
    }
}

TEST_CASE("symmetry vector lies in the Hessian kernel")
{
    auto dl = torus_balls();
    auto c = torus_balls_chain(3);
    auto h = hessian(dl, c);
    for (const Vec& uc : {vec({1, 0}), vec({0, 1})}) {
        std::vector<Vec> field(c.points.size(), uc);
        auto hu = h.apply(field);
        double hmax = h.dense().cwiseAbs().rowwise().sum().maxCoeff();
        double m = 0;
        for (const auto& v : hu)
            m = std::max(m, v.cwiseAbs().maxCoeff());
        CHECK(m <= 1e-8 * hmax);
    }
}

TEST_CASE("certificate agrees with dense inverses and stabilizes on a hyperbolic chain")
{
    auto base = torus_point_dls();
    auto c = periodic({{1, 0}, {0, 1}}, {{0, Vec(), Vec()}, {0, Vec(), Vec()}});
    auto sc = shadow_solve(base, c, 1e-2);
    REQUIRE(sc.converged);
    auto h = hessian(sc.dl, sc.chain);
    for (int w : {1, 2, 4}) {
        auto win = window(h, 0, w);
        CHECK(win.blocks() == 2 * w + 1);
        CHECK(block_inverse_norm(win) == doctest::Approx(oracle::dense_block_inverse_norm(win)).epsilon(1e-9));
    }
    auto cert = hyperbolicity_certificate(sc.dl, sc.chain, {4, 8, 16});
    CHECK(cert.stabilized);
    CHECK(cert.relative_change <= 0.05);

    auto g = green_decay(sc.dl, sc.chain, 0, 16);
    CHECK(g.decaying);
    CHECK(g.lambda > 0);
    CHECK(g.r2 >= 0.95);
    CHECK(g.profile.size() == 33);
}

TEST_CASE("unreduced symmetry: certificate grows, Green function does not decay")
{
    auto dl = torus_balls();
    auto c = torus_balls_chain(2);
    auto cert = hyperbolicity_certificate(dl, c, {2, 4, 8, 16});
    CHECK_FALSE(cert.stabilized);
    CHECK(cert.values.back() > 2 * cert.values.front());
    // with a kernel vector the window Green function is nearly linear: the fitted rate dies like 1/W
    auto g16 = green_decay(dl, c, 0, 16);
    auto g32 = green_decay(dl, c, 0, 32);
    CHECK(std::abs(g16.lambda) < 0.1);
    CHECK(std::abs(g32.lambda) < 0.6 * std::abs(g16.lambda));
}

TEST_CASE("admissibility of torus codes")
{
    auto dl = torus_point_dls();
    ChainPoint p{0, Vec(), Vec()};
    auto parallel = admissible(dl, periodic({{1, 0}, {2, 0}}, {p, p}));
    CHECK_FALSE(all_admissible(parallel));
    CHECK_FALSE(parallel[0].jump_ok);
    CHECK(parallel[0].jump < 1e-12);

    CHECK(all_admissible(admissible(dl, periodic({{1, 0}, {0, 1}}, {p, p}))));

    auto c = periodic({{1, 0}, {-1, 0}}, {p, p});
    auto rep = admissible(dl, c);
    CHECK(rep[0].straight_reflection);
    CHECK(all_admissible(rep));
    AdmissibilityOptions att;
    att.attracting = true;
    CHECK_FALSE(all_admissible(admissible(dl, c, att)));
}

TEST_CASE("Routh reduction of two balls on a circle is the relative-coordinate billiard")
{
    // each ball on R/Z: ambient T^2, collision set q1 = q2, translation u = (1,1)
    double E = 0.8;
    auto sp = AmbientSpace::torus(vec({1, 1}));
    auto n = std::make_shared<Scatterer>(Scatterer::diagonal(sp, 1));
    auto base = std::make_shared<FreeFlightAction>(ClassicalHamiltonian::free(2), sp, E);
    RouthAction ra(base, vec({1, 1}), 0.0);
    // relative coordinate r = q1 - q2 with reduced mass 1/2 on R/Z
    auto rel = ClassicalHamiltonian(Mat::Constant(1, 1, 0.5));
    auto circle = AmbientSpace::torus(vec({1}));
    for (Symbol k : {Symbol{1, 0}, Symbol{2, -1}, Symbol{0, 3}}) {
        double lt = ra.evaluate(k, vec({0.3, 0.3}), vec({0.55, 0.55}), false).value;
        ConnectOptions co;
        co.winding = IVec::Constant(1, k[0] - k[1]);
        double oracle = connect(rel, circle, vec({0}), vec({0}), E, co).action;
        CHECK(lt == doctest::Approx(oracle).epsilon(1e-12));
    }

    // Legendre duality: -dLt/dG = theta*
    Symbol k{2, 0};
    Vec qm = vec({0.3, 0.3}), qp = vec({0.55, 0.55});
    double g = 0.4, dg = 1e-5;
    double lp = RouthAction(base, vec({1, 1}), g + dg).evaluate(k, qm, qp, false).value;
    double lm = RouthAction(base, vec({1, 1}), g - dg).evaluate(k, qm, qp, false).value;
    double theta = RouthAction(base, vec({1, 1}), g).critical_theta(k, qm, qp);
    CHECK(-(lp - lm) / (2 * dg) == doctest::Approx(theta).epsilon(1e-7));
    CHECK(std::abs(theta - RouthAction(base, vec({1, 1}), 0.0).critical_theta(k, qm, qp)) > 1e-3);

    // already critical in theta: the reduced value is the original one
    Vec q0 = vec({0.2, 0.2}), q1 = vec({0.2, 0.2});
    double tz = ra.critical_theta({1, -1}, q0, q1);
    CHECK(std::abs(tz) < 1e-14);
    CHECK(ra.evaluate({1, -1}, q0, q1, false).value ==
          doctest::Approx(base->evaluate({1, -1}, q0, q1, false).value).epsilon(1e-15));

    // reduced DLS on the cross-section
    DiscreteLagrangian dl{base, std::make_shared<ScattererModel>(n)};
    auto red = routh_reduce(dl, vec({1, 1}), vec({1}), 0.0);
    ChainConfiguration c = periodic({{1, 0}, {0, 1}}, {{0, vec({0.3}), Vec()}, {0, vec({0.3}), Vec()}});
    CHECK(red.points->dim(c.points[0]) == 0);
    CHECK(chain_action(red, c) == doctest::Approx(2 * std::sqrt(E)).epsilon(1e-12));
}
