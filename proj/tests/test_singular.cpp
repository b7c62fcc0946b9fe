#include "degbill/fit.hpp"
#include "degbill/singular.hpp"

#include <doctest.h>

#include <cmath>

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

SingularPerturbation one_center(double mu, double alpha)
{
    auto n = std::make_shared<Scatterer>(Scatterer::point_set(AmbientSpace::euclidean(2), {vec({0, 0})}));
    return SingularPerturbation::centers(ClassicalHamiltonian::free(2), n, mu, {alpha});
}

SingularPerturbation square(double mu)
{
    auto n = std::make_shared<Scatterer>(Scatterer::point_set(
        AmbientSpace::euclidean(2), {vec({0, 0}), vec({1, 0}), vec({1, 1}), vec({0, 1})}));
    return SingularPerturbation::centers(ClassicalHamiltonian::free(2), n, mu, {1, 1, 1, 1});
}

DiscreteLagrangian free_dls(const SingularPerturbation& sp)
{
    return {std::make_shared<FreeFlightAction>(sp.base(), sp.scatterer().space(), 0.5),
            std::make_shared<ScattererModel>(sp.scatterer_ptr())};
}

} // namespace

TEST_CASE("Coulomb potential of point centers")
{
    auto sp = one_center(1.0, 1.0);
    auto ev = eval_singular(sp, vec({2, 0}));
    CHECK(ev.value == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK((ev.gradient - vec({0.25, 0})).norm() < 1e-15);
    CHECK(ev.distance == doctest::Approx(2.0));

    auto n = std::make_shared<Scatterer>(
        Scatterer::point_set(AmbientSpace::euclidean(2), {vec({-1, 0.5}), vec({1, 0.5})}));
    auto two = SingularPerturbation::centers(ClassicalHamiltonian::free(2), n, 0.3, {0.7, 0.7});
    CHECK(eval_singular(two, vec({0, 0.5})).gradient.norm() < 1e-15);

    // the perturbed Hamiltonian carries mu V
    auto h = sp.with_mu(0.25).hamiltonian();
    CHECK(h.W(vec({2, 0})) == doctest::Approx(-0.125).epsilon(1e-15));
    CHECK_THROWS_AS(eval_singular(sp.with_mu(1e-3), vec({1e-9, 0})), CollisionError);
}

TEST_CASE("Newtonian singularity on the two-body collision set")
{
    // bodies of masses m1, m2 in the plane; d(q, Delta) in the mass metric is sqrt(m1 m2 / (m1 + m2)) |q1 - q2|
    double m1 = 1.0, m2 = 3.0, a1 = 0.5, a2 = 2.0;
    Mat m = vec({m1, m1, m2, m2}).asDiagonal();
    auto sp4 = AmbientSpace::euclidean(4);
    auto n = std::make_shared<Scatterer>(Scatterer::diagonal(sp4, 2, m));
    double red = std::sqrt(m1 * m2 / (m1 + m2));
    auto s = SingularPerturbation::general(ClassicalHamiltonian(m), n, 1.0,
                                           [=](const Vec&, double) { return a1 * a2 * red; });
    Vec q = vec({0.3, -0.2, 1.1, 0.4});
    Vec r = q.head(2) - q.tail(2);
    auto ev = eval_singular(s, q);
    CHECK(ev.value == doctest::Approx(-a1 * a2 / r.norm()).epsilon(1e-12));
    Vec g(4);
    g << a1 * a2 * r / std::pow(r.norm(), 3), -a1 * a2 * r / std::pow(r.norm(), 3);
    CHECK((ev.gradient - g).norm() <= 1e-7 * g.norm());
}

TEST_CASE("flow_singular at mu = 0 is the unperturbed flow")
{
    auto sp = square(0.0);
    PhaseState s0{vec({0.2, 0.3}), vec({0.6, 0.8})};
    auto a = flow_singular(sp, s0, 1.3);
    auto b = flow_segment(sp.base(), s0, 1.3);
    CHECK((a.final.q - b.back().q).norm() <= 1e-10);
    CHECK((a.final.p - b.back().p).norm() <= 1e-10);
    CHECK(a.final.t == doctest::Approx(1.3).epsilon(1e-12));
}

TEST_CASE("hyperbolic flyby conserves energy")
{
    double mu = 1e-3;
    auto sp = one_center(mu, 1.0);
    PhaseState s0{vec({-1, mu}), vec({1, 0})};
    auto h = sp.hamiltonian();
    double e0 = eval_energy(h, s0);
    auto tr = flow_singular(sp, s0, 2.0);
    CHECK(std::abs(eval_energy(h, tr.final) - e0) <= 1e-6 * std::abs(e0));
    CHECK(tr.energy_drift <= 1e-6);
    CHECK(tr.min_distance < 2 * mu);
    // deflected: the outgoing direction differs from the incoming one
    CHECK(tr.final.p.normalized().dot(vec({1, 0})) < 0.99);
}

TEST_CASE("repelling center head-on turns back at the closed-form radius")
{
    double mu = 1e-2, alpha = -1.0;
    auto sp = one_center(mu, alpha);
    PhaseState s0{vec({1, 0}), vec({-1, 0})};
    double e = eval_energy(sp.hamiltonian(), s0);
    // 1-d: mu |alpha| / r* = E
    double r_star = mu * std::abs(alpha) / e;
    auto tr = flow_singular(sp, s0, 3.0);
    CHECK(tr.min_distance == doctest::Approx(r_star).epsilon(1e-6));
    CHECK(tr.final.p(0) > 0);
}

TEST_CASE("attracting center head-on breaches the exclusion radius")
{
    auto sp = one_center(1e-3, 1.0);
    CHECK_THROWS_AS(flow_singular(sp, {vec({1, 0}), vec({-1, 0})}, 3.0), CollisionError);
}

TEST_CASE("mu -> 0 continuity along a link")
{
    std::vector<double> mus{1e-2, 1e-3, 1e-4}, dev;
    for (double mu : mus) {
        SingularFlowOptions o;
        o.keep_samples = true;
        auto tr = flow_singular(square(mu), {vec({0.25, 0}), vec({1, 0})}, 0.5, o);
        double d = 0;
        for (const auto& s : tr.samples)
            d = std::max(d, std::abs(s.q(1)));
        dev.push_back(d);
    }
    CHECK(loglog_fit(mus, dev).slope >= 0.8);
}

TEST_CASE("impact parameter of a Rutherford deflection")
{
    // b = mu alpha / (v^2 tan(delta / 2)); right-angle deflection at v = 1 gives b = mu alpha
    CHECK(impact_parameter(1e-3, 2.0, 1.0, M_PI / 2) == doctest::Approx(2e-3).epsilon(1e-14));
    CHECK(impact_parameter(1e-3, 1.0, 2.0, M_PI / 2) == doctest::Approx(2.5e-4).epsilon(1e-14));
}

TEST_CASE("square shadow experiment")
{
    auto sp = square(1e-3);
    auto dl = free_dls(sp);
    ChainConfiguration c;
    c.code = {{}, {}, {}, {}};
    for (int i = 0; i < 4; ++i)
        c.points.push_back({i, Vec(), Vec()});
    std::vector<double> mus{1e-3, std::pow(10, -3.5)};
    ShadowExperimentOptions o;
    o.jobs = 2;
    auto rows = shadow_experiment(dl, c, sp, mus, o);
    REQUIRE(rows.size() == 2);
    std::vector<double> err;
    for (const auto& r : rows) {
        CHECK(r.converged);
        CHECK(r.energy_drift <= 1e-6);
        CHECK(r.min_distance > sp.guard() * r.mu * r.mu);
        err.push_back(r.sup_error);
    }
    CHECK(err[1] < err[0]);
    CHECK(loglog_fit(mus, err).slope >= 0.8);
}

TEST_CASE("collinear centers need a straight continuation and are rejected")
{
    auto n = std::make_shared<Scatterer>(
        Scatterer::point_set(AmbientSpace::euclidean(2), {vec({0, 0}), vec({1, 0}), vec({2, 0}), vec({1, 1})}));
    auto sp = SingularPerturbation::centers(ClassicalHamiltonian::free(2), n, 1e-3, {1, 1, 1, 1});
    auto dl = free_dls(sp);
    ChainConfiguration c;
    c.code = {{}, {}, {}};
    c.points = {{0, Vec(), Vec()}, {1, Vec(), Vec()}, {2, Vec(), Vec()}};
    CHECK_THROWS_AS(shadow_experiment(dl, c, sp, {1e-3}), GeometryError);
}
