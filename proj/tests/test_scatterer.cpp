#include "degbill/scatterer.hpp"

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

Scatterer circle3()
{
    auto sp = AmbientSpace::euclidean(3);
    return Scatterer::chart(sp, 1, [](const Vec& u) { return vec({std::cos(u(0)), std::sin(u(0)), 0.0}); });
}

double orthonormality_error(const Frames& f, const Mat& g)
{
    Mat all(f.tangent.rows(), f.tangent.cols() + f.normal.cols());
    all << f.tangent, f.normal;
    return (all.transpose() * g * all - Mat::Identity(all.cols(), all.cols())).cwiseAbs().maxCoeff();
}

} // namespace

TEST_CASE("frames of a point set")
{
    auto sp = AmbientSpace::euclidean(2);
    auto n = Scatterer::point_set(sp, {vec({0, 0}), vec({1, 1})});
    auto f = n.frames(1, Vec());
    CHECK(f.tangent.cols() == 0);
    CHECK((f.normal - Mat::Identity(2, 2)).norm() < 1e-15);
}

TEST_CASE("frames of the two-body diagonal")
{
    auto sp = AmbientSpace::euclidean(4);
    auto n = Scatterer::diagonal(sp, 2);
    auto f = n.frames(0, vec({0.3, -0.2}));
    double r = 1 / std::sqrt(2.0);
    // span of (e,e)/sqrt2 and (e,-e)/sqrt2 for e = e1, e2
    Mat t(4, 2), nn(4, 2);
    t << r, 0, 0, r, r, 0, 0, r;
    nn << r, 0, 0, r, -r, 0, 0, -r;
    CHECK((f.tangent * f.tangent.transpose() - t * t.transpose()).norm() < 1e-12);
    CHECK((f.normal * f.normal.transpose() - nn * nn.transpose()).norm() < 1e-12);
    CHECK(orthonormality_error(f, Mat::Identity(4, 4)) < 1e-12);
}

TEST_CASE("frames of a curve chart")
{
    auto n = circle3();
    auto f = n.frames(0, vec({0.0}));
    CHECK((f.tangent.col(0).cwiseAbs() - vec({0, 1, 0})).norm() < 1e-9);
    CHECK((f.normal.col(0).cwiseAbs() - vec({1, 0, 0})).norm() < 1e-9);
    CHECK((f.normal.col(1).cwiseAbs() - vec({0, 0, 1})).norm() < 1e-9);
    CHECK(orthonormality_error(f, Mat::Identity(3, 3)) < 1e-12);
}

TEST_CASE("frames are orthonormal in a mass metric and vary continuously")
{
    auto sp = AmbientSpace::euclidean(4);
    Mat m = vec({1, 1, 2, 2}).asDiagonal();
    auto n = Scatterer::diagonal(sp, 2, m);
    CHECK(orthonormality_error(n.frames(0, vec({0.1, 0.2})), m) < 1e-12);

    auto c = circle3();
    auto f0 = c.frames(0, vec({0.4}));
    auto f1 = c.frames(0, vec({0.4 + 1e-6}));
    CHECK((f0.tangent - f1.tangent).norm() < 1e-5);
    CHECK((f0.normal - f1.normal).norm() < 1e-5);
}

TEST_CASE("metric_frames rejects rank loss")
{
    Mat j(3, 2);
    j << 1, 2, 0, 0, 0, 0;
    CHECK_THROWS_AS(metric_frames(j, Mat::Identity(3, 3)), DegeneracyError);
}

TEST_CASE("tube_point examples")
{
    auto sp = AmbientSpace::euclidean(2);
    auto n = Scatterer::point_set(sp, {vec({0, 0})});
    CHECK((n.tube_point(0, Vec(), vec({1, 0}), 0.01) - vec({0.01, 0})).norm() < 1e-16);
    CHECK(n.tube_point(0, Vec(), vec({0, 1}), 0.0).norm() == 0.0);

    auto d = Scatterer::diagonal(AmbientSpace::euclidean(4), 2);
    double eps = 0.03;
    // the normal frame is fixed by Gram-Schmidt; pick s so that the normal offset is (e1,-e1)/sqrt2
    auto f = d.frames(0, vec({0.5, 0.5}));
    double r = 1 / std::sqrt(2.0);
    Vec target = vec({r, 0, -r, 0});
    Vec s = f.normal.transpose() * target;
    Vec q = d.tube_point(0, vec({0.5, 0.5}), s, eps);
    CHECK(q(0) - q(2) == doctest::Approx(eps * std::sqrt(2.0)).epsilon(1e-13));
    CHECK(std::abs(q(1) - q(3)) < 1e-15);
    CHECK(((q.head(2) + q.tail(2)) / 2 - vec({0.5, 0.5})).norm() < 1e-15);
}

TEST_CASE("nearest examples")
{
    auto sp = AmbientSpace::euclidean(2);
    auto n = Scatterer::point_set(sp, {vec({0, 0})});
    CHECK(n.nearest(vec({3, 4})).distance == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(n.nearest(vec({0, 0})).distance == 0.0);

    auto d = Scatterer::diagonal(AmbientSpace::euclidean(2), 1);
    auto pr = d.nearest(vec({0.9, 0.2}));
    CHECK(pr.distance == doctest::Approx(0.7 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(pr.foot(0) == doctest::Approx(0.55));

    auto two = Scatterer::point_set(sp, {vec({-1, 0}), vec({1, 0})});
    CHECK(two.nearest(vec({0, 3})).ambiguous);
    CHECK_FALSE(two.nearest(vec({0.1, 3})).ambiguous);
}

TEST_CASE("nearest on a torus uses the minimal image")
{
    auto t = AmbientSpace::torus(vec({1, 1}));
    auto n = Scatterer::point_set(t, {vec({0, 0})});
    CHECK(n.nearest(vec({0.9, 0.95})).distance == doctest::Approx(std::hypot(0.1, 0.05)).epsilon(1e-12));
}

TEST_CASE("nearest of a chart satisfies first-order optimality")
{
    auto c = circle3();
    auto pr = c.nearest(vec({1.1, 0.3, 0.2}), vec({0.2}));
    Mat j = c.jacobian(0, pr.x);
    CHECK(std::abs(j.col(0).dot(pr.offset)) < 1e-10);
    double rho = std::hypot(1.1, 0.3);
    CHECK(pr.distance == doctest::Approx(std::hypot(rho - 1, 0.2)).epsilon(1e-10));
}

TEST_CASE("tube points project back to their base")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    auto c = circle3();
    for (int k = 0; k < 20; ++k) {
        Vec x = vec({u(rng) * 3});
        Vec s = vec({u(rng), u(rng)}).normalized();
        double eps = 0.05 * std::abs(u(rng)) + 1e-3;
        auto pr = c.nearest(c.tube_point(0, x, s, eps), x);
        CHECK(pr.distance == doctest::Approx(eps).epsilon(1e-10));
        CHECK(std::abs(pr.x(0) - x(0)) < 1e-9);
    }
    auto d = Scatterer::diagonal(AmbientSpace::euclidean(4), 2, Mat(vec({1, 1, 2, 2}).asDiagonal()));
    for (int k = 0; k < 20; ++k) {
        Vec x = vec({u(rng), u(rng)});
        Vec s = vec({u(rng), u(rng)}).normalized();
        auto pr = d.nearest(d.tube_point(0, x, s, 0.02));
        CHECK(pr.distance == doctest::Approx(0.02).epsilon(1e-12));
        CHECK((pr.x - x).norm() < 1e-12);
    }
}
