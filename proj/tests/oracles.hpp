#pragma once

// Test-side reference computations, independent of the library code paths.

#include "degbill/dls.hpp"
#include "degbill/kepler.hpp"

#include <cmath>
#include <functional>
#include <initializer_list>
#include <vector>

namespace oracle {

using degbill::Mat;
using degbill::Vec;

inline Vec vec(std::initializer_list<double> xs)
{
    Vec v(static_cast<Eigen::Index>(xs.size()));
    int i = 0;
    for (double x : xs)
        v(i++) = x;
    return v;
}

// Ellipse with focus at the origin, perihelion on +x, traversed counterclockwise
// as the eccentric anomaly grows.
struct Ellipse {
    double a, e;
    Vec point(double E) const { return vec({a * (std::cos(E) - e), a * std::sqrt(1 - e * e) * std::sin(E)}); }
    // integral of sqrt(2/r - 1/a) |dx/dE| from E1 to E2 (composite Simpson)
    double action(double E1, double E2, int panels = 4000) const
    {
        auto f = [&](double E) {
            double r = a * (1 - e * std::cos(E));
            double ds = a * std::sqrt(1 - e * e * std::cos(E) * std::cos(E));
            return std::sqrt(2 / r - 1 / a) * ds;
        };
        double h = (E2 - E1) / panels, s = f(E1) + f(E2);
        for (int i = 1; i < panels; ++i)
            s += f(E1 + i * h) * (i % 2 ? 4 : 2);
        return s * h / 3;
    }
    Vec empty_focus() const { return vec({-2 * a * e, 0}); }
};

// Long branch iff the empty focus lies in the region bounded by the arc and its chord.
inline degbill::ArcType arc_type(const Ellipse& el, double E1, double E2)
{
    std::vector<Vec> poly;
    for (int i = 0; i <= 400; ++i)
        poly.push_back(el.point(E1 + (E2 - E1) * i / 400.0));
    Vec f = el.empty_focus();
    bool inside = false;
    for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Vec &p = poly[i], &q = poly[j];
        if ((p(1) > f(1)) != (q(1) > f(1)) && f(0) < (q(0) - p(0)) * (f(1) - p(1)) / (q(1) - p(1)) + p(0))
            inside = !inside;
    }
    degbill::ArcType t;
    t.orientation = degbill::Orientation::Counterclockwise;
    t.branch = inside ? degbill::Branch::Long : degbill::Branch::Short;
    return t;
}

inline double bisect_kepler(double M, double e)
{
    double lo = M - 1.0 - e, hi = M + 1.0 + e;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (mid - e * std::sin(mid) - M > 0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

// min over alpha1 h1 + alpha2 h2 = E of alpha1 J_k1(h1) + alpha2 J_k2(h2): dense scan of the
// feasible h1 interval, then ternary refinement around the best grid point.
inline double three_body_brute_force(int k1, int k2, const Vec& xm, const Vec& xp, double a1, double a2, double E)
{
    double lo = degbill::min_arc_energy(xm, xp), hi = (E - a2 * lo) / a1;
    auto cost = [&](double h1) {
        double h2 = (E - a1 * h1) / a2;
        return a1 * degbill::kepler_J(k1, h1, xm, xp) + a2 * degbill::kepler_J(k2, h2, xm, xp);
    };
    const int grid = 20000;
    double best = 0, bv = INFINITY;
    for (int i = 1; i < grid; ++i) {
        double h1 = lo + (hi - lo) * i / grid;
        if (h1 >= 0 || (E - a1 * h1) / a2 >= 0)
            continue;
        double v = cost(h1);
        if (v < bv) {
            bv = v;
            best = h1;
        }
    }
    double step = (hi - lo) / grid, x0 = best - step, x1 = best + step;
    for (int i = 0; i < 200; ++i) {
        double m1 = x0 + (x1 - x0) / 3, m2 = x1 - (x1 - x0) / 3;
        if (cost(m1) < cost(m2))
            x1 = m2;
        else
            x0 = m1;
    }
    return cost(0.5 * (x0 + x1));
}

// Block infinity norm of a dense inverse: max_i sum_j |G_ij|_2.
inline double dense_block_inverse_norm(const degbill::BlockTridiagonalHessian& h)
{
    Mat g = h.dense().inverse();
    auto off = h.offsets();
    double best = 0;
    for (int i = 0; i < h.blocks(); ++i) {
        double row = 0;
        for (int j = 0; j < h.blocks(); ++j) {
            Mat b = g.block(off[i], off[j], h.diag[i].rows(), h.diag[j].rows());
            row += b.jacobiSvd().singularValues()(0);
        }
        best = std::max(best, row);
    }
    return best;
}

using IMat = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

} // namespace oracle
