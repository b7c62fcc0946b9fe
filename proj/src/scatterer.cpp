#include "degbill/scatterer.hpp"

#include <cmath>
#include <limits>

namespace degbill {

namespace {

Mat default_metric(const Mat& metric, int d)
{
    if (metric.size() == 0)
        return Mat::Identity(d, d);
    if (metric.rows() != d || metric.cols() != d)
        throw DomainError("scatterer metric has wrong dimension");
    return metric;
}

double gnorm(const Mat& g, const Vec& v)
{
    return std::sqrt(v.dot(g * v));
}

} // namespace

Frames metric_frames(const Mat& jacobian, const Mat& metric)
{
    const Eigen::Index d = metric.rows();
    const Eigen::Index m = jacobian.cols();
    const double scale = std::max(1.0, jacobian.size() ? jacobian.cwiseAbs().maxCoeff() : 1.0);
    Frames f;
    f.tangent.resize(d, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        Vec v = jacobian.col(j);
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index i = 0; i < j; ++i)
                v -= f.tangent.col(i).dot(metric * v) * f.tangent.col(i);
        const double n = gnorm(metric, v);
        if (!(n > 1e-10 * scale))
            throw DegeneracyError("scatterer chart Jacobian is rank deficient");
        f.tangent.col(j) = v / n;
    }
    f.normal.resize(d, d - m);
    Eigen::Index k = 0;
    for (Eigen::Index e = 0; e < d && k < d - m; ++e) {
        Vec v = Vec::Unit(d, e);
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index i = 0; i < m; ++i)
                v -= f.tangent.col(i).dot(metric * v) * f.tangent.col(i);
            for (Eigen::Index i = 0; i < k; ++i)
                v -= f.normal.col(i).dot(metric * v) * f.normal.col(i);
        }
        const double n = gnorm(metric, v);
        if (n > 1e-8)
            f.normal.col(k++) = v / n;
    }
    if (k != d - m)
        throw DegeneracyError("could not complete the normal frame");
    return f;
}

Scatterer Scatterer::point_set(const AmbientSpace& space, std::vector<Vec> points, Mat metric)
{
    if (points.empty())
        throw DomainError("point scatterer needs at least one point");
    Scatterer s(space);
    s.kind_ = ScattererKind::PointSet;
    s.m_ = 0;
    s.metric_ = default_metric(metric, space.dim());
    for (auto& p : points)
        if (p.size() != space.dim())
            throw DomainError("scatterer point has wrong dimension");
    s.points_ = std::move(points);
    double r = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < s.points_.size(); ++i)
        for (size_t j = i + 1; j < s.points_.size(); ++j)
            r = std::min(r, gnorm(s.metric_, space.min_image(s.points_[i] - s.points_[j])) / 2.0);
    if (space.is_torus())
        r = std::min(r, space.periods().minCoeff() / 2.0 * std::sqrt(s.metric_.diagonal().minCoeff()));
    s.tube_radius_ = std::isfinite(r) ? r : 1.0;
    s.const_frames_ = metric_frames(Mat(space.dim(), 0), s.metric_);
    return s;
}

Scatterer Scatterer::affine(const AmbientSpace& space, Vec origin, Mat basis, Mat metric)
{
    if (origin.size() != space.dim() || basis.rows() != space.dim())
        throw DomainError("affine scatterer: dimension mismatch");
    if (basis.cols() >= space.dim())
        throw DomainError("affine scatterer must have positive codimension");
    Scatterer s(space);
    s.kind_ = ScattererKind::Affine;
    s.m_ = static_cast<int>(basis.cols());
    s.metric_ = default_metric(metric, space.dim());
    s.origin_ = std::move(origin);
    s.basis_ = std::move(basis);
    s.const_frames_ = metric_frames(s.basis_, s.metric_);
    s.tube_radius_ = space.is_torus() ? space.periods().minCoeff() / 4.0 : 1.0;
    return s;
}

Scatterer Scatterer::diagonal(const AmbientSpace& space, int body_dim, Mat metric)
{
    if (space.dim() != 2 * body_dim)
        throw DomainError("diagonal scatterer needs ambient dimension 2 * body_dim");
    Mat basis(2 * body_dim, body_dim);
    basis << Mat::Identity(body_dim, body_dim), Mat::Identity(body_dim, body_dim);
    return affine(space, Vec::Zero(2 * body_dim), basis, std::move(metric));
}

Scatterer Scatterer::chart(const AmbientSpace& space, int m, Immersion psi, ImmersionJacobian jacobian, Mat metric,
                           double tube_radius)
{
    if (m < 0 || m >= space.dim())
        throw DomainError("chart dimension must satisfy 0 <= m < d");
    if (!psi)
        throw DomainError("chart immersion missing");
    Scatterer s(space);
    s.kind_ = ScattererKind::Chart;
    s.m_ = m;
    s.metric_ = default_metric(metric, space.dim());
    s.psi_ = std::move(psi);
    s.jac_ = std::move(jacobian);
    s.tube_radius_ = tube_radius;
    return s;
}

void Scatterer::check_component(int component) const
{
    if (component < 0 || component >= components())
        throw DomainError("scatterer component index out of range");
}

Vec Scatterer::embed(int component, const Vec& x) const
{
    check_component(component);
    switch (kind_) {
    case ScattererKind::PointSet:
        return points_[static_cast<size_t>(component)];
    case ScattererKind::Affine:
        return origin_ + basis_ * x;
    case ScattererKind::Chart:
        return psi_(x);
    }
    return Vec();
}

Mat Scatterer::jacobian(int component, const Vec& x) const
{
    check_component(component);
    switch (kind_) {
    case ScattererKind::PointSet:
        return Mat(ambient_dim(), 0);
    case ScattererKind::Affine:
        return basis_;
    case ScattererKind::Chart:
        break;
    }
    if (jac_)
        return jac_(x);
    Mat jm(ambient_dim(), m_);
    for (int j = 0; j < m_; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        jm.col(j) = (psi_(xp) - psi_(xm)) / (2.0 * h);
    }
    return jm;
}

Mat Scatterer::curvature(int component, const Vec& x, const Vec& g) const
{
    check_component(component);
    if (kind_ != ScattererKind::Chart)
        return Mat::Zero(m_, m_);
    Mat c(m_, m_);
    const double h = 1e-4;
    auto f = [&](const Vec& y) { return g.dot(psi_(y)); };
    const double f0 = f(x);
    for (int i = 0; i < m_; ++i) {
        for (int j = i; j < m_; ++j) {
            double v;
            if (i == j) {
                Vec xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                v = (f(xp) - 2.0 * f0 + f(xm)) / (h * h);
            } else {
                Vec a = x, b = x, cc = x, dd = x;
                a[i] += h, a[j] += h;
                b[i] += h, b[j] -= h;
                cc[i] -= h, cc[j] += h;
                dd[i] -= h, dd[j] -= h;
                v = (f(a) - f(b) - f(cc) + f(dd)) / (4.0 * h * h);
            }
            c(i, j) = c(j, i) = v;
        }
    }
    return c;
}

Frames Scatterer::frames(int component, const Vec& x) const
{
    check_component(component);
    if (constant_frames())
        return const_frames_;
    return metric_frames(jacobian(component, x), metric_);
}

Vec Scatterer::tube_point(int component, const Vec& x, const Vec& s, double eps) const
{
    const Frames f = frames(component, x);
    if (s.size() != f.normal.cols())
        throw DomainError("normal direction has wrong dimension");
    return embed(component, x) + eps * (f.normal * s);
}

Projection Scatterer::nearest(const Vec& q, const Vec& x0) const
{
    if (q.size() != ambient_dim())
        throw DomainError("point has wrong dimension");
    Projection best;
    best.distance = std::numeric_limits<double>::infinity();
    if (kind_ == ScattererKind::PointSet) {
        double second = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < points_.size(); ++i) {
            const Vec off = space_.min_image(q - points_[i]);
            const double dist = gnorm(metric_, off);
            if (dist < best.distance) {
                second = best.distance;
                best.component = static_cast<int>(i);
                best.foot = q - off;
                best.offset = off;
                best.distance = dist;
            } else if (dist < second) {
                second = dist;
            }
        }
        best.x = Vec(0);
        best.ambiguous = std::isfinite(second) && second - best.distance <= 1e-12 * std::max(1.0, second);
        return best;
    }
    if (kind_ == ScattererKind::Affine) {
        const Vec off0 = space_.min_image(q - origin_);
        const Mat gb = metric_ * basis_;
        best.x = (basis_.transpose() * gb).ldlt().solve(gb.transpose() * off0);
        best.offset = off0 - basis_ * best.x;
        best.foot = q - best.offset;
        best.distance = gnorm(metric_, best.offset);
        return best;
    }
    Vec x = x0.size() == m_ ? x0 : Vec::Zero(m_);
    for (int it = 0; it < 100; ++it) {
        const Vec off = space_.min_image(q - psi_(x));
        const Mat jm = jacobian(0, x);
        const Vec grad = jm.transpose() * (metric_ * off);
        const Vec dx = (jm.transpose() * metric_ * jm).ldlt().solve(grad);
        x += dx;
        if (dx.norm() <= 1e-14 * (1.0 + x.norm()))
            break;
    }
    best.x = x;
    best.offset = space_.min_image(q - psi_(x));
    best.foot = q - best.offset;
    best.distance = gnorm(metric_, best.offset);
    const Vec ortho = jacobian(0, x).transpose() * (metric_ * best.offset);
    if (ortho.norm() > 1e-8 * std::max(1.0, best.distance))
        throw GeometryError("projection onto the scatterer did not converge");
    return best;
}

} // namespace degbill
