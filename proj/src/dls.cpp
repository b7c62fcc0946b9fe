#include "degbill/dls.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace degbill {

IVec symbol_to_ivec(const Symbol& k)
{
    IVec v(static_cast<Eigen::Index>(k.size()));
    for (size_t i = 0; i < k.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = k[i];
    return v;
}

std::vector<Vec> LinkAction::sample_path(const Symbol&, const Vec& q_minus, const Vec& q_plus, int n) const
{
    std::vector<Vec> path;
    for (int i = 0; i < n; ++i)
        path.push_back(q_minus + (q_plus - q_minus) * (static_cast<double>(i) / std::max(1, n - 1)));
    return path;
}

std::shared_ptr<const LinkAction> LinkAction::with_margin(double) const
{
    return nullptr;
}

std::shared_ptr<const LinkAction> action_with_margin(const std::shared_ptr<const LinkAction>& a, double margin)
{
    auto r = a->with_margin(margin);
    return r ? r : a;
}

namespace {

/// Straight-line Jacobi length c * |delta|_M with derivatives in delta.
struct Chord {
    double value, rho, c;
    Vec grad;
    Mat hess;
};

Chord chord(const ClassicalHamiltonian& h, const Vec& q_minus, const Vec& delta, double E, bool second)
{
    Chord r;
    const double kin = 2.0 * (E - h.W(q_minus));
    if (!(kin > 0.0))
        throw DomainError("energy infeasible: E <= W");
    r.c = std::sqrt(kin);
    r.rho = h.vector_norm(delta);
    if (!(r.rho > 0.0))
        throw GeometryError("zero-length link");
    r.value = r.c * r.rho;
    const Vec md = h.mass() * delta;
    r.grad = r.c * md / r.rho;
    if (second)
        r.hess = r.c * (h.mass() / r.rho - md * md.transpose() / (r.rho * r.rho * r.rho));
    return r;
}

} // namespace

FreeFlightAction::FreeFlightAction(ClassicalHamiltonian h, AmbientSpace space, double E)
    : h_(std::move(h)), space_(std::move(space)), e_(E)
{
    if (!h_.is_free())
        throw DomainError("free-flight action needs a free Hamiltonian");
    if (h_.dim() != space_.dim())
        throw DomainError("free-flight action: dimension mismatch");
}

LinkEval FreeFlightAction::evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const
{
    const Vec delta = space_.displacement(q_minus, q_plus, symbol_to_ivec(k));
    const Chord ch = chord(h_, q_minus, delta, e_, second);
    LinkEval ev;
    ev.value = ch.value;
    ev.time = ch.rho / ch.c;
    ev.d_minus = -ch.grad;
    ev.d_plus = ch.grad;
    if (second) {
        ev.h_mm = ch.hess;
        ev.h_pp = ch.hess;
        ev.h_mp = -ch.hess;
        ev.has_second = true;
    }
    return ev;
}

std::vector<Vec> FreeFlightAction::sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const
{
    const Vec delta = space_.displacement(q_minus, q_plus, symbol_to_ivec(k));
    return LinkAction::sample_path(k, q_minus, q_minus + delta, n);
}

BoxAction::BoxAction(ClassicalHamiltonian h, Vec lo, Vec hi, double E, double margin)
    : h_(std::move(h)), space_(AmbientSpace::euclidean(h_.dim())), lo_(std::move(lo)), hi_(std::move(hi)), e_(E),
      margin_(margin)
{
    if (!h_.is_free())
        throw DomainError("box action needs a free Hamiltonian");
    if (lo_.size() != h_.dim() || hi_.size() != h_.dim())
        throw DomainError("box action: wall dimension mismatch");
    const Mat& m = h_.mass();
    if ((m - Mat(m.diagonal().asDiagonal())).norm() > 0.0)
        throw DomainError("box action needs a diagonal mass matrix");
    if (((hi_ - lo_).array() <= 2.0 * margin_).any())
        throw DomainError("box walls: margin leaves no room");
}

int BoxAction::reflections(const Symbol& k)
{
    int n = 0;
    for (int v : k)
        n += std::abs(v);
    return n;
}

Vec BoxAction::unfold(const Symbol& k, const Vec& q, Vec* sign) const
{
    const Eigen::Index d = q.size();
    if (!k.empty() && static_cast<Eigen::Index>(k.size()) != d)
        throw DomainError("box symbol has wrong dimension");
    Vec y(d);
    if (sign)
        sign->resize(d);
    for (Eigen::Index c = 0; c < d; ++c) {
        const double lo = lo_[c] + margin_;
        const double w = hi_[c] - lo_[c] - 2.0 * margin_;
        const int n = k.empty() ? 0 : k[static_cast<size_t>(c)];
        const double t = (q[c] - lo) / w;
        const bool even = (n % 2) == 0;
        y[c] = lo + w * (n + (even ? t : 1.0 - t));
        if (sign)
            (*sign)[c] = even ? 1.0 : -1.0;
    }
    return y;
}

Vec BoxAction::fold(const Vec& y) const
{
    Vec q(y.size());
    for (Eigen::Index c = 0; c < y.size(); ++c) {
        const double lo = lo_[c] + margin_;
        const double w = hi_[c] - lo_[c] - 2.0 * margin_;
        const double u = (y[c] - lo) / w;
        const double n = std::floor(u);
        const double t = u - n;
        const bool even = std::fmod(std::abs(n), 2.0) == 0.0;
        q[c] = lo + w * (even ? t : 1.0 - t);
    }
    return q;
}

LinkEval BoxAction::evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const
{
    Vec sign;
    const Vec y = unfold(k, q_plus, &sign);
    const Chord ch = chord(h_, q_minus, y - q_minus, e_, second);
    LinkEval ev;
    ev.value = ch.value;
    ev.time = ch.rho / ch.c;
    ev.d_minus = -ch.grad;
    ev.d_plus = sign.cwiseProduct(ch.grad);
    if (second) {
        const auto s = sign.asDiagonal();
        ev.h_mm = ch.hess;
        ev.h_mp = -(ch.hess * s);
        ev.h_pp = s * ch.hess * s;
        ev.has_second = true;
    }
    return ev;
}

std::vector<Vec> BoxAction::sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const
{
    const Vec y = unfold(k, q_plus);
    std::vector<Vec> path;
    for (int i = 0; i < n; ++i)
        path.push_back(fold(q_minus + (y - q_minus) * (static_cast<double>(i) / std::max(1, n - 1))));
    return path;
}

std::shared_ptr<const LinkAction> BoxAction::with_margin(double margin) const
{
    return std::make_shared<BoxAction>(h_, lo_, hi_, e_, margin);
}

ShootingAction::ShootingAction(ClassicalHamiltonian h, AmbientSpace space, double E, ConnectOptions options)
    : h_(std::move(h)), space_(std::move(space)), e_(E), options_(std::move(options))
{
    options_.compute_twist = false;
}

LinkEval ShootingAction::evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const
{
    ConnectOptions o = options_;
    o.winding = symbol_to_ivec(k);
    const CollisionOrbit orb = connect(h_, space_, q_minus, q_plus, e_, o);
    LinkEval ev;
    ev.value = orb.action;
    ev.time = orb.time;
    ev.d_minus = -orb.p_minus;
    ev.d_plus = orb.p_plus;
    if (!second)
        return ev;
    const int d = h_.dim();
    ConnectOptions w = o;
    w.steps = orb.steps;
    w.time_guess = orb.time;
    w.direction_guess = h_.velocity(orb.q_minus, orb.p_minus);
    w.path_samples = 2;
    const double step = 1e-5 * std::max(1.0, q_minus.lpNorm<Eigen::Infinity>());
    ev.h_mm.resize(d, d);
    ev.h_mp.resize(d, d);
    ev.h_pp.resize(d, d);
    for (int i = 0; i < d; ++i) {
        Vec a = q_minus, b = q_minus;
        a[i] += step;
        b[i] -= step;
        const CollisionOrbit oa = connect(h_, space_, a, q_plus, e_, w);
        const CollisionOrbit ob = connect(h_, space_, b, q_plus, e_, w);
        ev.h_mm.col(i) = -(oa.p_minus - ob.p_minus) / (2.0 * step);
        ev.h_mp.row(i) = ((oa.p_plus - ob.p_plus) / (2.0 * step)).transpose();
        Vec c = q_plus, e = q_plus;
        c[i] += step;
        e[i] -= step;
        const CollisionOrbit oc = connect(h_, space_, q_minus, c, e_, w);
        const CollisionOrbit oe = connect(h_, space_, q_minus, e, e_, w);
        ev.h_pp.col(i) = (oc.p_plus - oe.p_plus) / (2.0 * step);
    }
    ev.h_mm = 0.5 * (ev.h_mm + ev.h_mm.transpose()).eval();
    ev.h_pp = 0.5 * (ev.h_pp + ev.h_pp.transpose()).eval();
    ev.has_second = true;
    return ev;
}

std::vector<Vec> ShootingAction::sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const
{
    ConnectOptions o = options_;
    o.winding = symbol_to_ivec(k);
    o.path_samples = n;
    return connect(h_, space_, q_minus, q_plus, e_, o).path;
}

Mat PointModel::jacobian(const ChainPoint& c) const
{
    const int m = dim(c);
    const Vec q0 = position(c);
    Mat jm(q0.size(), m);
    const double h = 1e-6;
    for (int j = 0; j < m; ++j) {
        Vec dp = Vec::Zero(m), dm = Vec::Zero(m);
        dp[j] = h;
        dm[j] = -h;
        jm.col(j) = (embed(c, dp) - embed(c, dm)) / (2.0 * h);
    }
    return jm;
}

Mat PointModel::curvature(const ChainPoint& c, const Vec& g) const
{
    const int m = dim(c);
    Mat cm(m, m);
    const double h = 1e-4;
    auto f = [&](const Vec& d) { return g.dot(embed(c, d)); };
    const double f0 = f(Vec::Zero(m));
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            double v;
            if (i == j) {
                Vec a = Vec::Zero(m), b = Vec::Zero(m);
                a[i] = h;
                b[i] = -h;
                v = (f(a) - 2.0 * f0 + f(b)) / (h * h);
            } else {
                Vec a = Vec::Zero(m), b = a, cc = a, dd = a;
                a[i] = h, a[j] = h;
                b[i] = h, b[j] = -h;
                cc[i] = -h, cc[j] = h;
                dd[i] = -h, dd[j] = -h;
                v = (f(a) - f(b) - f(cc) + f(dd)) / (4.0 * h * h);
            }
            cm(i, j) = cm(j, i) = v;
        }
    }
    return cm;
}

Vec ScattererModel::embed(const ChainPoint& c, const Vec& delta) const
{
    return n_->embed(c.component, delta.size() ? Vec(c.x + delta) : c.x);
}

ChainPoint ScattererModel::retract(const ChainPoint& c, const Vec& delta) const
{
    ChainPoint r = c;
    if (delta.size())
        r.x = c.x + delta;
    return r;
}

Mat ScattererModel::jacobian(const ChainPoint& c) const
{
    return n_->jacobian(c.component, c.x);
}

Mat ScattererModel::curvature(const ChainPoint& c, const Vec& g) const
{
    return n_->curvature(c.component, c.x, g);
}

Mat TubeModel::sphere_basis(const Vec& s)
{
    const Eigen::Index c = s.size();
    if (c <= 1)
        return Mat(c, 0);
    Mat col(c, 1);
    col.col(0) = s;
    Eigen::HouseholderQR<Mat> qr(col);
    const Mat q = qr.householderQ() * Mat::Identity(c, c);
    return q.rightCols(c - 1);
}

Vec TubeModel::embed(const ChainPoint& c, const Vec& delta) const
{
    if (delta.size() == 0)
        return n_->tube_point(c.component, c.x, c.s, eps_);
    const ChainPoint r = retract(c, delta);
    return n_->tube_point(r.component, r.x, r.s, eps_);
}

ChainPoint TubeModel::retract(const ChainPoint& c, const Vec& delta) const
{
    const int m = n_->dim();
    const int k = n_->codim() - 1;
    ChainPoint r = c;
    if (delta.size() == 0)
        return r;
    if (delta.size() != m + k)
        throw DomainError("tube increment has wrong dimension");
    if (m > 0)
        r.x = c.x + delta.head(m);
    if (k > 0) {
        const Vec s = c.s + sphere_basis(c.s) * delta.tail(k);
        r.s = s / s.norm();
    }
    return r;
}

Mat TubeModel::jacobian(const ChainPoint& c) const
{
    if (!n_->constant_frames())
        return PointModel::jacobian(c);
    const int m = n_->dim();
    const int k = n_->codim() - 1;
    const Frames f = n_->frames(c.component, c.x);
    Mat jm(n_->ambient_dim(), m + k);
    if (m > 0)
        jm.leftCols(m) = n_->jacobian(c.component, c.x);
    if (k > 0)
        jm.rightCols(k) = eps_ * f.normal * sphere_basis(c.s);
    return jm;
}

Mat TubeModel::curvature(const ChainPoint& c, const Vec& g) const
{
    if (!n_->constant_frames())
        return PointModel::curvature(c, g);
    const int m = n_->dim();
    const int k = n_->codim() - 1;
    const Frames f = n_->frames(c.component, c.x);
    Mat cm = Mat::Zero(m + k, m + k);
    if (m > 0)
        cm.topLeftCorner(m, m) = n_->curvature(c.component, c.x, g);
    if (k > 0)
        cm.bottomRightCorner(k, k) = -eps_ * g.dot(f.normal * c.s) * Mat::Identity(k, k);
    return cm;
}

Vec SubspaceModel::embed(const ChainPoint& c, const Vec& delta) const
{
    return base_->embed(c, delta.size() ? Vec(v_ * delta) : Vec(Vec::Zero(v_.rows())));
}

ChainPoint SubspaceModel::retract(const ChainPoint& c, const Vec& delta) const
{
    return delta.size() ? base_->retract(c, v_ * delta) : c;
}

Mat SubspaceModel::jacobian(const ChainPoint& c) const
{
    return base_->jacobian(c) * v_;
}

Mat SubspaceModel::curvature(const ChainPoint& c, const Vec& g) const
{
    return v_.transpose() * base_->curvature(c, g) * v_;
}

void ChainConfiguration::validate() const
{
    if (code.empty())
        throw DomainError("chain has no links");
    if (boundary == Boundary::Periodic) {
        if (code.size() != points.size())
            throw DomainError("periodic chain: code and point counts differ");
    } else {
        if (code.size() != points.size() + 1)
            throw DomainError("fixed chain: code must have one more entry than free points");
        if (start.size() == 0 || end.size() == 0)
            throw DomainError("fixed chain: endpoints missing");
    }
}

std::vector<int> BlockTridiagonalHessian::offsets() const
{
    std::vector<int> off(diag.size() + 1, 0);
    for (size_t i = 0; i < diag.size(); ++i)
        off[i + 1] = off[i] + static_cast<int>(diag[i].rows());
    return off;
}

int BlockTridiagonalHessian::size() const
{
    return offsets().back();
}

Mat BlockTridiagonalHessian::dense() const
{
    const auto off = offsets();
    const int n = blocks();
    Mat d = Mat::Zero(off.back(), off.back());
    for (int i = 0; i < n; ++i)
        d.block(off[i], off[i], diag[i].rows(), diag[i].cols()) += diag[i];
    for (size_t i = 0; i < upper.size(); ++i) {
        const int a = static_cast<int>(i);
        const int b = (a + 1) % n;
        const Mat& u = upper[i];
        d.block(off[a], off[b], u.rows(), u.cols()) += u;
        d.block(off[b], off[a], u.cols(), u.rows()) += u.transpose();
    }
    return d;
}

namespace {

Vec stack(const std::vector<Vec>& v)
{
    Eigen::Index n = 0;
    for (const auto& x : v)
        n += x.size();
    Vec r(n);
    Eigen::Index o = 0;
    for (const auto& x : v) {
        r.segment(o, x.size()) = x;
        o += x.size();
    }
    return r;
}

std::vector<Vec> unstack(const Vec& r, const std::vector<int>& off)
{
    std::vector<Vec> v;
    for (size_t i = 0; i + 1 < off.size(); ++i)
        v.push_back(r.segment(off[i], off[i + 1] - off[i]));
    return v;
}

} // namespace

std::vector<Vec> BlockTridiagonalHessian::apply(const std::vector<Vec>& u) const
{
    return unstack(dense() * stack(u), offsets());
}

std::vector<Vec> BlockTridiagonalHessian::solve(const std::vector<Vec>& rhs) const
{
    const int n = blocks();
    const auto off = offsets();
    if (off.back() == 0)
        return rhs;
    if (periodic) {
        const Mat d = dense();
        Eigen::FullPivLU<Mat> lu(d);
        lu.setThreshold(1e-13);
        if (!lu.isInvertible())
            throw DegeneracyError("singular Hessian");
        return unstack(lu.solve(stack(rhs)), off);
    }
    // Block Thomas: forward elimination with pivot blocks S_i = A_i - U_{i-1}^T S_{i-1}^{-1} U_{i-1}.
    std::vector<Eigen::FullPivLU<Mat>> piv(static_cast<size_t>(n));
    std::vector<Vec> y(static_cast<size_t>(n));
    const double scale = std::max(1.0, dense().cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i) {
        Mat s = diag[static_cast<size_t>(i)];
        Vec r = rhs[static_cast<size_t>(i)];
        if (i > 0) {
            const Mat& u = upper[static_cast<size_t>(i - 1)];
            s -= u.transpose() * piv[static_cast<size_t>(i - 1)].solve(u);
            r -= u.transpose() * piv[static_cast<size_t>(i - 1)].solve(y[static_cast<size_t>(i - 1)]);
        }
        piv[static_cast<size_t>(i)].compute(s);
        if (s.size() > 0) {
            piv[static_cast<size_t>(i)].setThreshold(1e-14 * scale / std::max(1.0, s.cwiseAbs().maxCoeff()));
            if (!piv[static_cast<size_t>(i)].isInvertible())
                throw DegeneracyError("singular Hessian (block pivot)");
        }
        y[static_cast<size_t>(i)] = r;
    }
    std::vector<Vec> x(static_cast<size_t>(n));
    for (int i = n - 1; i >= 0; --i) {
        Vec r = y[static_cast<size_t>(i)];
        if (i + 1 < n)
            r -= upper[static_cast<size_t>(i)] * x[static_cast<size_t>(i + 1)];
        x[static_cast<size_t>(i)] = diag[static_cast<size_t>(i)].size() ? piv[static_cast<size_t>(i)].solve(r) : r;
    }
    return x;
}

ChainState evaluate_chain(const DiscreteLagrangian& dl, const ChainConfiguration& c, bool second)
{
    c.validate();
    const int np = static_cast<int>(c.points.size());
    const int nl = c.links();
    ChainState st;
    for (const auto& p : c.points)
        st.positions.push_back(dl.points->position(p));
    auto tail = [&](int j) -> const Vec& {
        if (c.boundary == Boundary::Periodic)
            return st.positions[static_cast<size_t>(j)];
        return j == 0 ? c.start : st.positions[static_cast<size_t>(j - 1)];
    };
    auto head = [&](int j) -> const Vec& {
        if (c.boundary == Boundary::Periodic)
            return st.positions[static_cast<size_t>((j + 1) % np)];
        return j == nl - 1 ? c.end : st.positions[static_cast<size_t>(j)];
    };
    for (int j = 0; j < nl; ++j) {
        try {
            st.links.push_back(dl.action->evaluate(c.code[static_cast<size_t>(j)], tail(j), head(j), second));
        } catch (const Error& e) {
            std::ostringstream msg;
            msg << "link " << j << ": " << e.what();
            throw DomainError(msg.str());
        }
        st.action += st.links.back().value;
    }
    for (int i = 0; i < np; ++i) {
        const int in = c.boundary == Boundary::Periodic ? (i - 1 + np) % np : i;
        const int out = c.boundary == Boundary::Periodic ? i : i + 1;
        st.p_in.push_back(st.links[static_cast<size_t>(in)].d_plus);
        st.p_out.push_back(-st.links[static_cast<size_t>(out)].d_minus);
    }
    return st;
}

double chain_action(const DiscreteLagrangian& dl, const ChainConfiguration& c)
{
    return evaluate_chain(dl, c, false).action;
}

namespace {

std::vector<Vec> residual_from(const DiscreteLagrangian& dl, const ChainConfiguration& c, const ChainState& st)
{
    std::vector<Vec> r;
    for (size_t i = 0; i < c.points.size(); ++i) {
        const Mat jm = dl.points->jacobian(c.points[i]);
        r.push_back(jm.transpose() * (st.p_in[i] - st.p_out[i]));
    }
    return r;
}

BlockTridiagonalHessian hessian_from(const DiscreteLagrangian& dl, const ChainConfiguration& c, const ChainState& st)
{
    const int np = static_cast<int>(c.points.size());
    const bool per = c.boundary == Boundary::Periodic;
    BlockTridiagonalHessian h;
    h.periodic = per;
    std::vector<Mat> jac;
    for (const auto& p : c.points)
        jac.push_back(dl.points->jacobian(p));
    for (int i = 0; i < np; ++i) {
        const int in = per ? (i - 1 + np) % np : i;
        const int out = per ? i : i + 1;
        const LinkEval& a = st.links[static_cast<size_t>(in)];
        const LinkEval& b = st.links[static_cast<size_t>(out)];
        const Mat& jm = jac[static_cast<size_t>(i)];
        Mat blk = jm.transpose() * (a.h_pp + b.h_mm) * jm;
        const Vec g = a.d_plus + b.d_minus;
        blk += dl.points->curvature(c.points[static_cast<size_t>(i)], g);
        h.diag.push_back(0.5 * (blk + blk.transpose()));
    }
    const int nu = per ? np : np - 1;
    for (int i = 0; i < nu; ++i) {
        const int link = per ? i : i + 1;
        const int nxt = (i + 1) % np;
        h.upper.push_back(jac[static_cast<size_t>(i)].transpose() * st.links[static_cast<size_t>(link)].h_mp *
                          jac[static_cast<size_t>(nxt)]);
    }
    return h;
}

} // namespace

std::vector<Vec> residual(const DiscreteLagrangian& dl, const ChainConfiguration& c)
{
    return residual_from(dl, c, evaluate_chain(dl, c, false));
}

BlockTridiagonalHessian hessian(const DiscreteLagrangian& dl, const ChainConfiguration& c)
{
    return hessian_from(dl, c, evaluate_chain(dl, c, true));
}

double residual_norm(const std::vector<Vec>& r)
{
    double m = 0.0;
    for (const auto& v : r)
        if (v.size())
            m = std::max(m, v.lpNorm<Eigen::Infinity>());
    return m;
}

ChainConfiguration retract_chain(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                 const std::vector<Vec>& delta)
{
    ChainConfiguration r = c;
    for (size_t i = 0; i < c.points.size(); ++i)
        r.points[i] = dl.points->retract(c.points[i], delta[i]);
    return r;
}

namespace {

/// Solve (H + tau I) x = rhs with the smallest tau >= 0 making H + tau I positive definite.
std::vector<Vec> shifted_solve(const BlockTridiagonalHessian& h, const std::vector<Vec>& rhs)
{
    const Mat hd = h.dense();
    Vec b(hd.rows());
    Eigen::Index off = 0;
    for (const auto& v : rhs) {
        b.segment(off, v.size()) = v;
        off += v.size();
    }
    const double scale = std::max(hd.cwiseAbs().maxCoeff(), 1e-300);
    double tau = 0.0;
    for (int k = 0; k < 60; ++k) {
        Eigen::LLT<Mat> llt(hd + tau * Mat::Identity(hd.rows(), hd.cols()));
        if (llt.info() == Eigen::Success) {
            const Vec x = llt.solve(b);
            std::vector<Vec> out;
            off = 0;
            for (const auto& v : rhs) {
                out.push_back(x.segment(off, v.size()));
                off += v.size();
            }
            return out;
        }
        tau = tau == 0.0 ? 1e-10 * scale : 4.0 * tau;
    }
    throw DegeneracyError("shifted Hessian solve failed");
}

} // namespace

NewtonResult newton_chain(const DiscreteLagrangian& dl, const ChainConfiguration& c0, const NewtonOptions& o)
{
    c0.validate();
    NewtonResult res;
    res.chain = c0;
    int total = 0;
    for (const auto& p : c0.points)
        total += dl.points->dim(p);
    if (total == 0) {
        res.converged = true;
        return res;
    }
    auto l2 = [](const std::vector<Vec>& r) {
        double s = 0.0;
        for (const auto& v : r)
            s += v.squaredNorm();
        return std::sqrt(s);
    };
    ChainState st = evaluate_chain(dl, res.chain, true);
    std::vector<Vec> r = residual_from(dl, res.chain, st);
    for (res.iterations = 0; res.iterations <= o.max_iter; ++res.iterations) {
        res.residual_norm = residual_norm(r);
        if (res.residual_norm <= o.tol) {
            res.converged = true;
            break;
        }
        if (res.iterations == o.max_iter)
            break;
        const BlockTridiagonalHessian h = hessian_from(dl, res.chain, st);
        std::vector<Vec> rhs;
        for (const auto& v : r)
            rhs.push_back(-v);
        std::vector<std::vector<Vec>> directions{o.minimize ? shifted_solve(h, rhs) : h.solve(rhs)};
        if (o.minimize) {
            // steepest descent fallback for nearly singular convex Hessians
            const double hn = std::max(h.dense().cwiseAbs().rowwise().sum().maxCoeff(), 1e-300);
            std::vector<Vec> g;
            for (const auto& v : rhs)
                g.push_back(v / hn);
            directions.push_back(std::move(g));
        }
        const double r0 = l2(r);
        bool accepted = false;
        for (const auto& step : directions) {
            double slope = 0.0;
            for (size_t i = 0; i < r.size(); ++i)
                slope += r[i].dot(step[i]);
            double alpha = 1.0;
            for (int k = 0; k <= o.max_halvings && !accepted; ++k) {
                std::vector<Vec> d;
                for (const auto& v : step)
                    d.push_back(alpha * v);
                try {
                    ChainConfiguration trial = retract_chain(dl, res.chain, d);
                    ChainState ts = evaluate_chain(dl, trial, true);
                    std::vector<Vec> tr = residual_from(dl, trial, ts);
                    bool ok = l2(tr) < r0;
                    if (o.minimize) {
                        const double floor = 1e-12 * (1.0 + std::abs(st.action));
                        const double drop = ts.action - st.action;
                        ok = std::abs(alpha * slope) > floor ? drop <= 1e-4 * alpha * slope : ok;
                    }
                    if (ok) {
                        res.chain = std::move(trial);
                        st = std::move(ts);
                        r = std::move(tr);
                        accepted = true;
                    }
                } catch (const Error&) {
                }
                alpha *= 0.5;
            }
            if (accepted)
                break;
        }
        if (!accepted)
            break;
    }
    if (!res.converged) {
        std::ostringstream msg;
        msg << "newton_chain did not converge: residual " << res.residual_norm << " after " << res.iterations
            << " iterations";
        throw ConvergenceError(msg.str());
    }
    const Mat hd = hessian_from(dl, res.chain, st).dense();
    Eigen::SelfAdjointEigenSolver<Mat> es(hd, Eigen::EigenvaluesOnly);
    res.min_singular = es.eigenvalues().cwiseAbs().minCoeff();
    return res;
}

double block_inverse_norm(const BlockTridiagonalHessian& h)
{
    const Mat d = h.dense();
    if (d.size() == 0)
        return 0.0;
    Eigen::FullPivLU<Mat> lu(d);
    lu.setThreshold(1e-14);
    if (!lu.isInvertible())
        throw DegeneracyError("singular window");
    const Mat g = lu.inverse();
    const auto off = h.offsets();
    double best = 0.0;
    for (int i = 0; i < h.blocks(); ++i) {
        double row = 0.0;
        for (int j = 0; j < h.blocks(); ++j) {
            const Mat b = g.block(off[i], off[j], off[i + 1] - off[i], off[j + 1] - off[j]);
            if (b.size())
                row += Eigen::JacobiSVD<Mat>(b).singularValues()[0];
        }
        best = std::max(best, row);
    }
    return best;
}

BlockTridiagonalHessian window(const BlockTridiagonalHessian& h, int center, int half_width)
{
    const int n = h.blocks();
    if (n == 0)
        throw DomainError("empty Hessian");
    BlockTridiagonalHessian w;
    w.periodic = false;
    if (h.periodic) {
        auto idx = [n](int i) { return ((i % n) + n) % n; };
        for (int i = center - half_width; i <= center + half_width; ++i) {
            w.diag.push_back(h.diag[static_cast<size_t>(idx(i))]);
            if (i < center + half_width)
                w.upper.push_back(h.upper[static_cast<size_t>(idx(i))]);
        }
        return w;
    }
    const int a = std::max(0, center - half_width);
    const int b = std::min(n - 1, center + half_width);
    for (int i = a; i <= b; ++i) {
        w.diag.push_back(h.diag[static_cast<size_t>(i)]);
        if (i < b)
            w.upper.push_back(h.upper[static_cast<size_t>(i)]);
    }
    return w;
}

Certificate hyperbolicity_certificate(const BlockTridiagonalHessian& h, std::vector<int> windows, double stab_tol)
{
    Certificate cert;
    cert.windows = std::move(windows);
    for (int wdt : cert.windows) {
        double cw = 0.0;
        for (int center = 0; center < h.blocks(); ++center)
            cw = std::max(cw, block_inverse_norm(window(h, center, wdt)));
        cert.values.push_back(cw);
    }
    if (!cert.values.empty())
        cert.certificate = cert.values.back();
    if (cert.values.size() >= 2) {
        const double a = cert.values[cert.values.size() - 2];
        const double b = cert.values.back();
        cert.relative_change = std::abs(b - a) / a;
        cert.stabilized = cert.relative_change <= stab_tol;
    }
    return cert;
}

Certificate hyperbolicity_certificate(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                      std::vector<int> windows, double stab_tol)
{
    return hyperbolicity_certificate(hessian(dl, c), std::move(windows), stab_tol);
}

GreenFit green_decay(const BlockTridiagonalHessian& h, int j, int half_width)
{
    BlockTridiagonalHessian w = window(h, j, half_width);
    const auto off = w.offsets();
    const int nb = w.blocks();
    int center = half_width;
    if (!h.periodic)
        center = j - std::max(0, j - half_width);
    const Mat d = w.dense();
    Eigen::FullPivLU<Mat> lu(d);
    lu.setThreshold(1e-14);
    if (!lu.isInvertible())
        throw DegeneracyError("singular window");
    const int m = off[center + 1] - off[center];
    Mat load = Mat::Zero(d.rows(), m);
    load.block(off[center], 0, m, m) = Mat::Identity(m, m);
    const Mat g = lu.solve(load);
    GreenFit fit;
    for (int i = 0; i < nb; ++i) {
        const Mat b = g.block(off[i], 0, off[i + 1] - off[i], m);
        fit.profile.push_back(b.size() ? Eigen::JacobiSVD<Mat>(b).singularValues()[0] : 0.0);
    }
    const double peak = *std::max_element(fit.profile.begin(), fit.profile.end());
    const double floor = 1e-14 * peak;
    std::vector<double> xs, ys;
    for (int i = 0; i < nb; ++i) {
        const int dist = std::abs(i - center);
        if (2 * dist > half_width)
            continue;
        if (fit.profile[static_cast<size_t>(i)] <= floor)
            continue;
        xs.push_back(dist);
        ys.push_back(std::log(fit.profile[static_cast<size_t>(i)]));
    }
    fit.points = static_cast<int>(xs.size());
    if (xs.size() < 3)
        return fit;
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0)
        return fit;
    const double slope = (n * sxy - sx * sy) / den;
    const double icpt = (sy - slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double pred = icpt + slope * xs[i];
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - sy / n) * (ys[i] - sy / n);
    }
    fit.lambda = -slope;
    fit.c = std::exp(icpt);
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    fit.decaying = fit.lambda > 0.0;
    return fit;
}

GreenFit green_decay(const DiscreteLagrangian& dl, const ChainConfiguration& c, int j, int half_width)
{
    return green_decay(hessian(dl, c), j, half_width);
}

std::vector<CollisionReport> admissible(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                        const AdmissibilityOptions& o)
{
    const ChainState st = evaluate_chain(dl, c, false);
    const ClassicalHamiltonian& h = dl.action->hamiltonian();
    const double E = dl.action->energy();
    const double jump_tol = o.jump_tol >= 0.0 ? o.jump_tol : 1e-6 * std::sqrt(2.0 * std::abs(E));
    std::vector<CollisionReport> out;
    for (size_t i = 0; i < c.points.size(); ++i) {
        CollisionReport r;
        r.index = static_cast<int>(i);
        r.delta_p = st.p_out[i] - st.p_in[i];
        r.jump = h.covector_norm(r.delta_p);
        r.jump_ok = r.jump >= jump_tol;
        const Vec& q = st.positions[i];
        const Vec vin = h.velocity(q, st.p_in[i]);
        const Vec vout = h.velocity(q, st.p_out[i]);
        const double cosang = -vin.dot(h.mass() * vout) / (h.vector_norm(vin) * h.vector_norm(vout));
        r.reversal_angle = std::acos(std::clamp(cosang, -1.0, 1.0));
        r.straight_reflection = r.reversal_angle < o.angle_tol;
        r.admissible = r.jump_ok && !(o.attracting && r.straight_reflection);
        out.push_back(r);
    }
    return out;
}

bool all_admissible(const std::vector<CollisionReport>& r)
{
    return std::all_of(r.begin(), r.end(), [](const CollisionReport& c) { return c.admissible; });
}

RouthAction::RouthAction(std::shared_ptr<const LinkAction> base, Vec u, double g)
    : base_(std::move(base)), u_(std::move(u)), g_(g)
{
    if (u_.size() != base_->ambient_dim())
        throw DomainError("Routh generator has wrong dimension");
}

double RouthAction::critical_theta(const Symbol& k, const Vec& q_minus, const Vec& q_plus) const
{
    auto eval = [&](double theta, double& fp) {
        const LinkEval e = base_->evaluate(k, q_minus, q_plus + theta * u_, true);
        fp = u_.dot(e.h_pp * u_);
        return e.d_plus.dot(u_) - g_;
    };
    double fp = 0.0;
    double f = eval(0.0, fp);
    if (f == 0.0)
        return 0.0;
    // bracket the root, stepping against the sign of f with growing steps
    const double scale = 1.0 / std::max(u_.norm(), 1e-300);
    double a = 0.0, fa = f, b = 0.0, fb = f;
    double step = (f > 0.0 ? -1.0 : 1.0) * 0.125 * scale;
    for (int i = 0; i < 60 && (fa > 0.0) == (fb > 0.0); ++i) {
        a = b;
        fa = fb;
        b += step;
        fb = eval(b, fp);
        step *= 2.0;
    }
    if ((fa > 0.0) == (fb > 0.0))
        throw ConvergenceError("Routh reduction: critical group parameter not bracketed");
    if (a > b) {
        std::swap(a, b);
        std::swap(fa, fb);
    }
    // safeguarded Newton inside [a, b]
    double theta = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it) {
        f = eval(theta, fp);
        if ((f > 0.0) == (fb > 0.0)) {
            b = theta;
            fb = f;
        } else {
            a = theta;
            fa = f;
        }
        double next = fp != 0.0 ? theta - f / fp : 0.5 * (a + b);
        if (!(next > a && next < b))
            next = 0.5 * (a + b);
        const double dt = next - theta;
        theta = next;
        if (std::abs(dt) <= 1e-15 * std::max(1.0, std::abs(theta)) || b - a <= 1e-15 * std::max(1.0, std::abs(theta))) {
            eval(theta, fp);
            const LinkEval e = base_->evaluate(k, q_minus, q_plus + theta * u_, true);
            if (!(std::abs(fp) > 1e-12 * std::max(1.0, e.h_pp.norm()) * u_.squaredNorm()))
                throw DegeneracyError("Routh nondegeneracy failure: <B u, u> = 0");
            return theta;
        }
    }
    throw ConvergenceError("Routh reduction: critical group parameter not found");
}

LinkEval RouthAction::evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const
{
    const double theta = critical_theta(k, q_minus, q_plus);
    LinkEval e = base_->evaluate(k, q_minus, q_plus + theta * u_, true);
    LinkEval r;
    r.value = e.value - g_ * theta;
    r.time = e.time;
    r.d_minus = e.d_minus;
    r.d_plus = e.d_plus;
    if (second) {
        const double c = u_.dot(e.h_pp * u_);
        const Vec a = e.h_mp * u_;
        const Vec b = e.h_pp * u_;
        r.h_mm = e.h_mm - a * a.transpose() / c;
        r.h_mp = e.h_mp - a * b.transpose() / c;
        r.h_pp = e.h_pp - b * b.transpose() / c;
        r.has_second = true;
    }
    return r;
}

std::vector<Vec> RouthAction::sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const
{
    const double theta = critical_theta(k, q_minus, q_plus);
    return base_->sample_path(k, q_minus, q_plus + theta * u_, n);
}

DiscreteLagrangian routh_reduce(const DiscreteLagrangian& dl, const Vec& u, const Vec& u_chart, double g)
{
    DiscreteLagrangian r;
    r.action = std::make_shared<RouthAction>(dl.action, u, g);
    const double n = u_chart.norm();
    if (!(n > 0.0))
        throw DomainError("Routh generator has zero chart component");
    r.points = std::make_shared<SubspaceModel>(dl.points, TubeModel::sphere_basis(u_chart / n));
    return r;
}

} // namespace degbill
