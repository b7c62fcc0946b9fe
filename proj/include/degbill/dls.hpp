#pragma once

// Discrete Lagrangian systems: multivalued link Lagrangians L_k on N x N,
// chain actions, gradients, block-tridiagonal Hessians, Newton, certificates
// and Routh reduction.

#include "degbill/bvp.hpp"
#include "degbill/scatterer.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace degbill {

/// Symbol label of a link: winding (torus), reflection indices (box), or
/// backend specific integers.  May be empty.
using Symbol = std::vector<int>;

IVec symbol_to_ivec(const Symbol& k);

/// L_k(q-, q+) with ambient derivatives.  h_mp(i,j) = d^2 L / dq-_i dq+_j.
struct LinkEval {
    double value = 0.0;
    double time = 0.0;
    Vec d_minus;
    Vec d_plus;
    Mat h_mm;
    Mat h_mp;
    Mat h_pp;
    bool has_second = false;
};

class LinkAction {
public:
    virtual ~LinkAction() = default;
    virtual const ClassicalHamiltonian& hamiltonian() const = 0;
    virtual const AmbientSpace& space() const = 0;
    virtual double energy() const = 0;
    virtual LinkEval evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const = 0;
    /// Configuration path of the link at n equally spaced times.
    virtual std::vector<Vec> sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const;
    /// Same system with walls moved inward by margin (eps-billiard).  nullptr: unchanged.
    virtual std::shared_ptr<const LinkAction> with_margin(double margin) const;
    int ambient_dim() const { return space().dim(); }
};

/// a->with_margin(margin), or a itself when the action has no walls.
std::shared_ptr<const LinkAction> action_with_margin(const std::shared_ptr<const LinkAction>& a, double margin);

/// Straight lines of a free Hamiltonian; symbol = torus winding.
class FreeFlightAction final : public LinkAction {
public:
    FreeFlightAction(ClassicalHamiltonian h, AmbientSpace space, double E);
    const ClassicalHamiltonian& hamiltonian() const override { return h_; }
    const AmbientSpace& space() const override { return space_; }
    double energy() const override { return e_; }
    LinkEval evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const override;
    std::vector<Vec> sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const override;

private:
    ClassicalHamiltonian h_;
    AmbientSpace space_;
    double e_;
};

/// Free motion in an axis-aligned box [lo, hi] with elastic walls, solved by
/// unfolding.  Symbol = reflection index per coordinate (image index n_c).
/// Requires a diagonal mass matrix.
class BoxAction final : public LinkAction {
public:
    BoxAction(ClassicalHamiltonian h, Vec lo, Vec hi, double E, double margin = 0.0);
    const ClassicalHamiltonian& hamiltonian() const override { return h_; }
    const AmbientSpace& space() const override { return space_; }
    double energy() const override { return e_; }
    LinkEval evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const override;
    std::vector<Vec> sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const override;
    std::shared_ptr<const LinkAction> with_margin(double margin) const override;

    const Vec& lo() const { return lo_; }
    const Vec& hi() const { return hi_; }
    double margin() const { return margin_; }
    /// Image of q under the reflection indices k, and the sign dy/dq per coordinate.
    Vec unfold(const Symbol& k, const Vec& q, Vec* sign = nullptr) const;
    /// Inverse of unfold for a point of the covering space.
    Vec fold(const Vec& y) const;
    /// Total number of wall reflections along the link.
    static int reflections(const Symbol& k);

private:
    ClassicalHamiltonian h_;
    AmbientSpace space_;
    Vec lo_, hi_;
    double e_;
    double margin_;
};

/// Any Hamiltonian, via the shooting connector.  Symbol = torus winding.
/// Second derivatives by central differences of the boundary momenta.
class ShootingAction final : public LinkAction {
public:
    ShootingAction(ClassicalHamiltonian h, AmbientSpace space, double E, ConnectOptions options = {});
    const ClassicalHamiltonian& hamiltonian() const override { return h_; }
    const AmbientSpace& space() const override { return space_; }
    double energy() const override { return e_; }
    LinkEval evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const override;
    std::vector<Vec> sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const override;

private:
    ClassicalHamiltonian h_;
    AmbientSpace space_;
    double e_;
    ConnectOptions options_;
};

/// A point of a chain: component id, chart coordinates on N, and (for tube
/// points) the unit normal direction s.
struct ChainPoint {
    int component = 0;
    Vec x;
    Vec s;
};

/// Local coordinates of chain points.  embed(c, delta) is the ambient point of
/// retract(c, delta); delta = 0 is c itself.
class PointModel {
public:
    virtual ~PointModel() = default;
    virtual int dim(const ChainPoint& c) const = 0;
    virtual Vec embed(const ChainPoint& c, const Vec& delta) const = 0;
    virtual ChainPoint retract(const ChainPoint& c, const Vec& delta) const = 0;
    /// d embed / d delta at 0 (central differences unless overridden).
    virtual Mat jacobian(const ChainPoint& c) const;
    /// sum_k g_k d^2 embed_k / d delta_i d delta_j at 0.
    virtual Mat curvature(const ChainPoint& c, const Vec& g) const;
    Vec position(const ChainPoint& c) const { return embed(c, Vec::Zero(dim(c))); }
};

/// Points of N in its chart.
class ScattererModel final : public PointModel {
public:
    explicit ScattererModel(std::shared_ptr<const Scatterer> n) : n_(std::move(n)) {}
    int dim(const ChainPoint&) const override { return n_->dim(); }
    Vec embed(const ChainPoint& c, const Vec& delta) const override;
    ChainPoint retract(const ChainPoint& c, const Vec& delta) const override;
    Mat jacobian(const ChainPoint& c) const override;
    Mat curvature(const ChainPoint& c, const Vec& g) const override;
    const Scatterer& scatterer() const { return *n_; }
    std::shared_ptr<const Scatterer> scatterer_ptr() const { return n_; }

private:
    std::shared_ptr<const Scatterer> n_;
};

/// Points f(x, eps s) of the tube boundary.  delta = (dx, sigma) with the sphere
/// chart s(sigma) = (s + T sigma) / |s + T sigma|, T an orthonormal basis of s^perp.
class TubeModel final : public PointModel {
public:
    TubeModel(std::shared_ptr<const Scatterer> n, double eps) : n_(std::move(n)), eps_(eps) {}
    int dim(const ChainPoint&) const override { return n_->dim() + n_->codim() - 1; }
    Vec embed(const ChainPoint& c, const Vec& delta) const override;
    ChainPoint retract(const ChainPoint& c, const Vec& delta) const override;
    Mat jacobian(const ChainPoint& c) const override;
    Mat curvature(const ChainPoint& c, const Vec& g) const override;
    double eps() const { return eps_; }
    const Scatterer& scatterer() const { return *n_; }
    std::shared_ptr<const Scatterer> scatterer_ptr() const { return n_; }
    /// Orthonormal basis of the complement of the unit vector s (deterministic).
    static Mat sphere_basis(const Vec& s);

private:
    std::shared_ptr<const Scatterer> n_;
    double eps_;
};

/// Cross-section x = x_ref + V y of a base model (Routh reduction).
class SubspaceModel final : public PointModel {
public:
    SubspaceModel(std::shared_ptr<const PointModel> base, Mat v) : base_(std::move(base)), v_(std::move(v)) {}
    int dim(const ChainPoint&) const override { return static_cast<int>(v_.cols()); }
    Vec embed(const ChainPoint& c, const Vec& delta) const override;
    ChainPoint retract(const ChainPoint& c, const Vec& delta) const override;
    Mat jacobian(const ChainPoint& c) const override;
    Mat curvature(const ChainPoint& c, const Vec& g) const override;
    const Mat& basis() const { return v_; }

private:
    std::shared_ptr<const PointModel> base_;
    Mat v_;
};

struct DiscreteLagrangian {
    std::shared_ptr<const LinkAction> action;
    std::shared_ptr<const PointModel> points;
};

enum class Boundary { Fixed, Periodic };

/// Periodic: links j : points[j] -> points[j+1 mod n], code.size() == points.size().
/// Fixed:    start -> points[0] -> ... -> points[n-2] -> end, code.size() == points.size() + 1.
struct ChainConfiguration {
    std::vector<Symbol> code;
    std::vector<ChainPoint> points;
    Boundary boundary = Boundary::Periodic;
    Vec start; ///< ambient, Fixed only
    Vec end;   ///< ambient, Fixed only

    int links() const { return static_cast<int>(code.size()); }
    void validate() const;
};

struct BlockTridiagonalHessian {
    std::vector<Mat> diag;  ///< A_i
    std::vector<Mat> upper; ///< d^2 A / dx_i dx_{i+1}; for periodic chains the last couples x_{n-1}, x_0
    bool periodic = false;

    int blocks() const { return static_cast<int>(diag.size()); }
    std::vector<int> offsets() const;
    int size() const;
    Mat dense() const;
    std::vector<Vec> apply(const std::vector<Vec>& u) const;
    /// Block LU (Fixed) or dense LU (periodic).  Throws DegeneracyError if singular.
    std::vector<Vec> solve(const std::vector<Vec>& rhs) const;
};

/// Everything evaluated at one configuration.
struct ChainState {
    std::vector<Vec> positions;      ///< ambient chain points (free points only)
    std::vector<LinkEval> links;     ///< one per link
    std::vector<Vec> p_in;           ///< incoming momentum at each free point
    std::vector<Vec> p_out;          ///< outgoing momentum at each free point
    double action = 0.0;
};

ChainState evaluate_chain(const DiscreteLagrangian& dl, const ChainConfiguration& c, bool second);

double chain_action(const DiscreteLagrangian& dl, const ChainConfiguration& c);
/// D_{x_j} A for every free point.
std::vector<Vec> residual(const DiscreteLagrangian& dl, const ChainConfiguration& c);
BlockTridiagonalHessian hessian(const DiscreteLagrangian& dl, const ChainConfiguration& c);
double residual_norm(const std::vector<Vec>& r);
ChainConfiguration retract_chain(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                 const std::vector<Vec>& delta);

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 60;
    int max_halvings = 40;
    /// Minimization mode for convex actions: shifted Hessian when not positive
    /// definite, and Armijo line search on the action instead of the residual.
    bool minimize = false;
};

struct NewtonResult {
    ChainConfiguration chain;
    int iterations = 0;
    double residual_norm = 0.0;
    double min_singular = std::numeric_limits<double>::infinity();
    bool converged = false;
};

/// Damped Newton on the residual.  Throws ConvergenceError / DegeneracyError.
NewtonResult newton_chain(const DiscreteLagrangian& dl, const ChainConfiguration& c0, const NewtonOptions& o = {});

/// Block infinity norm of the inverse: max_i sum_j |G_ij|_2.
double block_inverse_norm(const BlockTridiagonalHessian& h);

/// Window of 2W+1 consecutive blocks centred at `center`, Dirichlet ends.
/// Periodic chains are extended periodically; Fixed chains are clipped.
BlockTridiagonalHessian window(const BlockTridiagonalHessian& h, int center, int half_width);

struct Certificate {
    std::vector<int> windows;
    std::vector<double> values; ///< C_W
    double certificate = std::numeric_limits<double>::infinity();
    double relative_change = std::numeric_limits<double>::infinity();
    bool stabilized = false;
};

Certificate hyperbolicity_certificate(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                      std::vector<int> windows = {1, 2, 4, 8, 16}, double stab_tol = 0.05);
Certificate hyperbolicity_certificate(const BlockTridiagonalHessian& h, std::vector<int> windows = {1, 2, 4, 8, 16},
                                      double stab_tol = 0.05);

struct GreenFit {
    double c = 0.0;
    double lambda = 0.0;
    double r2 = 0.0;
    int points = 0;
    bool decaying = false;
    std::vector<double> profile; ///< |G_ij|_2 for i = j - W .. j + W
};

/// Unit load at block j of a (2W+1)-block window; fit log|G_ij| = log C - lambda |i - j|
/// over the inner half of the window.
GreenFit green_decay(const DiscreteLagrangian& dl, const ChainConfiguration& c, int j, int half_width = 16);
GreenFit green_decay(const BlockTridiagonalHessian& h, int j, int half_width = 16);

struct AdmissibilityOptions {
    double jump_tol = -1.0; ///< default 1e-6 sqrt(2E)
    double angle_tol = 1e-6;
    bool attracting = false;
};

struct CollisionReport {
    int index = 0;
    Vec delta_p;            ///< p_out - p_in (ambient covector)
    double jump = 0.0;      ///< |delta_p| in the inverse mass metric
    double reversal_angle = 0.0; ///< angle between v_out and -v_in
    bool jump_ok = true;
    bool straight_reflection = false;
    bool admissible = true;
};

std::vector<CollisionReport> admissible(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                        const AdmissibilityOptions& o = {});
bool all_admissible(const std::vector<CollisionReport>& r);

/// Routh reduction for a translation u of the ambient space:
/// Lt(q-, q+) = L(q-, q+ + theta* u) - G theta*, with D_+L . u = G at theta*.
class RouthAction final : public LinkAction {
public:
    RouthAction(std::shared_ptr<const LinkAction> base, Vec u, double g);
    const ClassicalHamiltonian& hamiltonian() const override { return base_->hamiltonian(); }
    const AmbientSpace& space() const override { return base_->space(); }
    double energy() const override { return base_->energy(); }
    LinkEval evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const override;
    std::vector<Vec> sample_path(const Symbol& k, const Vec& q_minus, const Vec& q_plus, int n) const override;
    /// Critical group parameter theta*.
    double critical_theta(const Symbol& k, const Vec& q_minus, const Vec& q_plus) const;

private:
    std::shared_ptr<const LinkAction> base_;
    Vec u_;
    double g_;
};

/// Reduced DLS: RouthAction on the cross-section through ref orthogonal to the
/// chart direction of u.  u_chart is u expressed in the chart coordinates of N.
DiscreteLagrangian routh_reduce(const DiscreteLagrangian& dl, const Vec& u, const Vec& u_chart, double g);

} // namespace degbill
