#pragma once

// Classical Hamiltonians H(q,p) = 1/2 |p - w(q)|^2 + W(q) on flat spaces,
// their flows, and the Maupertuis (Jacobi) action.

#include "degbill/types.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace degbill {

enum class SpaceKind { Euclidean, FlatTorus };

/// Flat configuration space: R^d or R^d / (L_1 Z x ... x L_d Z).
///
/// Torus points are stored as representatives in [0, L). Displacements
/// between two points carry an explicit integer winding, they are never
/// reduced to the minimal image implicitly.
class AmbientSpace {
public:
    static AmbientSpace euclidean(int dim);
    static AmbientSpace torus(const Vec& periods);

    int dim() const { return dim_; }
    SpaceKind kind() const { return kind_; }
    bool is_torus() const { return kind_ == SpaceKind::FlatTorus; }
    const Vec& periods() const { return periods_; }

    Vec wrap(const Vec& q) const;
    /// to + winding * L - from.  An empty winding means zero winding.
    Vec displacement(const Vec& from, const Vec& to, const IVec& winding) const;
    /// Shortest representative of a displacement vector.
    Vec min_image(const Vec& dq) const;

private:
    AmbientSpace(SpaceKind kind, int dim, Vec periods);

    SpaceKind kind_;
    int dim_;
    Vec periods_;
};

class Potential {
public:
    virtual ~Potential() = default;
    virtual double value(const Vec& q) const = 0;
    virtual Vec gradient(const Vec& q) const = 0;
    /// Central differences of the gradient unless overridden.
    virtual Mat hessian(const Vec& q) const;
    virtual bool is_constant() const { return false; }
};

class ConstantPotential final : public Potential {
public:
    explicit ConstantPotential(double c = 0.0) : c_(c) {}
    double value(const Vec&) const override { return c_; }
    Vec gradient(const Vec& q) const override { return Vec::Zero(q.size()); }
    Mat hessian(const Vec& q) const override { return Mat::Zero(q.size(), q.size()); }
    bool is_constant() const override { return true; }

private:
    double c_;
};

/// W(q) = 1/2 (q - c)^T K (q - c).
class HarmonicPotential final : public Potential {
public:
    HarmonicPotential(Mat stiffness, Vec center);
    double value(const Vec& q) const override;
    Vec gradient(const Vec& q) const override;
    Mat hessian(const Vec&) const override { return k_; }

private:
    Mat k_;
    Vec c_;
};

/// W(q) = -sum_i alpha_i / |q - a_i|.  Throws DomainError at a center.
class CoulombPotential final : public Potential {
public:
    CoulombPotential(std::vector<Vec> centers, std::vector<double> strengths);
    double value(const Vec& q) const override;
    Vec gradient(const Vec& q) const override;
    Mat hessian(const Vec& q) const override;

private:
    std::vector<Vec> centers_;
    std::vector<double> strengths_;
};

/// Magnetic covector field w(q) with its Jacobian J(i,j) = dw_i/dq_j.
class CovectorField {
public:
    virtual ~CovectorField() = default;
    virtual Vec value(const Vec& q) const = 0;
    virtual Mat jacobian(const Vec& q) const = 0;
};

/// Symmetric gauge of a constant field of strength b in the (i,j) plane:
/// w_i = -b q_j / 2, w_j = b q_i / 2.
class UniformField final : public CovectorField {
public:
    UniformField(int dim, double strength, int i = 0, int j = 1);
    Vec value(const Vec& q) const override;
    Mat jacobian(const Vec& q) const override;

private:
    int dim_, i_, j_;
    double b_;
};

struct PhaseState {
    Vec q;
    Vec p;
    double t = 0.0;
};

/// H(q,p) = 1/2 (p - w)^T M^{-1} (p - w) + W(q) with a constant SPD mass matrix M.
class ClassicalHamiltonian {
public:
    explicit ClassicalHamiltonian(Mat mass,
                                  std::shared_ptr<const Potential> potential = nullptr,
                                  std::shared_ptr<const CovectorField> magnetic = nullptr);

    static ClassicalHamiltonian free(int dim) { return ClassicalHamiltonian(Mat::Identity(dim, dim)); }

    int dim() const { return static_cast<int>(mass_.rows()); }
    const Mat& mass() const { return mass_; }
    const Mat& inverse_mass() const { return inv_mass_; }
    const Potential& potential() const { return *potential_; }
    std::shared_ptr<const Potential> potential_ptr() const { return potential_; }
    std::shared_ptr<const CovectorField> magnetic_ptr() const { return magnetic_; }
    bool has_magnetic() const { return magnetic_ != nullptr; }
    bool is_free() const { return !has_magnetic() && potential_->is_constant(); }

    double W(const Vec& q) const { return potential_->value(q); }
    Vec grad_W(const Vec& q) const { return potential_->gradient(q); }
    Vec w(const Vec& q) const;

    double energy(const Vec& q, const Vec& p) const;
    /// v = H_p = M^{-1}(p - w(q)).
    Vec velocity(const Vec& q, const Vec& p) const;
    /// p = M v + w(q).
    Vec momentum(const Vec& q, const Vec& v) const;
    /// sqrt(v^T M v).
    double vector_norm(const Vec& v) const;
    /// sqrt(p^T M^{-1} p).
    double covector_norm(const Vec& p) const;
    /// dH/dq at fixed p.
    Vec grad_q(const Vec& q, const Vec& p) const;

private:
    Mat mass_;
    Mat inv_mass_;
    std::shared_ptr<const Potential> potential_;
    std::shared_ptr<const CovectorField> magnetic_;
};

double eval_energy(const ClassicalHamiltonian& h, const PhaseState& s);

struct FlowOptions {
    /// Default step: 10^4 steps per unit time.
    double step = 1e-4;
    /// Relative terminal energy drift allowed before the step is halved.
    double energy_tol = 1e-8;
    /// Keep every n-th state in the returned samples (the last one is always kept).
    int sample_every = 1;
    /// Only the final state is returned when false.
    bool keep_samples = true;
    int max_refinements = 4;
    /// 2: plain Stormer-Verlet / implicit midpoint.  4: triple-jump composition of the same step.
    int order = 4;
};

struct Trajectory {
    std::vector<PhaseState> samples;
    double energy_drift = 0.0; ///< relative |H(end) - H(start)|
    double step = 0.0;         ///< step actually used
    double action = 0.0;       ///< trapezoidal integral of p dq along the steps

    const PhaseState& back() const { return samples.back(); }
};

/// One symplectic step: Stormer-Verlet if w == 0, implicit midpoint otherwise.
/// order 4 composes three such steps (Yoshida triple jump).
PhaseState symplectic_step(const ClassicalHamiltonian& h, const PhaseState& s, double dt, int order = 2);

/// Exactly n equal steps of size duration / n.  Smooth in (s0, duration), which
/// shooting relies on.  Throws IntegrationError if the state leaves the domain of W.
Trajectory integrate_steps(const ClassicalHamiltonian& h, const PhaseState& s0, double duration, int n,
                           int order = 4, bool keep_samples = false, int sample_every = 1);

/// Fixed-step symplectic integration over `duration`; halves the step while
/// the terminal energy drift exceeds options.energy_tol.
Trajectory flow_segment(const ClassicalHamiltonian& h, const PhaseState& s0, double duration,
                        const FlowOptions& options = {});

/// Maupertuis action of a sampled curve:  sum over segments of
/// sqrt(2(E - W)) |dq|_M + <w, dq>, evaluated at segment midpoints.
double jacobi_action(const ClassicalHamiltonian& h, const std::vector<Vec>& curve, double E);
double jacobi_action(const ClassicalHamiltonian& h, const Trajectory& traj, double E);

/// W(q) < E (strict).  Points on the singular set of W are outside.
bool in_domain(const ClassicalHamiltonian& h, const Vec& q, double E);

/// Momentum of energy E at q pointing along `direction` (any nonzero vector).
Vec momentum_on_shell(const ClassicalHamiltonian& h, const Vec& q, const Vec& direction, double E);

} // namespace degbill
