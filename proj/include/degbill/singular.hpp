#pragma once

// Newtonian singularities on N: H_mu = H_0 + mu V(q, mu), V = -phi / d(q, N),
// adaptive integration near the singular set and the near-collision shadowing
// experiment for the n-center problem.

#include "degbill/dls.hpp"

#include <functional>

namespace degbill {

struct SingularEval {
    double value = 0.0;    ///< V(q, mu)
    Vec gradient;          ///< grad V
    double distance = 0.0; ///< d(q, N)
};

class SingularPerturbation;

/// V and grad V (without the factor mu).  Throws CollisionError inside the exclusion radius.
SingularEval eval_singular(const SingularPerturbation& sp, const Vec& q);

class SingularPerturbation {
public:
    using Coefficient = std::function<double(const Vec& q, double mu)>;

    /// Classical n-center case: V = -sum_i alpha_i / |q - a_i|_G over the points of N.
    static SingularPerturbation centers(ClassicalHamiltonian base, std::shared_ptr<const Scatterer> n, double mu,
                                        std::vector<double> alphas);
    /// General case: V = -phi(q, mu) / d(q, N), with d from the nearest-point projection.
    static SingularPerturbation general(ClassicalHamiltonian base, std::shared_ptr<const Scatterer> n, double mu,
                                        Coefficient phi);

    const ClassicalHamiltonian& base() const { return base_; }
    const Scatterer& scatterer() const { return *n_; }
    std::shared_ptr<const Scatterer> scatterer_ptr() const { return n_; }
    double mu() const { return mu_; }
    const std::vector<double>& alphas() const { return alphas_; }
    bool point_centers() const { return !alphas_.empty(); }
    /// Exclusion radius r_min = guard * mu^2.
    double exclusion_radius() const { return guard_ * mu_ * mu_; }
    void set_guard(double g) { guard_ = g; }
    double guard() const { return guard_; }

    SingularPerturbation with_mu(double mu) const;

    /// H_mu with potential W + mu V.
    ClassicalHamiltonian hamiltonian() const;
    /// Largest |phi| (sum of |alpha_i| for point centers), used by the step policy.
    double strength(const Vec& q) const;

private:
    SingularPerturbation(ClassicalHamiltonian base, std::shared_ptr<const Scatterer> n, double mu)
        : base_(std::move(base)), n_(std::move(n)), mu_(mu)
    {
    }

    ClassicalHamiltonian base_;
    std::shared_ptr<const Scatterer> n_;
    double mu_;
    std::vector<double> alphas_;
    Coefficient phi_;
    double guard_ = 1e-2;

    friend SingularEval eval_singular(const SingularPerturbation&, const Vec&);
};

struct SingularFlowOptions {
    /// Fictitious-time step; physical step g(q) * ds with g ~ d^{3/2} near N.
    double ds = 5e-3;
    /// Length scale of the step function far from N.
    double length = 1.0;
    double energy_tol = 1e-6;
    int max_refinements = 4;
    bool keep_samples = false;
    int sample_every = 1;
    std::size_t max_steps = 50000000;
};

struct SingularTrajectory {
    std::vector<PhaseState> samples;
    PhaseState final;
    double energy_drift = 0.0;
    double min_distance = 0.0;
    std::size_t steps = 0;
    double ds = 0.0;
};

/// Sundman-time RK4: dq/ds = g H_p, dp/ds = -g H_q, dt/ds = g.  Halves ds while the
/// relative energy drift exceeds energy_tol.  Throws CollisionError on an
/// exclusion-radius breach and IntegrationError if the drift cannot be met.
SingularTrajectory flow_singular(const SingularPerturbation& sp, const PhaseState& s0, double duration,
                                 const SingularFlowOptions& o = {});

struct ShadowExperimentOptions {
    SingularFlowOptions flow{};
    double tol = 1e-9;
    int max_iter = 30;
    /// Central-difference step relative to the impact-parameter scale mu.
    double fd_scale = 1e-3;
    AdmissibilityOptions admissibility{};
    int error_samples = 400;
    /// Worker threads over the mu values.
    int jobs = 1;
};

struct ShadowExperimentRow {
    double mu = 0.0;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    double sup_error = 0.0;    ///< sup distance between the orbit and the chain's link paths
    double min_distance = 0.0; ///< closest approach to N
    double energy_drift = 0.0;
    std::string message;
    std::vector<PhaseState> sections; ///< converged mid-link states
    std::vector<double> times;        ///< section-to-section times
};

/// Hyperbola impact parameter b = mu alpha / (v^2 tan(delta / 2)) for a deflection delta.
double impact_parameter(double mu, double alpha, double speed, double deflection);

/// Multiple shooting from mid-link sections for every mu (periodic chains of point
/// centers).  Rows are independent and in input order.  Inadmissible chains
/// (including straight reflections) throw GeometryError before any solve.
std::vector<ShadowExperimentRow> shadow_experiment(const DiscreteLagrangian& dl, const ChainConfiguration& c,
                                                   const SingularPerturbation& sp, const std::vector<double>& mus,
                                                   const ShadowExperimentOptions& o = {});

} // namespace degbill
