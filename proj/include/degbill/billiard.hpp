#pragma once

// Ordinary billiard in Omega_eps (complement of the eps-tube of N, plus
// optional box walls), the eps-generating function, the shadowing Newton
// solver in (x_j, s_j) and Lyapunov exponents of periodic shadow orbits.

#include "degbill/dls.hpp"

#include <optional>

namespace degbill {

struct BoxWalls {
    Vec lo;
    Vec hi;
    /// Walls are moved inward by margin_factor * eps.
    double margin_factor = 1.0;
};

class BilliardDomain {
public:
    BilliardDomain(ClassicalHamiltonian h, std::shared_ptr<const Scatterer> n, double eps,
                   std::optional<BoxWalls> box = std::nullopt);

    const ClassicalHamiltonian& hamiltonian() const { return h_; }
    const Scatterer& scatterer() const { return *n_; }
    std::shared_ptr<const Scatterer> scatterer_ptr() const { return n_; }
    const AmbientSpace& space() const { return n_->space(); }
    double eps() const { return eps_; }
    const std::optional<BoxWalls>& box() const { return box_; }
    double margin() const { return box_ ? box_->margin_factor * eps_ : 0.0; }

    /// Signed distance to the boundary of Omega_eps (positive inside) and its
    /// gradient covector.  kind 0: tube of N (index = component), 1: wall
    /// (index = 2 * coordinate + side).
    struct Constraint {
        double value = 0.0;
        Vec grad;
        int kind = 0;
        int index = 0;
    };
    Constraint constraint(const Vec& q) const;

private:
    ClassicalHamiltonian h_;
    std::shared_ptr<const Scatterer> n_;
    double eps_;
    std::optional<BoxWalls> box_;
};

/// Elastic reflection off a surface with covector normal n:
/// p' = p - 2 <M^{-1}(p - w), n> / <M^{-1} n, n> n.
/// Throws GeometryError when |<v, n>| <= graze_tol |v|_M |n|_{M^{-1}}.
Vec reflect(const ClassicalHamiltonian& h, const Vec& q, const Vec& p, const Vec& n, double graze_tol = 1e-12);

struct BilliardEvent {
    double t = 0.0;
    Vec q; ///< on a torus: translated next to the scatterer component
    Vec p_before;
    Vec p_after;
    Vec normal;
    int kind = 0;
    int index = 0;
    IVec shift; ///< lattice translation applied to q at this event (torus)
};

struct BilliardOptions {
    double max_time = 1e3;
    /// Bracketing step: step_factor * eps of ambient distance.
    double step_factor = 0.1;
    double time_tol = 1e-12;
    double graze_tol = 1e-4;
    /// Step of the symplectic flow for non-free Hamiltonians.
    double flow_step = 1e-3;
    /// Count wall reflections towards n_bounces.
    bool count_walls = true;
    bool keep_path = false;
    int path_every = 50;
};

struct BilliardRun {
    std::vector<BilliardEvent> events;
    std::vector<PhaseState> path;
    PhaseState final;
    IVec total_shift;
};

BilliardRun billiard_trajectory(const BilliardDomain& dom, const PhaseState& s0, int n_bounces,
                                const BilliardOptions& o = {});

/// L^eps: action of the link between tube points f(x-, eps s-) and f(x+, eps s+),
/// walls moved in by margin_factor * eps.
double generating_eps(const DiscreteLagrangian& dl, const Symbol& k, const ChainPoint& x_minus,
                      const ChainPoint& x_plus, double eps, double margin_factor = 1.0);

/// First-order expansion L - eps <p-, N s-> + eps <p+, N s+>.
double generating_expansion(const DiscreteLagrangian& dl, const Symbol& k, const ChainPoint& x_minus,
                            const ChainPoint& x_plus, double eps);

struct ShadowOptions {
    NewtonOptions newton{-1.0, 60, 40}; ///< tol < 0: 1e-10 sqrt(2E)
    AdmissibilityOptions admissibility;
    double margin_factor = 1.0;
};

struct ShadowChain {
    ChainConfiguration chain; ///< points carry x and s
    double eps = 0.0;
    DiscreteLagrangian dl;    ///< tube DLS used by the solver
    NewtonResult newton;
    std::vector<Vec> tube_points;
    bool converged = false;
};

/// Predictor s_j* = N^T dp_j / |N^T dp_j| at the base points.
ChainConfiguration shadow_predictor(const DiscreteLagrangian& dl, const ChainConfiguration& c);

/// Newton on the augmented functional A^eps in (x_j, s_j), starting from the predictor.
/// Throws GeometryError for inadmissible chains.
ShadowChain shadow_solve(const DiscreteLagrangian& dl, const ChainConfiguration& c, double eps,
                         const ShadowOptions& o = {});

/// max_j |x_j - x_j^eps| together with the largest deviation between corresponding link paths.
double shadow_error(const DiscreteLagrangian& dl, const ChainConfiguration& c, const ShadowChain& sc,
                    int samples = 65);

/// Post-reflection state at shadow point j.
PhaseState shadow_state(const ShadowChain& sc, int j);

/// Largest distance between predicted and simulated collision points and
/// momenta.  per_link: one bounce from every boundary state; otherwise a single
/// run from state 0, which amplifies roundoff at the Lyapunov rate.
double replay_deviation(const BilliardDomain& dom, const ShadowChain& sc, const BilliardOptions& o = {},
                        bool per_link = true);

/// Fixed chains: the billiard flown backwards from the first tube point and forwards
/// from the last one for the end-link travel times, against the chain's start and end.
double endpoint_deviation(const BilliardDomain& dom, const ShadowChain& sc, const BilliardOptions& o = {});

struct LyapunovOptions {
    /// Finite-difference step in event coordinates: fd_scale * eps.
    double fd_scale = 5e-4;
    double closure_tol = 1e-6;
    double large_factor = 0.5;
    bool backward = true;
    BilliardOptions billiard{};
};

struct LyapunovResult {
    std::vector<double> exponents; ///< per bounce, descending
    int large_count = 0;
    double closure_error = 0.0;
    Mat monodromy;
};

/// Exponents of the periodic shadow orbit from finite differences of the
/// event-to-event map.  Expanding exponents come from the forward monodromy,
/// contracting ones from the monodromy of the time-reversed map.
LyapunovResult lyapunov_estimate(const BilliardDomain& dom, const ShadowChain& sc, const LyapunovOptions& o = {});

} // namespace degbill
