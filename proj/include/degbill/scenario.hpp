#pragma once

// Scenario files (JSON): system, chain and the studies to run on it, plus the
// report writer used by the command line tool.

#include "degbill/billiard.hpp"
#include "degbill/fit.hpp"
#include "degbill/kepler.hpp"
#include "degbill/singular.hpp"
#include "degbill/symbolic.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace degbill {

/// Malformed scenario.  path is the offending field, e.g. "chain.code[2]".
class ScenarioError : public Error {
public:
    ScenarioError(std::string path, const std::string& what)
        : Error(path + ": " + what), path_(std::move(path))
    {
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct SolveSpec {
    NewtonOptions newton{};
    /// Extra Newton runs from uniformly random chart coordinates in [random_lo, random_hi].
    int random_starts = 0;
    double random_lo = 0.0;
    double random_hi = 1.0;
};

struct CertificateSpec {
    std::vector<int> windows{1, 2, 4, 8, 16};
    double stab_tol = 0.05;
    int green_half_width = 16;
    int green_block = 0;
    /// Chart generator of a continuous symmetry; the Hessian kernel is checked along it.
    Vec symmetry;
    /// > 0: certify the eps-tube DLS of the shadow chain at this eps instead of the base DLS.
    double tube_eps = 0.0;
};

struct ShadowSpec {
    std::vector<double> eps;
    double margin_factor = 1.0;
    bool walls = false;
    bool replay = true;
    bool lyapunov = false;
    LyapunovOptions lyapunov_options{};
    std::vector<double> expansion_eps;
    NewtonOptions newton{-1.0, 60, 40};
};

struct NcenterSpec {
    std::vector<double> alphas;
    std::vector<double> mu;
    double guard = 1e-2;
    ShadowExperimentOptions options{};
};

struct ThreeBodySpec {
    int k1 = 1, k2 = 1;
    double alpha1 = 0.5, alpha2 = 0.5, energy = -1.0;
    Vec x_minus, x_plus;
};

struct KeplerSpec {
    std::vector<double> h;
    std::vector<int> n;
    std::vector<std::pair<Vec, Vec>> pairs;
    int panels = 256;
    std::optional<ThreeBodySpec> three_body;
};

struct GraphOrbitSpec {
    int tail = 0;
    int head = 0;
    Symbol code;
};

struct GraphSpec {
    /// Explicit successor lists, or orbits between scatterer points evaluated with the backend.
    std::vector<std::vector<int>> successors;
    std::vector<GraphOrbitSpec> orbits;
    GraphOptions options{};
    int max_length = 12;
};

struct Gates {
    std::optional<double> gradient_tol;
    std::optional<double> hessian_tol;
    std::optional<std::pair<double, double>> shadow_slope;
    std::optional<double> lyapunov_r2;
    std::optional<int> large_count;
    std::optional<std::pair<double, double>> expansion_slope;
    std::optional<bool> certificate_stabilized;
    std::optional<double> green_r2;
    std::optional<double> kernel_tol;
    std::optional<double> ncenter_slope_min;
    std::optional<double> mindist_factor;
    std::optional<double> kepler_tol;
    std::optional<double> endpoint_tol;
};

struct Scenario {
    std::string name;
    std::string output;
    std::uint64_t seed = 0;

    std::optional<AmbientSpace> space;
    std::optional<ClassicalHamiltonian> hamiltonian;
    double energy = 0.5;
    std::shared_ptr<const Scatterer> scatterer;
    std::string backend = "free";
    std::optional<BoxWalls> box;
    DiscreteLagrangian dl;

    std::optional<ChainConfiguration> chain;
    SolveSpec solve;
    std::optional<CertificateSpec> certificate;
    std::optional<ShadowSpec> shadow;
    std::optional<NcenterSpec> ncenter;
    std::optional<KeplerSpec> kepler;
    std::optional<GraphSpec> graph;
    Gates gates;

    bool has_system() const { return dl.action != nullptr; }
};

/// Parse and validate.  Throws ScenarioError with the field path (parse errors carry line:column).
Scenario parse_scenario(const std::string& text, const std::string& source = "scenario");
Scenario load_scenario(const std::string& path);

struct VariationalReport {
    double gradient_error = 0.0;  ///< |r - fd|_inf / max(|fd|_inf, sqrt(2E))
    double hessian_error = 0.0;   ///< |H - H_fd|_max / |H|_max
    double symmetry_error = 0.0;  ///< |H - H^T|_max / |H|_max
    double band_violation = 0.0;  ///< largest entry outside the block-tridiagonal pattern
    int unknowns = 0;
};

/// Residual and assembled Hessian against central differences of the action and of the residual.
VariationalReport variational_check(const DiscreteLagrangian& dl, const ChainConfiguration& c, double step = 1e-6);

/// |H u|_inf / |H|_inf for the field u repeated at every point (chart coordinates).
double symmetry_kernel_error(const DiscreteLagrangian& dl, const ChainConfiguration& c, const Vec& u_chart);

enum class Stage { Solve, Variational, Certify, Shadow, Ncenter, Kepler, Graph };

struct RunOptions {
    std::string out = "out";
    int jobs = 1;
    std::optional<std::uint64_t> seed;
    /// Empty: every stage the scenario declares.
    std::vector<Stage> stages;
};

struct GateResult {
    std::string name;
    double value = 0.0;
    std::string bound;
    bool passed = false;
};

struct ScenarioReport {
    std::vector<GateResult> gates;
    std::vector<std::string> files;
    std::optional<ChainConfiguration> solved;
    bool ok() const;
};

/// Runs the declared pipeline and writes CSV tables plus report.json into out/name.
ScenarioReport run_scenario(const Scenario& s, const RunOptions& o = {});

} // namespace degbill
