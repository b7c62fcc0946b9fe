#include "degbill/scenario.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace degbill;

namespace {

ArcType arc_type(bool clockwise, bool long_branch)
{
    ArcType t;
    t.orientation = clockwise ? Orientation::Clockwise : Orientation::Counterclockwise;
    t.branch = long_branch ? Branch::Long : Branch::Short;
    return t;
}

py::dict orbit_dict(const CollisionOrbit& o)
{
    py::dict d;
    d["action"] = o.action;
    d["time"] = o.time;
    d["p_minus"] = o.p_minus;
    d["p_plus"] = o.p_plus;
    d["q_plus"] = o.q_plus;
    return d;
}

} // namespace

PYBIND11_MODULE(_degbill, m)
{
    m.doc() = "Degenerate billiards: collision chains, shadowing and Kepler actions";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", error.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", error.ptr());
    py::register_exception<DegeneracyError>(m, "DegeneracyError", error.ptr());
    py::register_exception<GeometryError>(m, "GeometryError", error.ptr());
    py::register_exception<CollisionError>(m, "CollisionError", error.ptr());
    py::register_exception<IntegrationError>(m, "IntegrationError", error.ptr());
    py::register_exception<ScenarioError>(m, "ScenarioError", error.ptr());

    m.def(
        "connect_free",
        [](const Vec& q_minus, const Vec& q_plus, double energy, std::optional<Vec> periods,
           std::optional<std::vector<int>> winding) {
            auto h = ClassicalHamiltonian::free(static_cast<int>(q_minus.size()));
            auto sp = periods ? AmbientSpace::torus(*periods) : AmbientSpace::euclidean(static_cast<int>(q_minus.size()));
            ConnectOptions co;
            if (winding)
                co.winding = Eigen::Map<const IVec>(winding->data(), static_cast<Eigen::Index>(winding->size()));
            return orbit_dict(connect(h, sp, q_minus, q_plus, energy, co));
        },
        py::arg("q_minus"), py::arg("q_plus"), py::arg("energy"), py::arg("periods") = py::none(),
        py::arg("winding") = py::none(), "Free-flight collision orbit, on a flat torus when periods are given.");

    m.def(
        "reflect",
        [](const Vec& p, const Vec& normal, std::optional<Mat> mass) {
            ClassicalHamiltonian h = mass ? ClassicalHamiltonian(*mass) : ClassicalHamiltonian::free(static_cast<int>(p.size()));
            return reflect(h, Vec::Zero(p.size()), p, normal);
        },
        py::arg("p"), py::arg("normal"), py::arg("mass") = py::none(), "Elastic reflection of p off the normal.");

    m.def("solve_kepler", &solve_kepler, py::arg("mean_anomaly"), py::arg("e"));
    m.def(
        "kepler_J",
        [](int n, double h, const Vec& a, const Vec& b, bool clockwise, bool long_branch) {
            return kepler_J(n, h, a, b, arc_type(clockwise, long_branch));
        },
        py::arg("n"), py::arg("h"), py::arg("x_minus"), py::arg("x_plus"), py::arg("clockwise") = false,
        py::arg("long_branch") = false);
    m.def(
        "kepler_J_dh",
        [](int n, double h, const Vec& a, const Vec& b, bool clockwise, bool long_branch) {
            return kepler_J_dh(n, h, a, b, arc_type(clockwise, long_branch));
        },
        py::arg("n"), py::arg("h"), py::arg("x_minus"), py::arg("x_plus"), py::arg("clockwise") = false,
        py::arg("long_branch") = false);
    m.def(
        "three_body_lagrangian",
        [](int k1, int k2, const Vec& a, const Vec& b, double alpha1, double alpha2, double energy) {
            auto r = three_body_lagrangian(k1, k2, a, b, alpha1, alpha2, energy);
            py::dict d;
            d["value"] = r.value;
            d["h1"] = r.h1;
            d["h2"] = r.h2;
            d["time"] = r.time;
            return d;
        },
        py::arg("k1"), py::arg("k2"), py::arg("x_minus"), py::arg("x_plus"), py::arg("alpha1"), py::arg("alpha2"),
        py::arg("energy"));

    m.def(
        "entropy",
        [](const std::vector<std::vector<int>>& successors) { return entropy(graph_from_successors(successors)).entropy; },
        py::arg("successors"), "Topological entropy of the graph given by successor lists.");
    m.def(
        "path_count",
        [](const std::vector<std::vector<int>>& successors, int n, bool periodic) {
            // exact 128-bit count, returned as a Python int
            return py::int_(py::str(to_string(path_count(graph_from_successors(successors), n, periodic))));
        },
        py::arg("successors"), py::arg("n"), py::arg("periodic") = false);

    m.def(
        "variational_check",
        [](const std::string& path) {
            auto s = load_scenario(path);
            if (!s.chain)
                throw ScenarioError("chain", "scenario has no chain");
            auto r = variational_check(s.dl, *s.chain);
            py::dict d;
            d["gradient_error"] = r.gradient_error;
            d["hessian_error"] = r.hessian_error;
            d["symmetry_error"] = r.symmetry_error;
            d["band_violation"] = r.band_violation;
            d["unknowns"] = r.unknowns;
            return d;
        },
        py::arg("path"));

    m.def(
        "run_scenario",
        [](const std::string& path, const std::string& out, int jobs, std::optional<std::uint64_t> seed) {
            auto s = load_scenario(path);
            RunOptions o;
            o.out = out;
            o.jobs = jobs;
            o.seed = seed;
            ScenarioReport rep;
            {
                py::gil_scoped_release release;
                rep = run_scenario(s, o);
            }
            py::list gates;
            for (const auto& g : rep.gates) {
                py::dict d;
                d["name"] = g.name;
                d["value"] = g.value;
                d["bound"] = g.bound;
                d["passed"] = g.passed;
                gates.append(d);
            }
            py::dict d;
            d["ok"] = rep.ok();
            d["gates"] = gates;
            d["files"] = rep.files;
            return d;
        },
        py::arg("path"), py::arg("out") = "out", py::arg("jobs") = 1, py::arg("seed") = py::none(),
        "Run a scenario file and return its gate results.");
}
