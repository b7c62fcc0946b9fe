#include "degbill/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace degbill {

namespace {

using json = nlohmann::json;

/// A JSON value together with its field path, for diagnostics.
struct Node {
    const json& j;
    std::string path;

    [[noreturn]] void fail(const std::string& what) const { throw ScenarioError(path.empty() ? "<root>" : path, what); }

    std::string sub(const std::string& key) const { return path.empty() ? key : path + "." + key; }

    bool has(const std::string& key) const { return j.is_object() && j.contains(key); }

    Node at(const std::string& key) const
    {
        if (!j.is_object())
            fail("expected an object");
        if (!j.contains(key))
            throw ScenarioError(sub(key), "missing required field");
        return {j.at(key), sub(key)};
    }

    Node at(size_t i) const { return {j.at(i), path + "[" + std::to_string(i) + "]"}; }

    size_t size() const
    {
        if (!j.is_array())
            fail("expected an array");
        return j.size();
    }

    void only(std::initializer_list<const char*> keys) const
    {
        if (!j.is_object())
            fail("expected an object");
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.count(it.key()))
                throw ScenarioError(sub(it.key()), "unknown field");
    }

    double number() const
    {
        if (!j.is_number())
            fail("expected a number");
        return j.get<double>();
    }

    double positive() const
    {
        const double v = number();
        if (!(v > 0.0))
            fail("expected a positive number");
        return v;
    }

    int integer() const
    {
        if (!j.is_number_integer())
            fail("expected an integer");
        return j.get<int>();
    }

    bool boolean() const
    {
        if (!j.is_boolean())
            fail("expected true or false");
        return j.get<bool>();
    }

    std::string string() const
    {
        if (!j.is_string())
            fail("expected a string");
        return j.get<std::string>();
    }

    std::vector<double> numbers() const
    {
        std::vector<double> v;
        for (size_t i = 0; i < size(); ++i)
            v.push_back(at(i).number());
        return v;
    }

    std::vector<double> positives() const
    {
        std::vector<double> v;
        for (size_t i = 0; i < size(); ++i)
            v.push_back(at(i).positive());
        return v;
    }

    std::vector<int> integers() const
    {
        std::vector<int> v;
        for (size_t i = 0; i < size(); ++i)
            v.push_back(at(i).integer());
        return v;
    }

    Vec vec() const { return stdvec_to_vec(numbers()); }

    Vec vec(int dim) const
    {
        Vec v = vec();
        if (v.size() != dim)
            fail("expected " + std::to_string(dim) + " components");
        return v;
    }

    /// Rows of numbers.
    Mat matrix() const
    {
        const size_t r = size();
        if (r == 0)
            fail("empty matrix");
        const size_t c = at(0).size();
        Mat m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (size_t i = 0; i < r; ++i) {
            const Node row = at(i);
            if (row.size() != c)
                row.fail("ragged matrix row");
            for (size_t k = 0; k < c; ++k)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row.at(k).number();
        }
        return m;
    }

    std::pair<double, double> range() const
    {
        const auto v = numbers();
        if (v.size() != 2 || !(v[0] <= v[1]))
            fail("expected [lo, hi] with lo <= hi");
        return {v[0], v[1]};
    }

    double number_or(const std::string& key, double def) const { return has(key) ? at(key).number() : def; }
    int integer_or(const std::string& key, int def) const { return has(key) ? at(key).integer() : def; }
    bool boolean_or(const std::string& key, bool def) const { return has(key) ? at(key).boolean() : def; }
};

std::string line_col(const std::string& text, std::size_t byte)
{
    int line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

void parse_space(Scenario& s, const Node& n)
{
    n.only({"kind", "dim", "periods"});
    const std::string kind = n.at("kind").string();
    if (kind == "euclidean") {
        const int d = n.at("dim").integer();
        if (d < 1 || d > 6)
            n.at("dim").fail("dimension must be between 1 and 6");
        s.space = AmbientSpace::euclidean(d);
    } else if (kind == "torus") {
        const Vec l = n.at("periods").vec();
        if (l.size() < 1 || l.size() > 6)
            n.at("periods").fail("dimension must be between 1 and 6");
        if (!(l.minCoeff() > 0.0))
            n.at("periods").fail("periods must be positive");
        s.space = AmbientSpace::torus(l);
    } else {
        n.at("kind").fail("expected \"euclidean\" or \"torus\"");
    }
}

void parse_hamiltonian(Scenario& s, const Node& n)
{
    const int d = s.space->dim();
    n.only({"mass", "potential", "magnetic"});
    Mat mass = Mat::Identity(d, d);
    if (n.has("mass")) {
        const Node m = n.at("mass");
        if (m.size() > 0 && m.at(0).j.is_array())
            mass = m.matrix();
        else
            mass = m.vec(d).asDiagonal();
        if (mass.rows() != d || mass.cols() != d)
            m.fail("expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
        if (!mass.isApprox(mass.transpose()) || Eigen::LLT<Mat>(mass).info() != Eigen::Success)
            m.fail("mass matrix must be symmetric positive definite");
    }
    std::shared_ptr<const Potential> pot;
    if (n.has("potential")) {
        const Node p = n.at("potential");
        p.only({"kind", "value", "stiffness", "center", "centers", "strengths"});
        const std::string kind = p.at("kind").string();
        if (kind == "constant") {
            pot = std::make_shared<ConstantPotential>(p.number_or("value", 0.0));
        } else if (kind == "harmonic") {
            const Mat k = p.at("stiffness").matrix();
            if (k.rows() != d || k.cols() != d)
                p.at("stiffness").fail("wrong shape");
            pot = std::make_shared<HarmonicPotential>(k, p.at("center").vec(d));
        } else if (kind == "coulomb") {
            const Node c = p.at("centers");
            std::vector<Vec> centers;
            for (size_t i = 0; i < c.size(); ++i)
                centers.push_back(c.at(i).vec(d));
            const auto a = p.at("strengths").numbers();
            if (a.size() != centers.size())
                p.at("strengths").fail("one strength per center");
            pot = std::make_shared<CoulombPotential>(centers, a);
        } else {
            p.at("kind").fail("expected \"constant\", \"harmonic\" or \"coulomb\"");
        }
    }
    std::shared_ptr<const CovectorField> mag;
    if (n.has("magnetic")) {
        const Node m = n.at("magnetic");
        m.only({"strength", "plane"});
        int i = 0, k = 1;
        if (m.has("plane")) {
            const auto pl = m.at("plane").integers();
            if (pl.size() != 2 || pl[0] == pl[1] || pl[0] < 0 || pl[1] < 0 || pl[0] >= d || pl[1] >= d)
                m.at("plane").fail("expected two distinct coordinate indices");
            i = pl[0];
            k = pl[1];
        }
        mag = std::make_shared<UniformField>(d, m.at("strength").number(), i, k);
    }
    s.hamiltonian.emplace(mass, pot, mag);
}

void parse_scatterer(Scenario& s, const Node& n)
{
    n.only({"kind", "points", "body_dim", "origin", "basis", "metric"});
    const int d = s.space->dim();
    Mat metric = s.hamiltonian->mass();
    if (n.has("metric")) {
        const Node m = n.at("metric");
        if (m.j.is_string()) {
            const std::string v = m.string();
            if (v == "identity")
                metric = Mat::Identity(d, d);
            else if (v != "mass")
                m.fail("expected \"mass\", \"identity\" or a matrix");
        } else {
            metric = m.matrix();
            if (metric.rows() != d || metric.cols() != d)
                m.fail("wrong shape");
        }
    }
    const std::string kind = n.at("kind").string();
    if (kind == "points") {
        const Node p = n.at("points");
        std::vector<Vec> pts;
        for (size_t i = 0; i < p.size(); ++i)
            pts.push_back(p.at(i).vec(d));
        if (pts.empty())
            p.fail("at least one point required");
        s.scatterer = std::make_shared<const Scatterer>(Scatterer::point_set(*s.space, pts, metric));
    } else if (kind == "diagonal") {
        const int b = n.at("body_dim").integer();
        if (b < 1 || 2 * b != d)
            n.at("body_dim").fail("ambient dimension must be twice the body dimension");
        s.scatterer = std::make_shared<const Scatterer>(Scatterer::diagonal(*s.space, b, metric));
    } else if (kind == "affine") {
        const Vec o = n.at("origin").vec(d);
        const Mat rows = n.at("basis").matrix();
        if (rows.cols() != d)
            n.at("basis").fail("basis vectors must have the ambient dimension");
        s.scatterer = std::make_shared<const Scatterer>(Scatterer::affine(*s.space, o, rows.transpose(), metric));
    } else {
        n.at("kind").fail("expected \"points\", \"diagonal\" or \"affine\"");
    }
}

void parse_backend(Scenario& s, const Node& n)
{
    n.only({"kind", "lo", "hi", "flow_step"});
    const int d = s.space->dim();
    s.backend = n.at("kind").string();
    if (s.backend == "free") {
        if (!s.hamiltonian->is_free())
            n.at("kind").fail("free flight needs a constant potential and no magnetic field");
        s.dl.action = std::make_shared<FreeFlightAction>(*s.hamiltonian, *s.space, s.energy);
    } else if (s.backend == "box") {
        if (s.space->is_torus())
            n.at("kind").fail("box backend needs a Euclidean space");
        const Vec lo = n.at("lo").vec(d), hi = n.at("hi").vec(d);
        if (!((hi - lo).minCoeff() > 0.0))
            n.fail("need lo < hi in every coordinate");
        s.box = BoxWalls{lo, hi, 1.0};
        s.dl.action = std::make_shared<BoxAction>(*s.hamiltonian, lo, hi, s.energy);
    } else if (s.backend == "shooting") {
        ConnectOptions co;
        co.flow_step = n.number_or("flow_step", co.flow_step);
        s.dl.action = std::make_shared<ShootingAction>(*s.hamiltonian, *s.space, s.energy, co);
    } else {
        n.at("kind").fail("expected \"free\", \"box\" or \"shooting\"");
    }
    s.dl.points = std::make_shared<ScattererModel>(s.scatterer);
}

void parse_newton(NewtonOptions& o, const Node& n)
{
    o.tol = n.number_or("tol", o.tol);
    o.max_iter = n.integer_or("max_iter", o.max_iter);
    o.max_halvings = n.integer_or("max_halvings", o.max_halvings);
    o.minimize = n.boolean_or("minimize", o.minimize);
}

void parse_chain(Scenario& s, const Node& n)
{
    n.only({"boundary", "code", "points", "start", "end", "solve"});
    ChainConfiguration c;
    const std::string b = n.at("boundary").string();
    if (b == "periodic")
        c.boundary = Boundary::Periodic;
    else if (b == "fixed")
        c.boundary = Boundary::Fixed;
    else
        n.at("boundary").fail("expected \"periodic\" or \"fixed\"");
    const Node code = n.at("code");
    for (size_t i = 0; i < code.size(); ++i)
        c.code.push_back(code.at(i).integers());
    const int d = s.space->dim();
    const Scatterer& sc = *s.scatterer;
    const Node pts = n.at("points");
    for (size_t i = 0; i < pts.size(); ++i) {
        const Node p = pts.at(i);
        p.only({"component", "x"});
        ChainPoint cp;
        cp.component = p.integer_or("component", 0);
        if (cp.component < 0 || cp.component >= sc.components())
            p.at("component").fail("no such scatterer component");
        cp.x = p.has("x") ? p.at("x").vec(sc.dim()) : Vec::Zero(sc.dim());
        if (!p.has("x") && sc.dim() > 0)
            p.fail("missing chart coordinates x");
        c.points.push_back(cp);
    }
    if (c.boundary == Boundary::Fixed) {
        c.start = n.at("start").vec(d);
        c.end = n.at("end").vec(d);
        if (c.code.size() != c.points.size() + 1)
            code.fail("a fixed chain needs one more link than free points");
    } else {
        if (n.has("start") || n.has("end"))
            n.fail("periodic chains take no endpoints");
        if (c.code.size() != c.points.size())
            code.fail("a periodic chain needs one link per point");
    }
    if (c.code.empty())
        code.fail("chain has no links");
    if (n.has("solve")) {
        const Node so = n.at("solve");
        so.only({"tol", "max_iter", "max_halvings", "minimize", "random_starts", "random_range"});
        parse_newton(s.solve.newton, so);
        s.solve.random_starts = so.integer_or("random_starts", 0);
        if (s.solve.random_starts < 0)
            so.at("random_starts").fail("must be nonnegative");
        if (so.has("random_range")) {
            const auto r = so.at("random_range").range();
            s.solve.random_lo = r.first;
            s.solve.random_hi = r.second;
        }
    }
    s.chain = std::move(c);
}

void parse_certificate(Scenario& s, const Node& n)
{
    n.only({"windows", "stab_tol", "green_half_width", "green_block", "symmetry", "tube_eps"});
    CertificateSpec c;
    if (n.has("windows")) {
        c.windows = n.at("windows").integers();
        for (int w : c.windows)
            if (w < 1)
                n.at("windows").fail("window half widths must be positive");
    }
    c.stab_tol = n.number_or("stab_tol", c.stab_tol);
    c.green_half_width = n.integer_or("green_half_width", c.green_half_width);
    c.green_block = n.integer_or("green_block", c.green_block);
    if (n.has("symmetry"))
        c.symmetry = n.at("symmetry").vec(s.scatterer->dim());
    if (n.has("tube_eps")) {
        c.tube_eps = n.at("tube_eps").positive();
        if (!(c.tube_eps < s.scatterer->tube_radius()))
            n.at("tube_eps").fail("eps must be below the tube radius");
        if (c.symmetry.size() > 0)
            n.at("symmetry").fail("the symmetry check applies to the base DLS only");
    }
    s.certificate = c;
}

void parse_shadow(Scenario& s, const Node& n)
{
    n.only({"eps", "margin_factor", "walls", "replay", "lyapunov", "fd_scale", "closure_tol", "expansion_eps", "tol",
            "max_iter"});
    ShadowSpec sh;
    sh.eps = n.at("eps").positives();
    for (double e : sh.eps)
        if (!(e < s.scatterer->tube_radius()))
            n.at("eps").fail("eps must be below the tube radius");
    sh.margin_factor = n.number_or("margin_factor", sh.margin_factor);
    sh.walls = n.boolean_or("walls", s.box.has_value());
    if (sh.walls && !s.box)
        n.at("walls").fail("walls need the box backend");
    sh.replay = n.boolean_or("replay", sh.replay);
    sh.lyapunov = n.boolean_or("lyapunov", false);
    sh.lyapunov_options.fd_scale = n.number_or("fd_scale", sh.lyapunov_options.fd_scale);
    sh.lyapunov_options.closure_tol = n.number_or("closure_tol", sh.lyapunov_options.closure_tol);
    if (n.has("expansion_eps"))
        sh.expansion_eps = n.at("expansion_eps").positives();
    sh.newton.tol = n.number_or("tol", sh.newton.tol);
    sh.newton.max_iter = n.integer_or("max_iter", sh.newton.max_iter);
    if (sh.lyapunov && s.chain && s.chain->boundary != Boundary::Periodic)
        n.at("lyapunov").fail("Lyapunov exponents need a periodic chain");
    s.shadow = sh;
}

void parse_ncenter(Scenario& s, const Node& n)
{
    n.only({"alphas", "mu", "guard", "ds", "energy_tol", "tol", "max_iter", "fd_scale", "error_samples"});
    if (s.scatterer->kind() != ScattererKind::PointSet)
        n.fail("needs a point scatterer");
    NcenterSpec c;
    c.alphas = n.at("alphas").numbers();
    if (c.alphas.size() != s.scatterer->points().size())
        n.at("alphas").fail("one coefficient per scatterer point");
    c.mu = n.at("mu").positives();
    c.guard = n.number_or("guard", c.guard);
    c.options.flow.ds = n.number_or("ds", c.options.flow.ds);
    c.options.flow.energy_tol = n.number_or("energy_tol", c.options.flow.energy_tol);
    c.options.tol = n.number_or("tol", c.options.tol);
    c.options.max_iter = n.integer_or("max_iter", c.options.max_iter);
    c.options.fd_scale = n.number_or("fd_scale", c.options.fd_scale);
    c.options.error_samples = n.integer_or("error_samples", c.options.error_samples);
    if (!s.chain || s.chain->boundary != Boundary::Periodic)
        n.fail("needs a periodic chain");
    s.ncenter = c;
}

void parse_kepler(Scenario& s, const Node& n)
{
    n.only({"h", "n", "pairs", "panels", "three_body"});
    KeplerSpec k;
    k.h = n.at("h").numbers();
    for (double h : k.h)
        if (!(h < 0.0))
            n.at("h").fail("energies must be negative");
    k.n = n.at("n").integers();
    for (int v : k.n)
        if (v == 0)
            n.at("n").fail("revolution labels must be nonzero");
    const Node p = n.at("pairs");
    for (size_t i = 0; i < p.size(); ++i) {
        const Node pr = p.at(i);
        if (pr.size() != 2)
            pr.fail("expected [x_minus, x_plus]");
        k.pairs.emplace_back(pr.at(0).vec(2), pr.at(1).vec(2));
    }
    k.panels = n.integer_or("panels", k.panels);
    if (n.has("three_body")) {
        const Node t = n.at("three_body");
        t.only({"k", "alphas", "energy", "x_minus", "x_plus"});
        ThreeBodySpec tb;
        const auto kk = t.at("k").integers();
        if (kk.size() != 2 || kk[0] == 0 || kk[1] == 0)
            t.at("k").fail("expected two nonzero labels");
        tb.k1 = kk[0];
        tb.k2 = kk[1];
        const auto a = t.at("alphas").positives();
        if (a.size() != 2)
            t.at("alphas").fail("expected two coefficients");
        tb.alpha1 = a[0];
        tb.alpha2 = a[1];
        tb.energy = t.at("energy").number();
        tb.x_minus = t.at("x_minus").vec(2);
        tb.x_plus = t.at("x_plus").vec(2);
        k.three_body = tb;
    }
    s.kepler = k;
}

void parse_graph(Scenario& s, const Node& n)
{
    n.only({"successors", "orbits", "no_straight_reflection", "jump_tol", "angle_tol", "max_length"});
    GraphSpec g;
    if (n.has("successors") == n.has("orbits"))
        n.fail("give exactly one of successors or orbits");
    if (n.has("successors")) {
        const Node sc = n.at("successors");
        for (size_t i = 0; i < sc.size(); ++i) {
            g.successors.push_back(sc.at(i).integers());
            for (int v : g.successors.back())
                if (v < 0 || v >= static_cast<int>(sc.size()))
                    sc.at(i).fail("vertex out of range");
        }
    } else {
        if (!s.scatterer || s.scatterer->kind() != ScattererKind::PointSet || !s.dl.action)
            n.at("orbits").fail("orbits need a point scatterer and a backend");
        const Node o = n.at("orbits");
        const int m = s.scatterer->components();
        for (size_t i = 0; i < o.size(); ++i) {
            const Node v = o.at(i);
            v.only({"tail", "head", "code"});
            GraphOrbitSpec os;
            os.tail = v.at("tail").integer();
            os.head = v.at("head").integer();
            if (os.tail < 0 || os.tail >= m || os.head < 0 || os.head >= m)
                v.fail("endpoint id out of range");
            if (v.has("code"))
                os.code = v.at("code").integers();
            g.orbits.push_back(os);
        }
    }
    g.options.no_straight_reflection = n.boolean_or("no_straight_reflection", false);
    g.options.jump_tol = n.number_or("jump_tol", g.options.jump_tol);
    g.options.angle_tol = n.number_or("angle_tol", g.options.angle_tol);
    g.max_length = n.integer_or("max_length", g.max_length);
    if (g.max_length < 1)
        n.at("max_length").fail("must be positive");
    s.graph = g;
}

void parse_gates(Scenario& s, const Node& n)
{
    n.only({"gradient_tol", "hessian_tol", "shadow_slope", "lyapunov_r2", "large_count", "expansion_slope",
            "certificate_stabilized", "green_r2", "kernel_tol", "ncenter_slope_min", "mindist_factor", "kepler_tol",
            "endpoint_tol"});
    Gates& g = s.gates;
    auto num = [&](const char* key, std::optional<double>& out) {
        if (n.has(key))
            out = n.at(key).number();
    };
    auto rng = [&](const char* key, std::optional<std::pair<double, double>>& out) {
        if (n.has(key))
            out = n.at(key).range();
    };
    num("gradient_tol", g.gradient_tol);
    num("hessian_tol", g.hessian_tol);
    rng("shadow_slope", g.shadow_slope);
    num("lyapunov_r2", g.lyapunov_r2);
    if (n.has("large_count"))
        g.large_count = n.at("large_count").integer();
    rng("expansion_slope", g.expansion_slope);
    if (n.has("certificate_stabilized"))
        g.certificate_stabilized = n.at("certificate_stabilized").boolean();
    num("green_r2", g.green_r2);
    num("kernel_tol", g.kernel_tol);
    num("ncenter_slope_min", g.ncenter_slope_min);
    num("mindist_factor", g.mindist_factor);
    num("kepler_tol", g.kepler_tol);
    num("endpoint_tol", g.endpoint_tol);
    auto need = [&](bool cond, const char* key, const char* what) {
        if (n.has(key) && !cond)
            n.at(key).fail(what);
    };
    need(s.chain.has_value(), "gradient_tol", "needs a chain");
    need(s.chain.has_value(), "hessian_tol", "needs a chain");
    need(s.shadow.has_value(), "shadow_slope", "needs a shadow section");
    need(s.shadow && s.shadow->lyapunov, "lyapunov_r2", "needs shadow.lyapunov");
    need(s.shadow && s.shadow->lyapunov, "large_count", "needs shadow.lyapunov");
    need(s.shadow && !s.shadow->expansion_eps.empty(), "expansion_slope", "needs shadow.expansion_eps");
    need(s.certificate.has_value(), "certificate_stabilized", "needs a certificate section");
    need(s.certificate.has_value(), "green_r2", "needs a certificate section");
    need(s.certificate && s.certificate->symmetry.size() > 0, "kernel_tol", "needs certificate.symmetry");
    need(s.ncenter.has_value(), "ncenter_slope_min", "needs an ncenter section");
    need(s.ncenter.has_value(), "mindist_factor", "needs an ncenter section");
    need(s.kepler.has_value(), "kepler_tol", "needs a kepler section");
    need(s.shadow && s.chain && s.chain->boundary == Boundary::Fixed, "endpoint_tol",
         "needs a fixed chain with a shadow section");
}

Scenario build(const json& root)
{
    const Node r{root, ""};
    r.only({"name", "output", "seed", "space", "hamiltonian", "energy", "scatterer", "backend", "chain",
            "certificate", "shadow", "ncenter", "kepler", "graph", "gates", "description"});
    Scenario s;
    s.name = r.at("name").string();
    if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos)
        r.at("name").fail("expected a nonempty name without path separators");
    s.output = r.has("output") ? r.at("output").string() : s.name;
    if (r.has("seed")) {
        const Node sd = r.at("seed");
        if (!sd.j.is_number_unsigned())
            sd.fail("expected a nonnegative integer");
        s.seed = sd.j.get<std::uint64_t>();
    }
    if (r.has("description"))
        r.at("description").string();
    const bool system = r.has("space");
    if (system) {
        parse_space(s, r.at("space"));
        if (r.has("hamiltonian"))
            parse_hamiltonian(s, r.at("hamiltonian"));
        else
            s.hamiltonian = ClassicalHamiltonian::free(s.space->dim());
        s.energy = r.at("energy").number();
        parse_scatterer(s, r.at("scatterer"));
        parse_backend(s, r.at("backend"));
    } else {
        for (const char* key : {"hamiltonian", "energy", "scatterer", "backend", "chain", "certificate", "shadow",
                                "ncenter"})
            if (r.has(key))
                r.at(key).fail("needs a space section");
    }
    if (r.has("chain"))
        parse_chain(s, r.at("chain"));
    for (const char* key : {"certificate", "shadow", "ncenter"})
        if (r.has(key) && !s.chain)
            r.at(key).fail("needs a chain section");
    if (r.has("certificate"))
        parse_certificate(s, r.at("certificate"));
    if (r.has("shadow"))
        parse_shadow(s, r.at("shadow"));
    if (r.has("ncenter"))
        parse_ncenter(s, r.at("ncenter"));
    if (r.has("kepler"))
        parse_kepler(s, r.at("kepler"));
    if (r.has("graph"))
        parse_graph(s, r.at("graph"));
    if (r.has("gates"))
        parse_gates(s, r.at("gates"));
    return s;
}

} // namespace

Scenario parse_scenario(const std::string& text, const std::string& source)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(source, "JSON syntax error at " + line_col(text, e.byte));
    }
    try {
        return build(root);
    } catch (const ScenarioError&) {
        throw;
    } catch (const json::exception& e) {
        throw ScenarioError(source, e.what());
    }
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ScenarioError(path, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

VariationalReport variational_check(const DiscreteLagrangian& dl, const ChainConfiguration& c, double step)
{
    VariationalReport rep;
    const std::vector<Vec> r = residual(dl, c);
    std::vector<int> dims;
    for (const auto& v : r) {
        dims.push_back(static_cast<int>(v.size()));
        rep.unknowns += static_cast<int>(v.size());
    }
    if (rep.unknowns == 0)
        return rep;
    const double scale = std::sqrt(2.0 * std::abs(dl.action->energy()));
    auto perturbed = [&](size_t i, Eigen::Index k, double h) {
        std::vector<Vec> delta;
        for (int d : dims)
            delta.push_back(Vec::Zero(d));
        delta[i][k] = h;
        return retract_chain(dl, c, delta);
    };
    const Mat hd = hessian(dl, c).dense();
    Mat hfd(rep.unknowns, rep.unknowns);
    double gerr = 0.0, gref = scale;
    int col = 0;
    for (size_t i = 0; i < r.size(); ++i) {
        for (Eigen::Index k = 0; k < r[i].size(); ++k, ++col) {
            const ChainConfiguration cp = perturbed(i, k, step), cm = perturbed(i, k, -step);
            const double fd = (chain_action(dl, cp) - chain_action(dl, cm)) / (2.0 * step);
            gerr = std::max(gerr, std::abs(fd - r[i][k]));
            gref = std::max(gref, std::abs(fd));
            const auto rp = residual(dl, cp), rm = residual(dl, cm);
            int row = 0;
            for (size_t a = 0; a < rp.size(); ++a)
                for (Eigen::Index b = 0; b < rp[a].size(); ++b, ++row)
                    hfd(row, col) = (rp[a][b] - rm[a][b]) / (2.0 * step);
        }
    }
    rep.gradient_error = gerr / gref;
    const double hmax = std::max(hd.cwiseAbs().maxCoeff(), 1e-300);
    rep.hessian_error = (hd - hfd).cwiseAbs().maxCoeff() / hmax;
    rep.symmetry_error = (hd - hd.transpose()).cwiseAbs().maxCoeff() / hmax;
    std::vector<int> off(dims.size() + 1, 0);
    for (size_t i = 0; i < dims.size(); ++i)
        off[i + 1] = off[i] + dims[i];
    const int n = static_cast<int>(dims.size());
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            const int gap = std::abs(a - b);
            const bool band = gap <= 1 || (c.boundary == Boundary::Periodic && gap == n - 1);
            if (band || dims[static_cast<size_t>(a)] == 0 || dims[static_cast<size_t>(b)] == 0)
                continue;
            const double v =
                hd.block(off[static_cast<size_t>(a)], off[static_cast<size_t>(b)], dims[static_cast<size_t>(a)],
                         dims[static_cast<size_t>(b)])
                    .cwiseAbs()
                    .maxCoeff();
            rep.band_violation = std::max(rep.band_violation, v);
        }
    return rep;
}

double symmetry_kernel_error(const DiscreteLagrangian& dl, const ChainConfiguration& c, const Vec& u_chart)
{
    const BlockTridiagonalHessian h = hessian(dl, c);
    std::vector<Vec> u(static_cast<size_t>(h.blocks()), u_chart);
    const auto hu = h.apply(u);
    double num = 0.0;
    for (const auto& v : hu)
        num = std::max(num, v.cwiseAbs().maxCoeff());
    const Mat d = h.dense();
    const double norm = d.cwiseAbs().rowwise().sum().maxCoeff();
    return num / std::max(norm * u_chart.cwiseAbs().maxCoeff(), 1e-300);
}

bool ScenarioReport::ok() const
{
    return std::all_of(gates.begin(), gates.end(), [](const GateResult& g) { return g.passed; });
}

namespace {

std::string fmt(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return buf;
}

class Csv {
public:
    Csv(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path)
    {
        if (!out_)
            throw Error("cannot write " + path.string());
        row(header);
    }
    void row(const std::vector<std::string>& cells)
    {
        for (size_t i = 0; i < cells.size(); ++i)
            out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

std::string b01(bool b) { return b ? "1" : "0"; }

template <class F>
void parallel_for(std::size_t n, int jobs, F f)
{
    const int t = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (t == 1) {
        for (std::size_t i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < t; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = static_cast<std::size_t>(w); i < n; i += static_cast<std::size_t>(t))
                f(i);
        });
    for (auto& th : pool)
        th.join();
}

struct Runner {
    const Scenario& s;
    const RunOptions& o;
    std::filesystem::path dir;
    std::uint64_t seed;
    ScenarioReport rep;
    std::optional<ChainConfiguration> solved;

    void gate(const std::string& name, double value, const std::string& bound, bool passed)
    {
        rep.gates.push_back({name, value, bound, passed});
    }

    Csv csv(const std::string& file, const std::vector<std::string>& header)
    {
        rep.files.push_back(file);
        return Csv(dir / file, header);
    }

    const ChainConfiguration& chain()
    {
        if (!solved)
            solve(false);
        return *solved;
    }

    void solve(bool write)
    {
        const ChainConfiguration& c0 = *s.chain;
        const NewtonResult first = newton_chain(s.dl, c0, s.solve.newton);
        solved = first.chain;
        if (!write)
            return;
        std::vector<std::optional<NewtonResult>> runs{first};
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(s.solve.random_lo, s.solve.random_hi);
        for (int k = 0; k < s.solve.random_starts; ++k) {
            ChainConfiguration c = c0;
            for (auto& p : c.points)
                for (Eigen::Index i = 0; i < p.x.size(); ++i)
                    p.x[i] = u(rng);
            try {
                runs.emplace_back(newton_chain(s.dl, c, s.solve.newton));
            } catch (const Error&) {
                runs.emplace_back();
            }
        }
        {
            Csv t = csv("solve.csv", {"start [index]", "converged [bool]", "iterations [count]", "residual [momentum]",
                                      "min_singular [action/length^2]", "deviation [chart length]"});
            int failed = 0;
            double worst = 0.0;
            for (size_t k = 0; k < runs.size(); ++k) {
                if (!runs[k]) {
                    ++failed;
                    t.row({std::to_string(k), "0", "nan", "nan", "nan", "nan"});
                    continue;
                }
                double dev = 0.0;
                for (size_t j = 0; j < runs[k]->chain.points.size(); ++j) {
                    const Vec dx = runs[k]->chain.points[j].x - first.chain.points[j].x;
                    if (dx.size() > 0)
                        dev = std::max(dev, dx.cwiseAbs().maxCoeff());
                }
                worst = std::max(worst, dev);
                t.row({std::to_string(k), "1", std::to_string(runs[k]->iterations), fmt(runs[k]->residual_norm),
                       fmt(runs[k]->min_singular), fmt(dev)});
            }
            if (s.solve.random_starts > 0) {
                gate("random_starts_converged", static_cast<double>(failed), "no failures", failed == 0);
                gate("random_starts_unique", worst, "<= 1e-8", failed == 0 && worst <= 1e-8);
            }
        }
        const auto adm = admissible(s.dl, *solved);
        std::vector<std::string> header{"point [index]", "component [index]"};
        const int m = s.scatterer->dim();
        for (int i = 0; i < m; ++i)
            header.push_back("x" + std::to_string(i) + " [chart length]");
        header.insert(header.end(), {"jump [momentum]", "reversal_angle [rad]", "admissible [bool]"});
        Csv t = csv("chain.csv", header);
        for (size_t j = 0; j < solved->points.size(); ++j) {
            std::vector<std::string> row{std::to_string(j), std::to_string(solved->points[j].component)};
            for (int i = 0; i < m; ++i)
                row.push_back(fmt(solved->points[j].x[i]));
            row.push_back(fmt(adm[j].jump));
            row.push_back(fmt(adm[j].reversal_angle));
            row.push_back(b01(adm[j].admissible));
            t.row(row);
        }
    }

    void variational()
    {
        // an off-critical configuration: solved chain shifted by a seeded perturbation
        ChainConfiguration off = chain();
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_real_distribution<double> u(-0.02, 0.02);
        for (auto& p : off.points)
            for (Eigen::Index i = 0; i < p.x.size(); ++i)
                p.x[i] += u(rng);
        Csv t = csv("variational.csv", {"configuration [label]", "unknowns [count]", "gradient_error [relative]",
                                        "hessian_error [relative]", "symmetry_error [relative]",
                                        "band_violation [action/length^2]"});
        double g = 0.0, h = 0.0, sym = 0.0, band = 0.0;
        for (const auto& [label, c] : {std::pair<std::string, const ChainConfiguration*>{"critical", &chain()},
                                       {"perturbed", &off}}) {
            const VariationalReport r = variational_check(s.dl, *c);
            t.row({label, std::to_string(r.unknowns), fmt(r.gradient_error), fmt(r.hessian_error),
                   fmt(r.symmetry_error), fmt(r.band_violation)});
            g = std::max(g, r.gradient_error);
            h = std::max(h, r.hessian_error);
            sym = std::max(sym, r.symmetry_error);
            band = std::max(band, r.band_violation);
        }
        if (s.gates.gradient_tol)
            gate("gradient_error", g, "<= " + fmt(*s.gates.gradient_tol), g <= *s.gates.gradient_tol);
        if (s.gates.hessian_tol) {
            gate("hessian_error", h, "<= " + fmt(*s.gates.hessian_tol), h <= *s.gates.hessian_tol);
            gate("hessian_symmetry", sym, "== 0", sym == 0.0);
            gate("hessian_band", band, "== 0", band == 0.0);
        }
    }

    void certify()
    {
        const CertificateSpec& cs = *s.certificate;
        DiscreteLagrangian dl = s.dl;
        ChainConfiguration c = chain();
        if (cs.tube_eps > 0.0) {
            ShadowOptions so;
            const ShadowChain sc = shadow_solve(s.dl, c, cs.tube_eps, so);
            dl = sc.dl;
            c = sc.chain;
        }
        const Certificate cert = hyperbolicity_certificate(dl, c, cs.windows, cs.stab_tol);
        {
            Csv t = csv("certificate.csv", {"W [blocks]", "C_W [inverse Hessian norm]"});
            for (size_t i = 0; i < cert.windows.size(); ++i)
                t.row({std::to_string(cert.windows[i]), fmt(cert.values[i])});
        }
        const GreenFit gf = green_decay(dl, c, cs.green_block, cs.green_half_width);
        {
            Csv t = csv("green.csv", {"offset [blocks]", "norm [inverse Hessian norm]"});
            const int w = static_cast<int>(gf.profile.size()) / 2;
            for (size_t i = 0; i < gf.profile.size(); ++i)
                t.row({std::to_string(static_cast<int>(i) - w), fmt(gf.profile[i])});
        }
        {
            Csv t = csv("certificate_summary.csv",
                        {"certificate [inverse Hessian norm]", "relative_change [relative]", "stabilized [bool]",
                         "green_lambda [1/block]", "green_C [inverse Hessian norm]", "green_r2 [1]",
                         "kernel_error [relative]"});
            double ker = std::nan("");
            if (cs.symmetry.size() > 0)
                ker = symmetry_kernel_error(s.dl, chain(), cs.symmetry);
            t.row({fmt(cert.certificate), fmt(cert.relative_change), b01(cert.stabilized), fmt(gf.lambda), fmt(gf.c),
                   fmt(gf.r2), fmt(ker)});
            if (s.gates.kernel_tol)
                gate("symmetry_kernel", ker, "<= " + fmt(*s.gates.kernel_tol), ker <= *s.gates.kernel_tol);
        }
        if (s.gates.certificate_stabilized)
            gate("certificate_stabilized", cert.relative_change, *s.gates.certificate_stabilized ? "stabilized" : "grows",
                 cert.stabilized == *s.gates.certificate_stabilized);
        if (s.gates.green_r2)
            gate("green_decay", gf.r2, "lambda > 0 and r2 >= " + fmt(*s.gates.green_r2),
                 gf.lambda > 0.0 && gf.r2 >= *s.gates.green_r2);
    }

    void shadow()
    {
        const ShadowSpec& sh = *s.shadow;
        const ChainConfiguration& c = chain();
        struct Row {
            bool converged = false;
            int iterations = 0;
            double residual = 0.0, error = 0.0, replay = std::nan(""), endpoint = 0.0;
            LyapunovResult lyap;
            std::string message;
        };
        std::vector<Row> rows(sh.eps.size());
        ShadowOptions so;
        so.newton = sh.newton;
        so.margin_factor = sh.margin_factor;
        parallel_for(sh.eps.size(), o.jobs, [&](std::size_t i) {
            Row& r = rows[i];
            try {
                const double eps = sh.eps[i];
                const ShadowChain sc = shadow_solve(s.dl, c, eps, so);
                r.converged = sc.converged;
                r.iterations = sc.newton.iterations;
                r.residual = sc.newton.residual_norm;
                r.error = shadow_error(s.dl, c, sc);
                std::optional<BoxWalls> walls;
                if (sh.walls)
                    walls = BoxWalls{s.box->lo, s.box->hi, sh.margin_factor};
                const BilliardDomain dom(*s.hamiltonian, s.scatterer, eps, walls);
                if (c.boundary == Boundary::Fixed)
                    r.endpoint = endpoint_deviation(dom, sc);
                if (sh.replay)
                    r.replay = replay_deviation(dom, sc);
                if (sh.lyapunov)
                    r.lyap = lyapunov_estimate(dom, sc, sh.lyapunov_options);
                r.message = "ok";
            } catch (const Error& e) {
                r.message = e.what();
            }
        });
        {
            Csv t = csv("shadow.csv", {"eps [length]", "converged [bool]", "iterations [count]", "residual [momentum]",
                                       "sup_error [length]", "replay [phase distance]", "endpoint_error [length]"});
            for (size_t i = 0; i < rows.size(); ++i)
                t.row({fmt(sh.eps[i]), b01(rows[i].converged), std::to_string(rows[i].iterations),
                       fmt(rows[i].residual), fmt(rows[i].error), fmt(rows[i].replay), fmt(rows[i].endpoint)});
        }
        const bool all = std::all_of(rows.begin(), rows.end(), [](const Row& r) { return r.converged; });
        gate("shadow_converged", all ? 1.0 : 0.0, "all eps", all);
        std::vector<std::string> fits_hdr{"quantity [label]", "slope [1]", "intercept [1]", "r2 [1]"};
        std::vector<std::vector<std::string>> fits;
        if (all && sh.eps.size() >= 2) {
            std::vector<double> err;
            for (const auto& r : rows)
                err.push_back(r.error);
            const LinearFit f = loglog_fit(sh.eps, err);
            fits.push_back({"shadow_error_vs_eps", fmt(f.slope), fmt(f.intercept), fmt(f.r2)});
            if (s.gates.shadow_slope)
                gate("shadow_slope", f.slope,
                     "[" + fmt(s.gates.shadow_slope->first) + ", " + fmt(s.gates.shadow_slope->second) + "]",
                     f.slope >= s.gates.shadow_slope->first && f.slope <= s.gates.shadow_slope->second);
        } else if (s.gates.shadow_slope) {
            gate("shadow_slope", std::nan(""), "needs converged sweep", false);
        }
        if (s.gates.endpoint_tol) {
            double e = 0.0;
            for (const auto& r : rows)
                e = std::max(e, r.endpoint);
            gate("endpoints", e, "<= " + fmt(*s.gates.endpoint_tol), all && e <= *s.gates.endpoint_tol);
        }
        if (sh.lyapunov) {
            size_t width = 0;
            for (const auto& r : rows)
                width = std::max(width, r.lyap.exponents.size());
            std::vector<std::string> hdr{"eps [length]", "large_count [count]", "closure_error [phase distance]"};
            for (size_t k = 0; k < width; ++k)
                hdr.push_back("lambda" + std::to_string(k) + " [1/bounce]");
            Csv t = csv("lyapunov.csv", hdr);
            std::vector<double> x, y;
            bool counts = true;
            for (size_t i = 0; i < rows.size(); ++i) {
                std::vector<std::string> row{fmt(sh.eps[i]), std::to_string(rows[i].lyap.large_count),
                                             fmt(rows[i].lyap.closure_error)};
                for (size_t k = 0; k < width; ++k)
                    row.push_back(k < rows[i].lyap.exponents.size() ? fmt(rows[i].lyap.exponents[k]) : "nan");
                t.row(row);
                if (!rows[i].lyap.exponents.empty()) {
                    x.push_back(std::log(1.0 / sh.eps[i]));
                    y.push_back(rows[i].lyap.exponents.front());
                }
                if (s.gates.large_count)
                    counts = counts && rows[i].lyap.large_count == *s.gates.large_count;
            }
            if (x.size() >= 2 && x.size() == rows.size()) {
                const LinearFit f = linear_fit(x, y);
                fits.push_back({"largest_exponent_vs_ln_inv_eps", fmt(f.slope), fmt(f.intercept), fmt(f.r2)});
                if (s.gates.lyapunov_r2)
                    gate("lyapunov_growth", f.r2, "slope > 0 and r2 >= " + fmt(*s.gates.lyapunov_r2),
                         f.slope > 0.0 && f.r2 >= *s.gates.lyapunov_r2);
            } else if (s.gates.lyapunov_r2) {
                gate("lyapunov_growth", std::nan(""), "needs every eps", false);
            }
            if (s.gates.large_count)
                gate("large_exponents", static_cast<double>(*s.gates.large_count),
                     "== " + std::to_string(*s.gates.large_count), counts && x.size() == rows.size());
        }
        if (!sh.expansion_eps.empty()) {
            const ChainConfiguration pred = shadow_predictor(s.dl, c);
            std::vector<double> rem(sh.expansion_eps.size(), 0.0);
            const int n = static_cast<int>(pred.points.size());
            const int links = c.boundary == Boundary::Periodic ? n : n - 1;
            parallel_for(sh.expansion_eps.size(), o.jobs, [&](std::size_t i) {
                const double eps = sh.expansion_eps[i];
                for (int j = 0; j < links; ++j) {
                    const int jn = (j + 1) % n;
                    const size_t link = static_cast<size_t>(c.boundary == Boundary::Periodic ? j : j + 1);
                    const double le = generating_eps(s.dl, c.code[link], pred.points[static_cast<size_t>(j)],
                                                     pred.points[static_cast<size_t>(jn)], eps, sh.margin_factor);
                    const double ex = generating_expansion(s.dl, c.code[link], pred.points[static_cast<size_t>(j)],
                                                           pred.points[static_cast<size_t>(jn)], eps);
                    rem[i] = std::max(rem[i], std::abs(le - ex));
                }
            });
            Csv t = csv("expansion.csv", {"eps [length]", "remainder [action]"});
            for (size_t i = 0; i < rem.size(); ++i)
                t.row({fmt(sh.expansion_eps[i]), fmt(rem[i])});
            if (rem.size() >= 2) {
                const LinearFit f = loglog_fit(sh.expansion_eps, rem);
                fits.push_back({"expansion_remainder_vs_eps", fmt(f.slope), fmt(f.intercept), fmt(f.r2)});
                if (s.gates.expansion_slope)
                    gate("expansion_slope", f.slope,
                         "[" + fmt(s.gates.expansion_slope->first) + ", " + fmt(s.gates.expansion_slope->second) +
                             "]",
                         f.slope >= s.gates.expansion_slope->first && f.slope <= s.gates.expansion_slope->second);
            }
        }
        Csv t = csv("fits.csv", fits_hdr);
        for (const auto& f : fits)
            t.row(f);
    }

    void ncenter()
    {
        const NcenterSpec& nc = *s.ncenter;
        SingularPerturbation sp = SingularPerturbation::centers(*s.hamiltonian, s.scatterer, nc.mu.front(), nc.alphas);
        sp.set_guard(nc.guard);
        ShadowExperimentOptions eo = nc.options;
        eo.jobs = o.jobs;
        const auto rows = shadow_experiment(s.dl, chain(), sp, nc.mu, eo);
        Csv t = csv("ncenter.csv", {"mu [strength]", "sup_error [length]", "converged [bool]",
                                    "min_distance_to_N [length]", "iterations [count]", "residual [phase distance]",
                                    "energy_drift [relative]", "status [label]"});
        bool all = true;
        std::vector<double> mu, err, ratio;
        for (const auto& r : rows) {
            std::string msg = r.message;
            std::replace(msg.begin(), msg.end(), ',', ';');
            t.row({fmt(r.mu), fmt(r.sup_error), b01(r.converged), fmt(r.min_distance), std::to_string(r.iterations),
                   fmt(r.residual), fmt(r.energy_drift), msg});
            all = all && r.converged;
            if (r.converged) {
                mu.push_back(r.mu);
                err.push_back(r.sup_error);
                ratio.push_back(r.min_distance / r.mu);
            }
        }
        gate("ncenter_converged", all ? 1.0 : 0.0, "all mu", all);
        if (all && mu.size() >= 2) {
            const LinearFit f = loglog_fit(mu, err);
            Csv ft = csv("ncenter_fit.csv", {"quantity [label]", "slope [1]", "intercept [1]", "r2 [1]"});
            ft.row({"sup_error_vs_mu", fmt(f.slope), fmt(f.intercept), fmt(f.r2)});
            if (s.gates.ncenter_slope_min)
                gate("ncenter_slope", f.slope, ">= " + fmt(*s.gates.ncenter_slope_min),
                     f.slope >= *s.gates.ncenter_slope_min);
            const double spread = *std::max_element(ratio.begin(), ratio.end()) /
                                  *std::min_element(ratio.begin(), ratio.end());
            if (s.gates.mindist_factor)
                gate("min_distance_scaling", spread, "max/min of d_min/mu <= " + fmt(*s.gates.mindist_factor),
                     spread <= *s.gates.mindist_factor);
        } else {
            if (s.gates.ncenter_slope_min)
                gate("ncenter_slope", std::nan(""), "needs converged sweep", false);
            if (s.gates.mindist_factor)
                gate("min_distance_scaling", std::nan(""), "needs converged sweep", false);
        }
    }

    void kepler()
    {
        const KeplerSpec& k = *s.kepler;
        Csv t = csv("kepler.csv", {"h [energy]", "n [revolutions]", "pair [index]", "J [action]",
                                   "quadrature [action]", "rel_error [relative]", "dJ_dh [time]", "status [label]"});
        double worst = 0.0;
        bool any = false;
        for (double h : k.h)
            for (int n : k.n)
                for (size_t p = 0; p < k.pairs.size(); ++p) {
                    const auto& [xm, xp] = k.pairs[p];
                    try {
                        const double j = kepler_J(n, h, xm, xp);
                        const ArcType base{};
                        const KeplerArc arc = kepler_arc(xm, xp, -0.5 / h, n > 0 ? base : dual(base));
                        const double q = arc_action_quadrature(arc, n > 0 ? n : -n - 1, k.panels);
                        const double rel = std::abs(j - q) / std::abs(q);
                        worst = std::max(worst, rel);
                        any = true;
                        t.row({fmt(h), std::to_string(n), std::to_string(p), fmt(j), fmt(q), fmt(rel),
                               fmt(kepler_J_dh(n, h, xm, xp)), "ok"});
                    } catch (const Error&) {
                        t.row({fmt(h), std::to_string(n), std::to_string(p), "nan", "nan", "nan", "nan",
                               "infeasible"});
                    }
                }
        if (s.gates.kepler_tol)
            gate("kepler_quadrature", worst, "<= " + fmt(*s.gates.kepler_tol), any && worst <= *s.gates.kepler_tol);
        if (k.three_body) {
            const ThreeBodySpec& tb = *k.three_body;
            Csv u = csv("three_body.csv", {"k1 [revolutions]", "k2 [revolutions]", "value [action]", "h1 [energy]",
                                           "h2 [energy]", "time [time]", "early_collision_risk [bool]",
                                           "status [label]"});
            try {
                const ThreeBodyResult r =
                    three_body_lagrangian(tb.k1, tb.k2, tb.x_minus, tb.x_plus, tb.alpha1, tb.alpha2, tb.energy);
                const Commensurability cm = commensurability_check(tb.k1, tb.k2, r.h1, r.h2);
                u.row({std::to_string(tb.k1), std::to_string(tb.k2), fmt(r.value), fmt(r.h1), fmt(r.h2), fmt(r.time),
                       b01(cm.early_collision_risk), "ok"});
            } catch (const Error& e) {
                std::string msg = e.what();
                std::replace(msg.begin(), msg.end(), ',', ';');
                u.row({std::to_string(tb.k1), std::to_string(tb.k2), "nan", "nan", "nan", "nan", "0", msg});
            }
        }
    }

    void graph()
    {
        const GraphSpec& gs = *s.graph;
        CollisionGraph g;
        if (!gs.successors.empty() || gs.orbits.empty()) {
            g = graph_from_successors(gs.successors);
        } else {
            std::vector<GraphOrbit> orbits;
            const auto& pts = s.scatterer->points();
            for (const auto& os : gs.orbits) {
                const Vec& a = pts[static_cast<size_t>(os.tail)];
                const Vec& b = pts[static_cast<size_t>(os.head)];
                const LinkEval e = s.dl.action->evaluate(os.code, a, b, false);
                std::ostringstream label;
                label << os.tail << ">" << os.head;
                if (!os.code.empty()) {
                    label << "(";
                    for (size_t i = 0; i < os.code.size(); ++i)
                        label << (i ? " " : "") << os.code[i];
                    label << ")";
                }
                orbits.push_back(graph_orbit(*s.hamiltonian, label.str(), os.tail, os.head, a, b, e, os.code));
            }
            g = build_graph(orbits, gs.options);
        }
        {
            rep.files.push_back("graph.txt");
            std::ofstream out(dir / "graph.txt");
            out << g.dump();
        }
        const EntropyResult er = entropy(g);
        {
            Csv t = csv("entropy.csv", {"vertices [count]", "edges [count]", "entropy [nats]",
                                        "spectral_radius [1]", "components [count]", "reducible [bool]",
                                        "dense_radius [1]"});
            t.row({std::to_string(g.size()), std::to_string(g.edges()), fmt(er.entropy), fmt(er.spectral_radius),
                   std::to_string(er.components), b01(er.reducible),
                   er.cross_checked ? fmt(er.dense_radius) : std::string("nan")});
        }
        Csv t = csv("paths.csv", {"n [edges]", "walks [count]", "closed_walks [count]"});
        for (int n = 1; n <= gs.max_length; ++n)
            t.row({std::to_string(n), to_string(path_count(g, n, false)), to_string(path_count(g, n, true))});
    }
};

} // namespace

ScenarioReport run_scenario(const Scenario& s, const RunOptions& o)
{
    Runner r{s, o, std::filesystem::path(o.out) / s.output, o.seed.value_or(s.seed), {}, {}};
    std::filesystem::create_directories(r.dir);
    std::vector<Stage> stages = o.stages;
    if (stages.empty()) {
        if (s.chain)
            stages.insert(stages.end(), {Stage::Solve, Stage::Variational});
        if (s.certificate)
            stages.push_back(Stage::Certify);
        if (s.shadow)
            stages.push_back(Stage::Shadow);
        if (s.ncenter)
            stages.push_back(Stage::Ncenter);
        if (s.kepler)
            stages.push_back(Stage::Kepler);
        if (s.graph)
            stages.push_back(Stage::Graph);
    }
    auto require = [&](bool cond, const char* what) {
        if (!cond)
            throw ScenarioError(s.name, std::string("stage needs a ") + what + " section");
    };
    for (Stage st : stages) {
        switch (st) {
        case Stage::Solve:
            require(s.chain.has_value(), "chain");
            r.solve(true);
            break;
        case Stage::Variational:
            require(s.chain.has_value(), "chain");
            r.variational();
            break;
        case Stage::Certify:
            require(s.certificate.has_value(), "certificate");
            r.certify();
            break;
        case Stage::Shadow:
            require(s.shadow.has_value(), "shadow");
            r.shadow();
            break;
        case Stage::Ncenter:
            require(s.ncenter.has_value(), "ncenter");
            r.ncenter();
            break;
        case Stage::Kepler:
            require(s.kepler.has_value(), "kepler");
            r.kepler();
            break;
        case Stage::Graph:
            require(s.graph.has_value(), "graph");
            r.graph();
            break;
        }
    }
    {
        Csv t = r.csv("gates.csv", {"gate [label]", "value [1]", "bound [label]", "passed [bool]"});
        for (const auto& g : r.rep.gates)
            t.row({g.name, fmt(g.value), g.bound, b01(g.passed)});
    }
    json rj;
    rj["name"] = s.name;
    rj["seed"] = r.seed;
    rj["passed"] = r.rep.ok();
    rj["gates"] = json::array();
    for (const auto& g : r.rep.gates)
        rj["gates"].push_back({{"name", g.name}, {"value", fmt(g.value)}, {"bound", g.bound}, {"passed", g.passed}});
    rj["files"] = r.rep.files;
    std::ofstream(r.dir / "report.json") << rj.dump(2) << "\n";
    r.rep.files.push_back("report.json");
    r.rep.solved = r.solved;
    return r.rep;
}

} // namespace degbill
