// degbill: scenario runner for collision chains, shadowing sweeps and the
// Kepler / n-center studies.

#include "degbill/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

struct Common {
    std::string scenario;
    std::string out = "out";
    int jobs = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--scenario", c.scenario, "scenario file (JSON)")->required();
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
    cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&c](const std::uint64_t& v) {
            c.seed = v;
            c.seed_set = true;
        },
        "random seed (overrides the scenario)");
}

int run(const Common& c, std::vector<degbill::Stage> stages, bool gates)
{
    using namespace degbill;
    Scenario s;
    try {
        s = load_scenario(c.scenario);
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return 2;
    }
    RunOptions o;
    o.out = c.out;
    o.jobs = c.jobs;
    if (c.seed_set)
        o.seed = c.seed;
    o.stages = std::move(stages);
    ScenarioReport rep;
    try {
        rep = run_scenario(s, o);
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    for (const auto& f : rep.files)
        std::cout << "wrote " << c.out << "/" << s.output << "/" << f << "\n";
    for (const auto& g : rep.gates)
        std::printf("%-24s %-6s value=%.6g bound %s\n", g.name.c_str(), g.passed ? "PASS" : "FAIL", g.value,
                    g.bound.c_str());
    return gates && !rep.ok() ? 1 : 0;
}

} // namespace

int main(int argc, char** argv)
{
    using degbill::Stage;
    CLI::App app{"degbill: degenerate billiards, collision chains and shadowing"};
    app.require_subcommand(1);

    Common common;
    struct Leaf {
        CLI::App* cmd;
        std::vector<Stage> stages;
        bool gates;
    };
    std::vector<Leaf> leaves;

    auto* chain = app.add_subcommand("chain", "collision chains");
    chain->require_subcommand(1);
    leaves.push_back({chain->add_subcommand("solve", "Newton solve of the chain"), {Stage::Solve, Stage::Variational},
                      false});
    leaves.push_back({chain->add_subcommand("certify", "hyperbolicity certificate and Green function decay"),
                      {Stage::Solve, Stage::Certify},
                      false});

    auto* billiard = app.add_subcommand("billiard", "ordinary billiard in the eps-domain");
    billiard->require_subcommand(1);
    leaves.push_back({billiard->add_subcommand("shadow", "eps sweep of shadow orbits"), {Stage::Shadow}, false});

    auto* ncenter = app.add_subcommand("ncenter", "n-center problem");
    ncenter->require_subcommand(1);
    leaves.push_back({ncenter->add_subcommand("shadow", "mu sweep of near-collision orbits"), {Stage::Ncenter}, false});

    auto* kepler = app.add_subcommand("kepler", "Kepler discrete Lagrangians");
    kepler->require_subcommand(1);
    leaves.push_back({kepler->add_subcommand("table", "J_n table against quadrature"), {Stage::Kepler}, false});

    auto* graph = app.add_subcommand("graph", "collision graph");
    graph->require_subcommand(1);
    leaves.push_back({graph->add_subcommand("entropy", "topological entropy and path counts"), {Stage::Graph}, false});

    auto* scenario = app.add_subcommand("scenario", "full scenario pipeline");
    scenario->require_subcommand(1);
    leaves.push_back({scenario->add_subcommand("run", "every declared stage, exit 1 on a failed gate"), {}, true});

    for (auto& l : leaves)
        add_common(l.cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    for (const auto& l : leaves)
        if (l.cmd->parsed())
            return run(common, l.stages, l.gates);
    return 2;
}
