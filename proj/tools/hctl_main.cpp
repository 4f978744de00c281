#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hctl/commands.hpp"

namespace {

template <class T>
std::string text(const T& v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Leader-follower control of a parabolic PDE under drift uncertainty"};
    app.require_subcommand(1, 1);

    hctl::CommandOptions options;
    std::vector<std::string> sets;
    long long seed = -1;
    double tol = 0.0;
    int max_iters = 0;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"solve", "full leader-follower pipeline"},
        {"follower", "follower best response for the configured u1"},
        {"validate", "invariant suite with a pass/fail table"},
        {"sweep-alpha", "terminal distance and J1 over decreasing ball radii"},
        {"simulate", "SDE ensemble summary"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--scenario", options.scenario_path, "scenario JSON file")->required();
        sub->add_option("--out", options.out_dir, "output directory")->required();
        sub->add_option("--seed", seed, "SDE master seed (sde.seed)");
        sub->add_option("--tol", tol, "dual tolerance relative to alpha (solver.dual_tol)");
        sub->add_option("--max-iters", max_iters, "dual iteration limit (solver.max_iters)");
        sub->add_option("--set", sets, "override, key.path=value")->take_all();
        sub->callback([&options, name = name]() { options.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : hctl::kExitConfig;
    }

    if (seed >= 0) options.overrides.push_back("sde.seed=" + text(seed));
    if (tol > 0.0) options.overrides.push_back("solver.dual_tol=" + text(tol));
    if (max_iters > 0) options.overrides.push_back("solver.max_iters=" + text(max_iters));
    options.overrides.insert(options.overrides.end(), sets.begin(), sets.end());
    return hctl::run(options, std::cout, std::cerr);
}
