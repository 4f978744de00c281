#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hctl/coefficients.hpp"
#include "hctl/follower.hpp"
#include "hctl/htransform.hpp"
#include "hctl/leader.hpp"
#include "hctl/mesh.hpp"
#include "hctl/parabolic.hpp"
#include "hctl/sde.hpp"

namespace hctl {

struct SdeSettings {
    int n_paths = 100000;
    std::uint64_t seed = 20240601;
    Point x0;
    double t_check = 1.0;
    double C = 1.0;
    Absorption absorption = Absorption::Bridge;
};

/// A parsed and validated scenario. Every key absent from the file takes the
/// desk default, so an empty object describes the desk scenario.
struct Scenario {
    nlohmann::json source;  // after overrides, as parsed
    Grids grids{SpaceGrid({{0.0, 1.0}}, {1}), TimeGrid(1.0, 1)};
    std::shared_ptr<const CoefficientModel> coefficients;
    GeneratorOptions generator;
    std::vector<Interval> u1_box, u2_box;
    SubdomainMask u1_mask, u2_mask;
    double beta = 1.0;
    SpaceTimeField y_rf;
    SpaceTimeField u1;  // leader control for the `follower` command
    double alpha = 0.5;
    bool alpha_relative = true;
    SpaceField y_tg;
    std::vector<double> sweep;  // same mode as alpha
    std::optional<HKind> hkind = UnitH{};  // empty: no h model at all
    CgOptions cg;
    CgOptions inner{1e-13, 500};
    DualConfig dual;
    SdeSettings sde;
};

/// Applies `key.path=value` overrides. The value is read as JSON when it
/// parses, otherwise as a string. Missing objects along the path are created.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Throws ConfigError naming the dotted key of the first problem found.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {});

/// Solver objects derived from a scenario.
struct Pipeline {
    std::shared_ptr<const ThetaScheme> nominal;
    FollowerProblem follower;
    std::optional<HModel> hmodel;  // absent for h kind "none"
};
Pipeline build_pipeline(const Scenario& scenario);

/// Leader problem with a placeholder alpha; see resolve_alpha.
LeaderProblem build_leader(const Scenario& scenario, const Pipeline& pipeline);
/// Absolute radius for a configured alpha: relative values multiply
/// ||y_tg - y0(T)||.
double resolve_alpha(const Scenario& scenario, double alpha, const LeaderProblem& problem, const BasePair& base);

}  // namespace hctl
