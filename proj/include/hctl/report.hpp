#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hctl/leader.hpp"

namespace hctl {

struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

/// Summary of one CLI command. Everything except wall_time is a function of
/// the scenario and seed.
struct RunReport {
    std::string command;
    bool success = false;
    std::map<std::string, double> metrics;    // J1, J2, terminal_distance, alpha, ...
    std::map<std::string, long> iterations;  // dual, inner_cg, follower_cg, restarts, ...
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<CheckResult> checks;
    std::vector<SweepRow> sweep;
    double wall_time = 0.0;
};

nlohmann::json to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& doc);

/// Fixed-width pass/fail table, one line per check.
std::string format_checks(const std::vector<CheckResult>& checks);

}  // namespace hctl
