#include "hctl/report.hpp"

#include <cstdio>

#include "hctl/errors.hpp"

namespace hctl {

using nlohmann::json;

json to_json(const RunReport& r) {
    json doc;
    doc["command"] = r.command;
    doc["success"] = r.success;
    doc["metrics"] = r.metrics;
    doc["iterations"] = r.iterations;
    doc["metadata"] = r.metadata;
    doc["wall_time"] = r.wall_time;
    doc["checks"] = json::array();
    for (const auto& c : r.checks) {
        doc["checks"].push_back(
            {{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"tolerance", c.tolerance}, {"detail", c.detail}});
    }
    doc["sweep"] = json::array();
    for (const auto& row : r.sweep) {
        doc["sweep"].push_back({{"alpha", row.alpha},
                                {"terminal_distance", row.terminal_distance},
                                {"J1", row.J1},
                                {"J2", row.J2},
                                {"iterations", row.iterations},
                                {"converged", row.converged},
                                {"within_ball", row.within_ball},
                                {"error", row.error}});
    }
    return doc;
}

RunReport report_from_json(const json& doc) {
    RunReport r;
    try {
        r.command = doc.at("command").get<std::string>();
        r.success = doc.at("success").get<bool>();
        r.metrics = doc.at("metrics").get<std::map<std::string, double>>();
        r.iterations = doc.at("iterations").get<std::map<std::string, long>>();
        r.metadata = doc.at("metadata");
        r.wall_time = doc.at("wall_time").get<double>();
        for (const auto& c : doc.at("checks")) {
            r.checks.push_back({c.at("name").get<std::string>(), c.at("pass").get<bool>(), c.at("value").get<double>(),
                                c.at("tolerance").get<double>(), c.at("detail").get<std::string>()});
        }
        for (const auto& s : doc.at("sweep")) {
            SweepRow row;
            row.alpha = s.at("alpha").get<double>();
            row.terminal_distance = s.at("terminal_distance").get<double>();
            row.J1 = s.at("J1").get<double>();
            row.J2 = s.at("J2").get<double>();
            row.iterations = s.at("iterations").get<int>();
            row.converged = s.at("converged").get<bool>();
            row.within_ball = s.at("within_ball").get<bool>();
            row.error = s.at("error").get<std::string>();
            r.sweep.push_back(row);
        }
    } catch (const json::exception& e) {
        throw ConfigError("report", e.what());
    }
    return r;
}

std::string format_checks(const std::vector<CheckResult>& checks) {
    std::string out;
    char line[256];
    for (const auto& c : checks) {
        std::snprintf(line, sizeof line, "%-4s %-30s %12.4e <= %-10.3e %s\n", c.pass ? "PASS" : "FAIL",
                      c.name.c_str(), c.value, c.tolerance, c.detail.c_str());
        out += line;
    }
    return out;
}

}  // namespace hctl
