#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fabsched/scenario.hpp"

namespace fabsched::test {

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(FABSCHED_DATA_DIR) / name;
}

inline const Scenario& minifab() {
    static const Scenario s = load_scenario(data_path("minifab.json"));
    return s;
}

/// One family, one group, one product with the given route and no releases.
inline Scenario tiny_fab(ToolGroup g, std::vector<RouteStep> route) {
    Scenario s;
    s.name = "tiny";
    s.families = {ToolFamily{0, "only"}};
    g.group_id = 0;
    g.family_id = 0;
    s.tool_groups = {g};
    Product p;
    p.product_id = 0;
    p.name = "P";
    p.route = std::move(route);
    p.release_rate = 0.0;
    p.flow_factor = 2.0;
    s.products = {p};
    s.transport_delay = {{0}};
    return s;
}

/// Fresh scratch directory under the build tree, emptied on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("fabsched-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fabsched::test
