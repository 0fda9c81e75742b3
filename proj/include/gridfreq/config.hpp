#pragma once

#include "gridfreq/sfr_model.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gridfreq {

struct LineSpec {
    std::string a, b;
    double capacity_gw = 0.0;
};

struct GridConfig {
    std::vector<RegionSpec> regions;
    std::vector<LineSpec> lines;
    double f0 = 60.0;
    double k_sync = 1.0;  // GW/rad of synchronizing power per GW of line capacity

    std::vector<TieLine> tie_lines() const;
    GridModel build(bool with_lines = true) const;
    void validate() const;
};

GridConfig grid_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const GridConfig& g);

// Reads a JSON document, reporting parse errors with line and column.
nlohmann::json read_json_file(const std::string& path);

// Error raised for malformed or inconsistent configuration documents.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gridfreq
