#include "gridfreq/config.hpp"

#include <fstream>
#include <sstream>

namespace gridfreq {

using nlohmann::json;

std::vector<TieLine> GridConfig::tie_lines() const {
    std::vector<TieLine> out;
    for (const auto& l : lines) out.push_back({l.a, l.b, l.capacity_gw, l.capacity_gw * k_sync});
    return out;
}

void GridConfig::validate() const {
    if (regions.empty()) throw ConfigError("grid: regions list is empty");
    if (f0 <= 0) throw ConfigError("grid: constants.f0 must be positive");
    if (k_sync <= 0) throw ConfigError("grid: constants.k_sync must be positive");
    for (const auto& r : regions) {
        try {
            r.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("grid: ") + e.what());
        }
    }
    for (const auto& l : lines)
        if (l.capacity_gw <= 0) throw ConfigError("grid: line " + l.a + "-" + l.b + " needs positive capacity_gw");
}

GridModel GridConfig::build(bool with_lines) const {
    validate();
    try {
        return assemble_grid(regions, with_lines ? tie_lines() : std::vector<TieLine>{});
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
}

namespace {

template <class T>
T get_or(const json& j, const char* key, T def) {
    auto it = j.find(key);
    if (it == j.end()) return def;
    return it->get<T>();
}

template <class T>
T need(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(where + ": missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

SteamTgParams steam_from(const json& j, SteamTgParams p) {
    p.R = get_or(j, "R", p.R);
    p.T_G = get_or(j, "T_G", p.T_G);
    p.T_CH = get_or(j, "T_CH", p.T_CH);
    p.T_RH = get_or(j, "T_RH", p.T_RH);
    p.F_HP = get_or(j, "F_HP", p.F_HP);
    return p;
}

GasTgParams gas_from(const json& j, GasTgParams p) {
    p.R = get_or(j, "R", p.R);
    p.T_gov = get_or(j, "T_gov", p.T_gov);
    p.T_V = get_or(j, "T_V", p.T_V);
    p.T_F = get_or(j, "T_F", p.T_F);
    p.T_CD = get_or(j, "T_CD", p.T_CD);
    return p;
}

}  // namespace

GridConfig grid_from_json(const json& j) {
    GridConfig g;
    if (!j.is_object()) throw ConfigError("grid: expected an object");
    SteamTgParams steam_def;
    GasTgParams gas_def;
    if (auto it = j.find("tg_defaults"); it != j.end()) {
        if (it->contains("steam")) steam_def = steam_from((*it)["steam"], steam_def);
        if (it->contains("gas")) gas_def = gas_from((*it)["gas"], gas_def);
    }
    if (!j.contains("regions") || !j["regions"].is_array())
        throw ConfigError("grid: missing 'regions' array");
    int ri = 0;
    for (const auto& rj : j["regions"]) {
        std::string where = "regions[" + std::to_string(ri++) + "]";
        RegionSpec r;
        r.name = need<std::string>(rj, "name", where);
        r.renewable_gw = need<double>(rj, "renewable_gw", where);
        r.total_gw = need<double>(rj, "total_gw", where);
        int ui = 0;
        for (const auto& uj : rj.value("units", json::array())) {
            std::string uw = where + ".units[" + std::to_string(ui++) + "]";
            GeneratorUnit u;
            try {
                u.kind = unit_kind_from_string(need<std::string>(uj, "kind", uw));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(uw + ": " + e.what());
            }
            u.rated_gw = need<double>(uj, "rated_gw", uw);
            u.inertia_h = get_or(uj, "h", 5.0);
            u.damping_d = get_or(uj, "d", 1.0);
            u.steam = steam_from(uj.value("tg", json::object()), steam_def);
            u.gas = gas_from(uj.value("tg", json::object()), gas_def);
            r.units.push_back(u);
        }
        g.regions.push_back(r);
    }
    int li = 0;
    for (const auto& lj : j.value("lines", json::array())) {
        std::string where = "lines[" + std::to_string(li++) + "]";
        g.lines.push_back({need<std::string>(lj, "a", where), need<std::string>(lj, "b", where),
                           need<double>(lj, "capacity_gw", where)});
    }
    if (auto it = j.find("constants"); it != j.end()) {
        g.f0 = get_or(*it, "f0", g.f0);
        g.k_sync = get_or(*it, "k_sync", g.k_sync);
    }
    g.validate();
    return g;
}

json grid_to_json(const GridConfig& g) {
    json j;
    j["regions"] = json::array();
    for (const auto& r : g.regions) {
        json rj;
        rj["name"] = r.name;
        rj["renewable_gw"] = r.renewable_gw;
        rj["total_gw"] = r.total_gw;
        rj["units"] = json::array();
        for (const auto& u : r.units) {
            json uj;
            uj["kind"] = to_string(u.kind);
            uj["rated_gw"] = u.rated_gw;
            uj["h"] = u.inertia_h;
            uj["d"] = u.damping_d;
            if (u.kind == UnitKind::Steam)
                uj["tg"] = {{"R", u.steam.R}, {"T_G", u.steam.T_G}, {"T_CH", u.steam.T_CH},
                            {"T_RH", u.steam.T_RH}, {"F_HP", u.steam.F_HP}};
            else
                uj["tg"] = {{"R", u.gas.R}, {"T_gov", u.gas.T_gov}, {"T_V", u.gas.T_V},
                            {"T_F", u.gas.T_F}, {"T_CD", u.gas.T_CD}};
            rj["units"].push_back(uj);
        }
        j["regions"].push_back(rj);
    }
    j["lines"] = json::array();
    for (const auto& l : g.lines) j["lines"].push_back({{"a", l.a}, {"b", l.b}, {"capacity_gw", l.capacity_gw}});
    j["constants"] = {{"f0", g.f0}, {"k_sync", g.k_sync}};
    return j;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // translate byte offset to line/column
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
}

}  // namespace gridfreq
