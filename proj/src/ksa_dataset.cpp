#include "gridfreq/ksa_dataset.hpp"

namespace gridfreq {

namespace {

struct Mix {
    const char* name;
    double steam, gas, ccgt, renewable, total;
};

GridConfig make(const Mix (&mix)[4]) {
    GridConfig g;
    for (const auto& m : mix) {
        RegionSpec r;
        r.name = m.name;
        auto add = [&](UnitKind k, double gw) {
            if (gw <= 0) return;
            GeneratorUnit u;
            u.kind = k;
            u.rated_gw = gw;
            r.units.push_back(u);
        };
        add(UnitKind::Steam, m.steam);
        add(UnitKind::Gas, m.gas);
        add(UnitKind::Ccgt, m.ccgt);
        r.renewable_gw = m.renewable;
        r.total_gw = m.total;
        g.regions.push_back(r);
    }
    g.lines = {{"central", "eastern", 7.5},
               {"central", "southern", 0.85},
               {"central", "western", 3.0},
               {"southern", "western", 3.0}};
    return g;
}

}  // namespace

GridConfig ksa_grid_2030() {
    static const Mix mix[4] = {{"central", 0.0, 3.8, 1.3, 26.0, 31.1},
                               {"eastern", 15.3, 4.2, 3.0, 8.0, 30.5},
                               {"southern", 0.0, 2.7, 0.0, 8.0, 10.7},
                               {"western", 9.9, 2.8, 2.0, 33.0, 47.7}};
    return make(mix);
}

GridConfig ksa_grid_pre_res() {
    static const Mix mix[4] = {{"central", 0.0, 12.7, 4.4, 0.0, 17.1},
                               {"eastern", 22.3, 6.2, 4.5, 1.3, 34.3},
                               {"southern", 0.0, 6.7, 0.0, 0.0, 6.7},
                               {"western", 22.3, 6.3, 4.4, 0.0, 33.0}};
    return make(mix);
}

}  // namespace gridfreq
