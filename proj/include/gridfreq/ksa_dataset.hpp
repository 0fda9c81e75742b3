#pragma once

#include "gridfreq/config.hpp"

namespace gridfreq {

// Kingdom of Saudi Arabia case study. Regions in the order Central, Eastern, Southern,
// Western; lines C-E, C-S, C-W, S-W.
GridConfig ksa_grid_2030();
GridConfig ksa_grid_pre_res();

}  // namespace gridfreq
