#pragma once

#include "layernr/render.hpp"

#include <string>

namespace lnr {

struct Dataset {
    std::string scene_id;
    int held_out_view = -1;
    std::uint64_t seed = 0;  // generator seed, recorded for provenance
    std::vector<SceneFrame> frames;
};

// Writes manifest.json plus one PNG per view under images/.
void save_dataset(const std::string& dir, const Dataset& ds);

// Loads and validates a dataset directory; throws on malformed input.
Dataset load_dataset(const std::string& dir);

}  // namespace lnr
