#pragma once

#include <json.hpp>

#include "geoshift/boxes.hpp"
#include "geoshift/geometry.hpp"
#include "geoshift/synth.hpp"

namespace geoshift {

// HomographyParams serialize as a flat [sx, sy, lx, ly] record.
void to_json(nlohmann::json& j, const HomographyParams& p);
void from_json(const nlohmann::json& j, HomographyParams& p);

void to_json(nlohmann::json& j, const Box& b);
void to_json(nlohmann::json& j, const Detection& d);

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);
void to_json(nlohmann::json& j, const ShiftSpec& s);
void from_json(const nlohmann::json& j, ShiftSpec& s);
void to_json(nlohmann::json& j, const SplitCounts& c);
void from_json(const nlohmann::json& j, SplitCounts& c);

}  // namespace geoshift
