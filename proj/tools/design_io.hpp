#pragma once

#include "json.hpp"
#include <string>

#include "survey/design.hpp"

namespace survey::cli {

/// Parses a key-per-variant design document, e.g. {"srs": {"n": 2}}, and
/// validates nesting. Throws DataError naming the JSON path.
Design design_from_json(const nlohmann::json& doc);
nlohmann::json design_to_json(const Design& design);

/// Reads a design from a file path or an inline JSON string.
Design load_design(const std::string& path_or_json);

}  // namespace survey::cli
