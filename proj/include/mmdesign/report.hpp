#pragma once

#include "mmdesign/table.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

// ---------------------------------------------------------------------------
// Human-readable and CSV views of a handler response. Everything here is
// derived from the JSON response alone, so the printed numbers can always be
// regenerated from the machine-readable output.
// ---------------------------------------------------------------------------

namespace mmdesign {

using NamedTable = std::pair<std::string, Table>;

// Named tables of a response; the first is the primary one.
std::vector<NamedTable> response_tables(const nlohmann::json& response);

std::string render_text(const nlohmann::json& response);

}  // namespace mmdesign
