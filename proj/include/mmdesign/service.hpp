#pragma once

#include "mmdesign/table.hpp"

#include <json.hpp>

#include <cstddef>
#include <exception>
#include <string>

// ---------------------------------------------------------------------------
// Request handlers shared by the CLI and the HTTP service. Each takes a JSON
// request, validates it completely (unknown keys are errors) and returns a
// self-describing response:
//
//   { "schema_version": "1", "kind": ..., "inputs": <normalized request>,
//     "units": {...}, "result": {...}, "warnings": [...] }
//
// Identical requests give byte-identical responses.
// ---------------------------------------------------------------------------

namespace mmdesign::service {

using json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";
inline constexpr const char* kVersion = "1.0.0";

struct Limits {
    std::size_t max_grid_points = 10'000;
    unsigned threads = 1;
};

// Sweep grid over Limits::max_grid_points.
class GridTooLarge : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

json handle_design(const json& request, const Limits& limits = {});
json handle_budget(const json& request, const Limits& limits = {});
json handle_power(const json& request, const Limits& limits = {});
json handle_estimate(const json& request, const Limits& limits = {});
json handle_sensitivity(const json& request, const Limits& limits = {});
json handle_sweep(const json& request, const Limits& limits = {});
json handle_simulate(const json& request, const Limits& limits = {});

json health();

json table_to_json(const Table& table);
Table table_from_json(const json& j);

struct ErrorInfo {
    int http_status = 500;
    int exit_code = 1;
    json body;
};

// Maps library exceptions to HTTP status / CLI exit code and an error body:
// ValidationError -> 400 / 2, GridTooLarge -> 413 / 2, ConstraintError -> 422
// with "minimal_budget", other domain failures -> 422 / 1.
ErrorInfo classify(std::exception_ptr error);

}  // namespace mmdesign::service
