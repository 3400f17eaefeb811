#pragma once

#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <string>

// ---------------------------------------------------------------------------
// INI run configuration for the command-line tool. Sections: [cost],
// [group1], [group2], [power], [optimizer], [estimate], [simulate],
// [sensitivity], [sweep]. Lists are comma-separated or "start:stop:step".
// Unknown sections and keys are rejected.
// ---------------------------------------------------------------------------

namespace mmdesign::config {

using Ini = boost::property_tree::ptree;

Ini read_ini(const std::string& path);
Ini parse_ini(const std::string& text);

// "section.key=value"; flag values win over file values.
void apply_override(Ini& ini, const std::string& assignment);
void set_value(Ini& ini, const std::string& section, const std::string& key,
               const std::string& value);

void check_known(const Ini& ini);

// The JSON request for `command` (design, budget, power, estimate, simulate,
// sensitivity, sweep). The estimate request reads the pilot CSV named by
// [estimate] input.
nlohmann::json build_request(const std::string& command, const Ini& ini);

}  // namespace mmdesign::config
