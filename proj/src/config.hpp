#pragma once

#include "phantom.hpp"
#include "pipeline.hpp"
#include "registration.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace mplreg {

struct RunConfig {
    RegistrationConfig registration;
    PreprocessSettings preprocess;
};

/// Keys missing from the JSON keep their defaults; unknown keys and wrong
/// types are Config errors.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& c);

PhantomParams parse_phantom_params(const nlohmann::json& j);
nlohmann::ordered_json to_json(const PhantomParams& p);

const char* to_string(GplMode mode);

} // namespace mplreg
