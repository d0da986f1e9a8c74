#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "debias/curation.hpp"

namespace debias {

struct Config {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "debias-data";
    std::optional<std::string> token;
    std::optional<std::filesystem::path> static_dir;
    std::optional<std::string> external_command;
    std::string default_session = "default";
    // Constant timestamps, for byte-stable output in pipelines and tests.
    bool fixed_clock = false;
    SessionSettings session;
};

using EnvLookup = std::function<std::optional<std::string>(const char*)>;
std::optional<std::string> process_env(const char* name);

/// Reads the JSON config file (when given) and then applies DEBIAS_*
/// environment overrides.
Config load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env = process_env);
Config config_from_json(const nlohmann::json& json);
nlohmann::json to_json(const Config& config);
void apply_env(Config& config, const EnvLookup& env);
Clock clock_for(const Config& config);
/// data_dir/sessions/<id>
std::filesystem::path session_path(const Config& config, const std::string& id);

}  // namespace debias
