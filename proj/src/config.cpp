#include "debias/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include "debias/error.hpp"

namespace debias {

using nlohmann::json;

namespace {

template <typename T>
T parse_env(const char* name, const std::string& text) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::kInvalidArgument, std::string("bad value for ") + name, {{"value", text}});
    }
    return value;
}

}  // namespace

std::optional<std::string> process_env(const char* name) {
    const char* value = std::getenv(name);
    if (value == nullptr) return std::nullopt;
    return std::string(value);
}

Config config_from_json(const json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be a JSON object");
    Config c;
    c.host = doc.value("host", c.host);
    c.port = doc.value("port", c.port);
    c.data_dir = doc.value("data_dir", c.data_dir.string());
    if (doc.contains("token") && !doc["token"].is_null()) c.token = doc["token"].get<std::string>();
    if (doc.contains("static_dir") && !doc["static_dir"].is_null()) c.static_dir = doc["static_dir"].get<std::string>();
    if (doc.contains("external_command") && !doc["external_command"].is_null()) {
        c.external_command = doc["external_command"].get<std::string>();
    }
    c.default_session = doc.value("default_session", c.default_session);
    c.fixed_clock = doc.value("fixed_clock", c.fixed_clock);
    if (doc.contains("session")) c.session = settings_from_json(doc["session"]);
    if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range");
    return c;
}

json to_json(const Config& c) {
    return {{"host", c.host},
            {"port", c.port},
            {"data_dir", c.data_dir.string()},
            {"token", c.token ? json("***") : json(nullptr)},
            {"static_dir", c.static_dir ? json(c.static_dir->string()) : json(nullptr)},
            {"external_command", c.external_command ? json(*c.external_command) : json(nullptr)},
            {"default_session", c.default_session},
            {"fixed_clock", c.fixed_clock},
            {"session", to_json(c.session)}};
}

void apply_env(Config& c, const EnvLookup& env) {
    if (auto v = env("DEBIAS_HOST")) c.host = *v;
    if (auto v = env("DEBIAS_PORT")) c.port = parse_env<int>("DEBIAS_PORT", *v);
    if (auto v = env("DEBIAS_DATA_DIR")) c.data_dir = *v;
    if (auto v = env("DEBIAS_TOKEN")) c.token = *v;
    if (auto v = env("DEBIAS_STATIC_DIR")) c.static_dir = *v;
    if (auto v = env("DEBIAS_EXTERNAL_COMMAND")) c.external_command = *v;
    if (auto v = env("DEBIAS_SESSION")) c.default_session = *v;
    if (auto v = env("DEBIAS_FIXED_CLOCK")) c.fixed_clock = *v == "1" || *v == "true";
    if (auto v = env("DEBIAS_CAP")) c.session.augment.cap = parse_env<std::size_t>("DEBIAS_CAP", *v);
    if (auto v = env("DEBIAS_WARNING_THRESHOLD")) {
        c.session.augment.warning_threshold = parse_env<double>("DEBIAS_WARNING_THRESHOLD", *v);
    }
    if (auto v = env("DEBIAS_DRIFT_THRESHOLD")) c.session.drift_threshold = parse_env<double>("DEBIAS_DRIFT_THRESHOLD", *v);
    if (auto v = env("DEBIAS_COVERAGE_THRESHOLD")) {
        c.session.threshold.absolute = parse_env<std::size_t>("DEBIAS_COVERAGE_THRESHOLD", *v);
    }
    if (auto v = env("DEBIAS_SPLIT_FRACTION")) c.session.heldout_fraction = parse_env<double>("DEBIAS_SPLIT_FRACTION", *v);
    if (auto v = env("DEBIAS_SPLIT_SEED")) c.session.split_seed = parse_env<std::uint64_t>("DEBIAS_SPLIT_SEED", *v);
    if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range");
}

Clock clock_for(const Config& config) {
    if (config.fixed_clock) return [] { return std::string("1970-01-01T00:00:00Z"); };
    return utc_timestamp;
}

std::filesystem::path session_path(const Config& config, const std::string& id) {
    return config.data_dir / "sessions" / id;
}

Config load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
    Config config;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw Error(ErrorCode::kIoError, "cannot open config file", {{"path", path->string()}});
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::kInvalidArgument, "config is not valid JSON", {{"path", path->string()}, {"reason", e.what()}});
        }
        config = config_from_json(doc);
    }
    apply_env(config, env);
    return config;
}

}  // namespace debias
