#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include "debias/config.hpp"
#include "debias/error.hpp"
#include "debias/store.hpp"

namespace httplib {
class Server;
class Request;
class Response;
}  // namespace httplib

namespace debias {

/// HTTP status for an engine error code.
int http_status(ErrorCode code);
nlohmann::json error_body(const Error& error);

std::unique_ptr<GeneratorBackend> make_backend(const std::string& name, const Config& config,
                                               std::size_t neighbours = 5);

/// JSON API over persistent sessions stored under `config.data_dir`.
/// Routes live under /api and /api/sessions/{id}; the first form targets
/// the configured default session. Mutations of one session are
/// serialised; reads share the session lock.
class Service {
public:
    explicit Service(Config config);
    ~Service();

    void mount(httplib::Server& server);
    const Config& config() const noexcept { return config_; }

    std::filesystem::path session_dir(const std::string& id) const;

private:
    struct Slot {
        std::shared_mutex mutex;
        std::unique_ptr<PersistentSession> session;
    };

    std::shared_ptr<Slot> slot(const std::string& id);
    std::shared_ptr<Slot> create_slot(const std::string& id, const TabularDataset& ingested, SessionSettings settings);

    Config config_;
    std::mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> slots_;
};

}  // namespace debias
