#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "debias/curation.hpp"

namespace debias {

/// Append-only JSON-lines file. Every append is fsynced; a torn final line
/// left by a crash is dropped (and truncated away) on open.
class EventLog {
public:
    explicit EventLog(std::filesystem::path file);
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    const std::vector<nlohmann::json>& events() const noexcept { return events_; }
    /// `midway` runs after half the line is durable, for crash tests.
    void append(const nlohmann::json& event, const std::function<void()>& midway = {});

private:
    std::filesystem::path file_;
    int fd_ = -1;
    std::vector<nlohmann::json> events_;
};

/// Immutable files named by content digest, written via temp file + rename.
class ObjectStore {
public:
    explicit ObjectStore(std::filesystem::path dir);

    void put(const std::string& name, std::string_view bytes) const;
    std::string get(const std::string& name) const;
    bool has(const std::string& name) const;
    std::filesystem::path path_of(const std::string& name) const { return dir_ / name; }

private:
    std::filesystem::path dir_;
};

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

nlohmann::json batch_to_store_json(const GeneratedBatch& batch);
/// Rows and provenance only; the session rescores and re-plans on install.
GeneratedBatch batch_from_store_json(const nlohmann::json& json);

bool valid_session_id(std::string_view id);

/// A Session whose every mutation is made durable before it is applied:
/// snapshots first, then one fsynced event line, then the in-memory apply.
/// Reopening replays the log. Mutations with a request id already seen
/// return the recorded response without changing state.
class PersistentSession {
public:
    using CrashHook = std::function<void(std::string_view point)>;

    static std::unique_ptr<PersistentSession> create(const std::filesystem::path& dir, std::string id,
                                                     const TabularDataset& ingested, SessionSettings settings,
                                                     Clock clock = utc_timestamp);
    static std::unique_ptr<PersistentSession> open(const std::filesystem::path& dir, Clock clock = utc_timestamp);
    static bool exists(const std::filesystem::path& dir);

    const Session& session() const noexcept { return *session_; }
    const std::string& id() const noexcept { return id_; }
    std::size_t event_count() const noexcept { return log_->events().size(); }
    const std::filesystem::path& directory() const noexcept { return dir_; }
    const ObjectStore& objects() const noexcept { return objects_; }
    std::optional<nlohmann::json> recorded_response(const std::string& request_id) const;

    nlohmann::json augment(const ConstraintSet& constraints, const GeneratorBackend& backend, std::uint64_t seed,
                           const std::optional<std::string>& request_id = {});
    nlohmann::json edit(RowId row_id, const std::string& variable, const Cell& value,
                        const std::optional<std::string>& request_id = {});
    nlohmann::json remove(RowId row_id, const std::optional<std::string>& request_id = {});
    nlohmann::json restore(RowId row_id, const std::optional<std::string>& request_id = {});
    nlohmann::json discard(const std::optional<std::string>& request_id = {});
    nlohmann::json merge(bool acknowledged, const std::optional<std::string>& request_id = {});
    nlohmann::json revert(std::size_t index, const std::optional<std::string>& request_id = {});

    /// Test hook called at named points inside mutations.
    void set_crash_hook(CrashHook hook) { crash_hook_ = std::move(hook); }

private:
    PersistentSession(std::filesystem::path dir, Clock clock);
    void replay();
    nlohmann::json apply_event(const nlohmann::json& event);
    nlohmann::json commit(nlohmann::json event, const std::optional<std::string>& request_id);
    void write_dataset(const TabularDataset& dataset, const std::string& digest) const;
    void write_model(const ModelArtifact& model, const std::string& digest) const;
    void hook(std::string_view point) const;

    std::filesystem::path dir_;
    std::string id_;
    Clock clock_;
    ObjectStore objects_;
    std::unique_ptr<EventLog> log_;
    std::unique_ptr<Session> session_;
    std::map<std::string, nlohmann::json> responses_;
    CrashHook crash_hook_;
};

}  // namespace debias
