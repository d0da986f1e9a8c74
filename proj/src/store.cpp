#include "debias/store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "debias/error.hpp"

namespace debias {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void io_failure(const std::string& what, const fs::path& path) {
    throw Error(ErrorCode::kIoError, what + ": " + std::strerror(errno), {{"path", path.string()}});
}

void write_all(int fd, std::string_view bytes, const fs::path& path) {
    while (!bytes.empty()) {
        const ssize_t n = ::write(fd, bytes.data(), bytes.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            io_failure("write failed", path);
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

void fsync_dir(const fs::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

std::string model_name(const std::string& digest) { return digest + ".model"; }
std::string dataset_name(const std::string& digest) { return digest + ".dataset.json"; }
std::string batch_name(const std::string& digest) { return digest + ".batch.json"; }

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) io_failure("cannot create file", tmp);
    try {
        write_all(fd, bytes, tmp);
    } catch (...) {
        ::close(fd);
        throw;
    }
    if (::fsync(fd) != 0) {
        ::close(fd);
        io_failure("fsync failed", tmp);
    }
    ::close(fd);
    if (::rename(tmp.c_str(), path.c_str()) != 0) io_failure("rename failed", path);
    fsync_dir(path.parent_path());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open file", {{"path", path.string()}});
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

// ---------------------------------------------------------------------------

EventLog::EventLog(fs::path file) : file_(std::move(file)) {
    fd_ = ::open(file_.c_str(), O_RDWR | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) io_failure("cannot open event log", file_);
    const std::string text = read_file(file_);
    std::size_t good = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) break;  // torn tail
        const std::string_view line(text.data() + pos, nl - pos);
        json event;
        try {
            event = json::parse(line);
        } catch (const json::parse_error&) {
            break;
        }
        if (!event.is_object() || !event.contains("type")) break;
        events_.push_back(std::move(event));
        pos = nl + 1;
        good = pos;
    }
    if (good < text.size()) {
        if (::ftruncate(fd_, static_cast<off_t>(good)) != 0) io_failure("cannot truncate torn event log", file_);
        ::fsync(fd_);
    }
}

EventLog::~EventLog() {
    if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(const json& event, const std::function<void()>& midway) {
    const std::string line = event.dump() + "\n";
    if (midway) {
        const std::size_t half = line.size() / 2;
        write_all(fd_, std::string_view(line).substr(0, half), file_);
        ::fsync(fd_);
        midway();
        write_all(fd_, std::string_view(line).substr(half), file_);
    } else {
        write_all(fd_, line, file_);
    }
    if (::fsync(fd_) != 0) io_failure("fsync failed", file_);
    events_.push_back(event);
}

ObjectStore::ObjectStore(fs::path dir) : dir_(std::move(dir)) {}

void ObjectStore::put(const std::string& name, std::string_view bytes) const {
    if (has(name)) return;  // content addressed: same name, same bytes
    fs::create_directories(dir_);
    write_file_atomic(dir_ / name, bytes);
}

std::string ObjectStore::get(const std::string& name) const {
    if (!has(name)) throw Error(ErrorCode::kCorruptFile, "missing snapshot object", {{"name", name}});
    return read_file(dir_ / name);
}

bool ObjectStore::has(const std::string& name) const { return fs::exists(dir_ / name); }

// ---------------------------------------------------------------------------

json batch_to_store_json(const GeneratedBatch& batch) {
    return {{"rows", dataset_to_json(batch.rows)},
            {"parents", batch.parents},
            {"constraint_of", batch.constraint_of},
            {"constraints", to_json(batch.constraints)},
            {"generator_id", batch.generator_id},
            {"seed", batch.seed},
            {"base_snapshot", batch.base_snapshot}};
}

GeneratedBatch batch_from_store_json(const json& doc) {
    GeneratedBatch batch;
    batch.rows = dataset_from_json(doc.at("rows"));
    batch.parents = doc.at("parents").get<std::vector<std::array<RowId, 2>>>();
    batch.constraint_of = doc.at("constraint_of").get<std::vector<std::size_t>>();
    batch.constraints = constraints_from_json(doc.at("constraints"));
    batch.generator_id = doc.at("generator_id").get<std::string>();
    batch.seed = doc.at("seed").get<std::uint64_t>();
    batch.base_snapshot = doc.at("base_snapshot").get<std::uint64_t>();
    if (batch.parents.size() != batch.rows.size() || batch.constraint_of.size() != batch.rows.size()) {
        throw Error(ErrorCode::kCorruptFile, "stored batch metadata length mismatch");
    }
    return batch;
}

bool valid_session_id(std::string_view id) {
    if (id.empty() || id.size() > 64) return false;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
        if (!ok) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

PersistentSession::PersistentSession(fs::path dir, Clock clock)
    : dir_(std::move(dir)), clock_(std::move(clock)), objects_(dir_ / "objects") {}

bool PersistentSession::exists(const fs::path& dir) {
    std::error_code ec;
    return fs::exists(dir / "events.jsonl", ec) && fs::file_size(dir / "events.jsonl", ec) > 0;
}

std::unique_ptr<PersistentSession> PersistentSession::create(const fs::path& dir, std::string id,
                                                             const TabularDataset& ingested, SessionSettings settings,
                                                             Clock clock) {
    if (!valid_session_id(id)) throw Error(ErrorCode::kInvalidArgument, "session id must match [A-Za-z0-9_-]{1,64}");
    if (exists(dir)) throw Error(ErrorCode::kInvalidArgument, "session already exists", {{"id", id}});
    fs::create_directories(dir);
    std::unique_ptr<PersistentSession> ps(new PersistentSession(dir, clock));
    ps->id_ = std::move(id);
    ps->log_ = std::make_unique<EventLog>(dir / "events.jsonl");
    fsync_dir(dir);

    Session fresh = Session::create(ingested, settings, clock);
    const auto& baseline = fresh.history().front();
    ps->write_dataset(fresh.dataset(), baseline.dataset_digest);
    ps->write_model(fresh.model(), baseline.model_digest);
    json event = {{"type", "create"},
                  {"id", ps->id_},
                  {"settings", to_json(fresh.settings())},
                  {"entry", to_json(baseline)}};
    ps->commit(std::move(event), std::nullopt);
    return ps;
}

std::unique_ptr<PersistentSession> PersistentSession::open(const fs::path& dir, Clock clock) {
    if (!exists(dir)) throw Error(ErrorCode::kIoError, "no session at this path", {{"path", dir.string()}});
    std::unique_ptr<PersistentSession> ps(new PersistentSession(dir, clock));
    ps->log_ = std::make_unique<EventLog>(dir / "events.jsonl");
    ps->replay();
    return ps;
}

void PersistentSession::replay() {
    if (log_->events().empty() || log_->events().front().at("type") != "create") {
        throw Error(ErrorCode::kCorruptFile, "event log must start with a create event");
    }
    for (const auto& event : log_->events()) {
        json response = apply_event(event);
        if (event.contains("request_id") && event["request_id"].is_string()) {
            responses_[event["request_id"].get<std::string>()] = std::move(response);
        }
    }
}

void PersistentSession::write_dataset(const TabularDataset& dataset, const std::string& digest) const {
    objects_.put(dataset_name(digest), dataset_to_json(dataset).dump());
}

void PersistentSession::write_model(const ModelArtifact& model, const std::string& digest) const {
    objects_.put(model_name(digest), model_bytes(model));
}

void PersistentSession::hook(std::string_view point) const {
    if (crash_hook_) crash_hook_(point);
}

std::optional<json> PersistentSession::recorded_response(const std::string& request_id) const {
    auto it = responses_.find(request_id);
    if (it == responses_.end()) return std::nullopt;
    return std::optional<json>(std::in_place, it->second);
}

json PersistentSession::apply_event(const json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "create") {
        id_ = event.at("id").get<std::string>();
        const SessionSettings settings = settings_from_json(event.at("settings"));
        const HistoryEntry baseline = history_entry_from_json(event.at("entry"));
        auto dataset = std::make_shared<const TabularDataset>(
            dataset_from_json(json::parse(objects_.get(dataset_name(baseline.dataset_digest)))));
        auto model = std::make_shared<const ModelArtifact>(
            model_from_bytes(objects_.get(model_name(baseline.model_digest)), dataset->schema()));
        session_ = std::make_unique<Session>(settings, dataset, model, baseline, clock_);
        return to_json(session_->history().front());
    }
    if (!session_) throw Error(ErrorCode::kCorruptFile, "event before create");
    if (type == "batch") {
        GeneratedBatch batch =
            batch_from_store_json(json::parse(objects_.get(batch_name(event.at("batch").get<std::string>()))));
        batch.warnings = session_->plan(batch.constraints);
        session_->set_pending(std::move(batch));
        return to_json(session_->pending()->current);
    }
    if (type == "edit") {
        const EditLogEntry entry = edit_entry_from_json(event.at("entry"), session_->dataset().schema());
        session_->apply_edit(entry);
        return to_json(session_->pending()->log.back());
    }
    if (type == "discard") {
        session_->discard_pending();
        return {{"discarded", true}};
    }
    if (type == "merge") {
        const HistoryEntry entry = history_entry_from_json(event.at("entry"));
        MergeOutcome outcome;
        outcome.entry = entry;
        outcome.dataset = std::make_shared<const TabularDataset>(
            dataset_from_json(json::parse(objects_.get(dataset_name(entry.dataset_digest)))));
        outcome.model = std::make_shared<const ModelArtifact>(
            model_from_bytes(objects_.get(model_name(entry.model_digest)), outcome.dataset->schema()));
        session_->apply_merge(outcome);
        return to_json(session_->history().back());
    }
    if (type == "revert") {
        session_->apply_revert(history_entry_from_json(event.at("entry")));
        return to_json(session_->history().back());
    }
    throw Error(ErrorCode::kCorruptFile, "unknown event type '" + type + "'");
}

json PersistentSession::commit(json event, const std::optional<std::string>& request_id) {
    event["seq"] = log_->events().size();
    event["timestamp"] = clock_();
    if (request_id) event["request_id"] = *request_id;
    const bool merge = event.at("type") == "merge";
    if (merge) hook("merge:before_event");
    log_->append(event, merge && crash_hook_ ? std::function<void()>([this] { hook("merge:partial_event"); })
                                             : std::function<void()>());
    if (merge) hook("merge:after_event");
    json response = apply_event(event);
    if (request_id) responses_[*request_id] = response;
    return response;
}

json PersistentSession::augment(const ConstraintSet& constraints, const GeneratorBackend& backend, std::uint64_t seed,
                                const std::optional<std::string>& request_id) {
    if (request_id) {
        if (auto r = recorded_response(*request_id)) return *r;
    }
    const GeneratedBatch batch = session_->prepare_batch(constraints, backend, seed);
    const std::string bytes = batch_to_store_json(batch).dump();
    const std::string digest = hex_digest(fnv1a(bytes));
    objects_.put(batch_name(digest), bytes);
    return commit({{"type", "batch"}, {"batch", digest}}, request_id);
}

json PersistentSession::edit(RowId row_id, const std::string& variable, const Cell& value,
                             const std::optional<std::string>& request_id) {
    if (request_id) {
        if (auto r = recorded_response(*request_id)) return *r;
    }
    const EditLogEntry entry = session_->prepare_edit(row_id, variable, value);
    return commit({{"type", "edit"}, {"entry", to_json(entry)}}, request_id);
}

json PersistentSession::remove(RowId row_id, const std::optional<std::string>& request_id) {
    if (request_id) {
        if (auto r = recorded_response(*request_id)) return *r;
    }
    const EditLogEntry entry = session_->prepare_remove(row_id);
    return commit({{"type", "edit"}, {"entry", to_json(entry)}}, request_id);
}

json PersistentSession::restore(RowId row_id, const std::optional<std::string>& request_id) {
    if (request_id) {
        if (auto r = recorded_response(*request_id)) return *r;
    }
    const EditLogEntry entry = session_->prepare_restore(row_id);
    return commit({{"type", "edit"}, {"entry", to_json(entry)}}, request_id);
}

json PersistentSession::discard(const std::optional<std::string>& request_id) {
    if (request_id) {
        if (auto r = recorded_response(*request_id)) return *r;
    }
    if (!session_->pending()) throw Error(ErrorCode::kNoPendingBatch, "no generated batch is pending");
    return commit({{"type", "discard"}}, request_id);
}

json PersistentSession::merge(bool acknowledged, const std::optional<std::string>& request_id) {
    if (request_id) {
        if (auto r = recorded_response(*request_id)) return *r;
    }
    MergeOutcome outcome = session_->prepare_merge(acknowledged);
    if (request_id) outcome.entry.request_id = *request_id;
    hook("merge:prepared");
    write_dataset(*outcome.dataset, outcome.entry.dataset_digest);
    hook("merge:dataset_written");
    write_model(*outcome.model, outcome.entry.model_digest);
    hook("merge:model_written");
    return commit({{"type", "merge"}, {"entry", to_json(outcome.entry)}}, request_id);
}

json PersistentSession::revert(std::size_t index, const std::optional<std::string>& request_id) {
    if (request_id) {
        if (auto r = recorded_response(*request_id)) return *r;
    }
    HistoryEntry entry = session_->prepare_revert(index);
    if (request_id) entry.request_id = *request_id;
    return commit({{"type", "revert"}, {"entry", to_json(entry)}}, request_id);
}

}  // namespace debias
