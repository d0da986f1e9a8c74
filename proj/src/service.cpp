#include "debias/service.hpp"

#include <httplib.h>

#include <charconv>
#include <fstream>

#include "debias/error.hpp"

namespace debias {

using nlohmann::json;
namespace fs = std::filesystem;

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::kSchemaMismatch:
        case ErrorCode::kCellParseError:
        case ErrorCode::kOutOfDomain:
        case ErrorCode::kConstraintOutOfDomain:
        case ErrorCode::kInvalidConstraint:
        case ErrorCode::kInvalidArgument:
            return 400;
        case ErrorCode::kUnauthorized:
            return 401;
        case ErrorCode::kUnknownRow:
        case ErrorCode::kUnknownHistoryIndex:
        case ErrorCode::kUnknownSession:
            return 404;
        case ErrorCode::kAlreadySplit:
        case ErrorCode::kModelStale:
        case ErrorCode::kStaleBatch:
        case ErrorCode::kNoPendingBatch:
        case ErrorCode::kDriftNotAcknowledged:
        case ErrorCode::kLeakageViolation:
            return 409;
        case ErrorCode::kCapExceeded:
            return 413;
        case ErrorCode::kEmptyDataset:
        case ErrorCode::kTooFewRows:
        case ErrorCode::kAllZeroCounts:
        case ErrorCode::kDegenerateTarget:
        case ErrorCode::kNoMatchingRows:
        case ErrorCode::kInfeasibleJointRegion:
            return 422;
        case ErrorCode::kBackendFailure:
            return 502;
        case ErrorCode::kCorruptFile:
        case ErrorCode::kIoError:
            return 500;
    }
    return 500;
}

json error_body(const Error& error) {
    return {{"code", to_string(error.code())}, {"message", error.what()}, {"detail", error.detail()}};
}

std::unique_ptr<GeneratorBackend> make_backend(const std::string& name, const Config& config, std::size_t neighbours) {
    if (name == "nn") return std::make_unique<InterpolationBackend>(neighbours);
    if (name == "external") {
        if (!config.external_command) {
            throw Error(ErrorCode::kInvalidArgument, "external backend needs external_command in the config");
        }
        return std::make_unique<ExternalCommandBackend>(*config.external_command);
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown backend '" + name + "'", {{"known", {"nn", "external"}}});
}

namespace {

constexpr const char* kPrefix = R"(/api(?:/sessions/([A-Za-z0-9_-]+))?)";

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::kInvalidArgument, "request body is not valid JSON", {{"reason", e.what()}});
    }
}

std::optional<std::string> request_id(const httplib::Request& req, const json& body) {
    for (const char* header : {"Idempotency-Key", "X-Request-Id"}) {
        if (req.has_header(header)) return req.get_header_value(header);
    }
    if (body.is_object() && body.contains("request_id") && body["request_id"].is_string()) {
        return body["request_id"].get<std::string>();
    }
    return std::nullopt;
}

template <typename T>
T parse_number(const std::string& text, const char* what) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::kInvalidArgument, std::string("bad ") + what, {{"value", text}});
    }
    return value;
}

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json row_json(const GeneratedBatch& batch, std::size_t r) {
    const auto& schema = batch.rows.schema();
    json cells = json::object();
    for (std::size_t c = 0; c < schema.size(); ++c) cells[schema[c].name] = cell_to_json(batch.rows.rows()[r][c]);
    json item = {{"row_id", batch.rows.row_ids()[r]},
                 {"provenance", to_string(batch.rows.provenance()[r])},
                 {"cells", cells},
                 {"parents", batch.parents.at(r)},
                 {"constraint", batch.constraint_of.at(r)}};
    if (r < batch.predictions.size()) item["prediction"] = to_json(batch.predictions[r]);
    return item;
}

json batch_summary(const PendingBatch& pending) {
    const auto& b = pending.current;
    json warnings = json::array();
    for (const auto& w : b.warnings) warnings.push_back(to_json(w));
    json log = json::array();
    for (const auto& e : pending.log) log.push_back(to_json(e));
    return {{"generator_id", b.generator_id},
            {"seed", b.seed},
            {"size", b.size()},
            {"pristine_size", pending.pristine.size()},
            {"constraints", to_json(b.constraints)},
            {"warnings", warnings},
            {"estimated_accuracy", b.estimated_accuracy},
            {"estimated_quality", b.estimated_quality ? to_json(*b.estimated_quality) : json(nullptr)},
            {"edit_log", log}};
}

Provenance provenance_from(const std::string& text) {
    if (text == "original") return Provenance::kOriginal;
    if (text == "generated") return Provenance::kGenerated;
    if (text == "edited") return Provenance::kEdited;
    throw Error(ErrorCode::kInvalidArgument, "unknown provenance '" + text + "'");
}

}  // namespace

Service::Service(Config config) : config_(std::move(config)) {}
Service::~Service() = default;

fs::path Service::session_dir(const std::string& id) const { return session_path(config_, id); }

std::shared_ptr<Service::Slot> Service::slot(const std::string& id) {
    std::lock_guard lock(registry_mutex_);
    if (auto it = slots_.find(id); it != slots_.end()) return it->second;
    if (!valid_session_id(id) || !PersistentSession::exists(session_dir(id))) {
        throw Error(ErrorCode::kUnknownSession, "no session with this id", {{"id", id}});
    }
    auto s = std::make_shared<Slot>();
    s->session = PersistentSession::open(session_dir(id), clock_for(config_));
    slots_[id] = s;
    return s;
}

std::shared_ptr<Service::Slot> Service::create_slot(const std::string& id, const TabularDataset& ingested,
                                                    SessionSettings settings) {
    std::lock_guard lock(registry_mutex_);
    if (slots_.count(id) > 0 || PersistentSession::exists(session_dir(id))) {
        throw Error(ErrorCode::kInvalidArgument, "session already exists", {{"id", id}});
    }
    auto s = std::make_shared<Slot>();
    s->session = PersistentSession::create(session_dir(id), id, ingested, std::move(settings), clock_for(config_));
    slots_[id] = s;
    return s;
}

void Service::mount(httplib::Server& server) {
    using Handler = std::function<json(const httplib::Request&, httplib::Response&)>;
    auto wrap = [](Handler fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                json body = fn(req, res);
                if (res.status == -1 || res.status == 0) res.status = 200;
                res.set_content(body.dump(), "application/json");
            } catch (const Error& e) {
                send(res, http_status(e.code()), error_body(e));
            } catch (const json::exception& e) {
                send(res, 400, {{"code", "InvalidArgument"}, {"message", e.what()}, {"detail", json::object()}});
            } catch (const std::exception& e) {
                send(res, 500, {{"code", "Internal"}, {"message", e.what()}, {"detail", json::object()}});
            }
        };
    };
    auto session_id = [this](const httplib::Request& req) {
        if (req.matches.size() > 1 && req.matches[1].matched && req.matches[1].length() > 0) {
            return req.matches[1].str();
        }
        return config_.default_session;
    };
    const std::string prefix = kPrefix;

    if (config_.token) {
        const std::string token = *config_.token;
        server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
            if (req.path.rfind("/api/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
            const bool ok = req.get_header_value("Authorization") == "Bearer " + token ||
                            req.get_header_value("X-Debias-Token") == token;
            if (ok) return httplib::Server::HandlerResponse::Unhandled;
            send(res, 401, error_body(Error(ErrorCode::kUnauthorized, "missing or wrong token")));
            return httplib::Server::HandlerResponse::Handled;
        });
    }
    if (config_.static_dir) server.set_mount_point("/", config_.static_dir->string());

    server.Get("/api/health", wrap([](const httplib::Request&, httplib::Response&) { return json{{"status", "ok"}}; }));

    server.Get("/api/sessions", wrap([this](const httplib::Request&, httplib::Response&) {
        json ids = json::array();
        std::error_code ec;
        const fs::path root = config_.data_dir / "sessions";
        if (fs::is_directory(root, ec)) {
            std::vector<std::string> names;
            for (const auto& entry : fs::directory_iterator(root)) {
                const auto name = entry.path().filename().string();
                if (valid_session_id(name) && PersistentSession::exists(entry.path())) names.push_back(name);
            }
            std::sort(names.begin(), names.end());
            ids = names;
        }
        return json{{"sessions", ids}, {"default", config_.default_session}};
    }));

    // Body: {id?, csv, schema, settings?}
    server.Post("/api/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        const std::string id = body.value("id", config_.default_session);
        const Schema schema = schema_from_json(body.at("schema"));
        const TabularDataset ingested = ingest(body.at("csv").get<std::string>(), schema);
        SessionSettings settings = config_.session;
        if (body.contains("settings")) {
            json merged = to_json(settings);
            merged.merge_patch(body["settings"]);
            settings = settings_from_json(merged);
        }
        auto s = create_slot(id, ingested, settings);
        std::shared_lock lock(s->mutex);
        res.status = 201;
        json out = to_json(s->session->session().overview());
        out["id"] = id;
        return out;
    }));

    server.Get(prefix + "/overview", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        json out = to_json(s->session->session().overview());
        out["id"] = s->session->id();
        return out;
    }));

    server.Get(prefix + "/schema", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        return schema_to_json(s->session->session().dataset().schema());
    }));

    server.Get(prefix + "/variables", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        return to_json(s->session->session().bias());
    }));

    server.Get(prefix + R"(/variables/([^/]+))",
               wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
                   auto s = slot(session_id(req));
                   std::shared_lock lock(s->mutex);
                   const std::string name = req.matches[2].str();
                   const BiasReport report = s->session->session().bias();
                   const VariableReport* v = report.find(name);
                   if (v == nullptr) {
                       throw Error(ErrorCode::kInvalidArgument, "unknown predictor '" + name + "'", {{"variable", name}});
                   }
                   json insights = json::array();
                   for (const auto& q : report.quick_insights) {
                       if (q.variable == name) {
                           insights.push_back({{"variable", q.variable},
                                               {"segment", q.segment},
                                               {"reason", to_string(q.reason)},
                                               {"score", q.score}});
                       }
                   }
                   return json{{"variable", to_json(*v)},
                               {"quick_insights", insights},
                               {"coverage_threshold", report.coverage_threshold},
                               {"overall_rr", report.overall_rr},
                               {"overall_cr", report.overall_cr}};
               }));

    server.Get(prefix + "/quality", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        const auto& session = s->session->session();
        const QualityReport report = session.quality();
        json out = to_json(report);
        out["delta_from_baseline"] = to_json(delta_quality(session.history().front().quality, report));
        return out;
    }));

    server.Post(prefix + "/augment/plan", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        const json body = parse_body(req);
        const ConstraintSet constraints = constraints_from_json(body);
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        const auto warnings = s->session->session().plan(constraints);
        json out = json::array();
        for (const auto& w : warnings) out.push_back(to_json(w));
        return json{{"warnings", out},
                    {"total_requested", constraints.total_requested()},
                    {"cap", s->session->session().settings().augment.cap},
                    {"pool_size", matching_pool(s->session->session().dataset(), constraints.constraints).size()}};
    }));

    // Body: {constraints: [...], joint?, seed?, backend?, neighbours?}
    server.Post(prefix + "/augment", wrap([this, session_id](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        const ConstraintSet constraints = constraints_from_json(body);
        const auto backend = make_backend(body.value("backend", std::string("nn")), config_,
                                          body.value("neighbours", std::size_t{5}));
        auto s = slot(session_id(req));
        std::unique_lock lock(s->mutex);
        res.status = 201;
        return s->session->augment(constraints, *backend, body.value("seed", std::uint64_t{0}), request_id(req, body));
    }));

    server.Get(prefix + "/generated", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        const auto& pending = s->session->session().pending();
        if (!pending) throw Error(ErrorCode::kNoPendingBatch, "no generated batch is pending");
        RowFilter filter;
        if (req.has_param("confidence_below")) {
            filter.confidence_below = parse_number<double>(req.get_param_value("confidence_below"), "confidence_below");
        }
        if (req.has_param("confidence_at_least")) {
            filter.confidence_at_least =
                parse_number<double>(req.get_param_value("confidence_at_least"), "confidence_at_least");
        }
        if (req.has_param("predicted_class")) filter.predicted_class = req.get_param_value("predicted_class");
        if (req.has_param("provenance")) filter.provenance = provenance_from(req.get_param_value("provenance"));
        if (req.has_param("where")) {
            filter.regions = constraints_from_json(json::parse(req.get_param_value("where"))).constraints;
        }
        RowOrdering ordering;
        if (req.has_param("sort")) {
            const auto key = req.get_param_value("sort");
            if (key == "confidence") {
                ordering.key = SortKey::kConfidence;
            } else if (key != "row_id") {
                ordering.key = SortKey::kVariable;
                ordering.variable = key;
            }
        }
        ordering.descending = req.get_param_value("order") == "desc";
        const auto view = filter_sort(pending->current, filter, ordering);
        std::size_t offset = 0;
        std::size_t limit = view.size();
        if (req.has_param("offset")) offset = parse_number<std::size_t>(req.get_param_value("offset"), "offset");
        if (req.has_param("limit")) limit = parse_number<std::size_t>(req.get_param_value("limit"), "limit");
        json rows = json::array();
        for (std::size_t i = offset; i < view.size() && i < offset + limit; ++i) {
            rows.push_back(row_json(pending->current, view[i]));
        }
        json out = batch_summary(*pending);
        out["matched"] = view.size();
        out["rows"] = rows;
        return out;
    }));

    // Body: {edits: [{row_id, variable, value}, ...]}; each edit is one event.
    server.Patch(prefix + "/generated", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        const json body = parse_body(req);
        const auto rid = request_id(req, body);
        auto s = slot(session_id(req));
        std::unique_lock lock(s->mutex);
        const auto& schema = s->session->session().dataset().schema();
        json out = json::array();
        std::size_t i = 0;
        for (const auto& e : body.at("edits")) {
            const std::string variable = e.at("variable").get<std::string>();
            const auto col = column_index(schema, variable);
            if (!col) throw Error(ErrorCode::kInvalidArgument, "unknown variable '" + variable + "'");
            const std::optional<std::string> sub = rid ? std::optional(*rid + ":" + std::to_string(i)) : std::nullopt;
            out.push_back(s->session->edit(e.at("row_id").get<RowId>(), variable, cell_from_json(e.at("value"), schema[*col]), sub));
            ++i;
        }
        return json{{"entries", out}};
    }));

    server.Delete(prefix + "/generated", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        const json body = parse_body(req);
        auto s = slot(session_id(req));
        std::unique_lock lock(s->mutex);
        return s->session->discard(request_id(req, body));
    }));

    server.Get(prefix + R"(/generated/(\d+))", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        const auto& pending = s->session->session().pending();
        if (!pending) throw Error(ErrorCode::kNoPendingBatch, "no generated batch is pending");
        const RowId id = parse_number<RowId>(req.matches[2].str(), "row id");
        const auto idx = pending->current.rows.find_row(id);
        if (!idx) throw Error(ErrorCode::kUnknownRow, "no generated row with this id", {{"row_id", id}});
        return row_json(pending->current, *idx);
    }));

    // Body: {variable, value} or {restore: true}
    server.Patch(prefix + R"(/generated/(\d+))",
                 wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
                     const json body = parse_body(req);
                     const RowId id = parse_number<RowId>(req.matches[2].str(), "row id");
                     auto s = slot(session_id(req));
                     std::unique_lock lock(s->mutex);
                     json entry;
                     if (body.value("restore", false)) {
                         entry = s->session->restore(id, request_id(req, body));
                     } else {
                         const std::string variable = body.at("variable").get<std::string>();
                         const auto& schema = s->session->session().dataset().schema();
                         const auto col = column_index(schema, variable);
                         if (!col) throw Error(ErrorCode::kInvalidArgument, "unknown variable '" + variable + "'");
                         entry = s->session->edit(id, variable, cell_from_json(body.at("value"), schema[*col]),
                                                  request_id(req, body));
                     }
                     json out = {{"entry", entry}};
                     const auto& pending = s->session->session().pending();
                     if (pending) {
                         if (const auto idx = pending->current.rows.find_row(id)) out["row"] = row_json(pending->current, *idx);
                         out["estimated_accuracy"] = pending->current.estimated_accuracy;
                     }
                     return out;
                 }));

    server.Delete(prefix + R"(/generated/(\d+))",
                  wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
                      const json body = parse_body(req);
                      const RowId id = parse_number<RowId>(req.matches[2].str(), "row id");
                      auto s = slot(session_id(req));
                      std::unique_lock lock(s->mutex);
                      return json{{"entry", s->session->remove(id, request_id(req, body))}};
                  }));

    // Body: {row_id, variable, value}; never commits.
    server.Post(prefix + "/whatif", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        const json body = parse_body(req);
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        const auto& session = s->session->session();
        const std::string variable = body.at("variable").get<std::string>();
        const auto& schema = session.dataset().schema();
        const auto col = column_index(schema, variable);
        if (!col) throw Error(ErrorCode::kInvalidArgument, "unknown variable '" + variable + "'");
        const RowId id = body.at("row_id").get<RowId>();
        const auto result = session.what_if(id, variable, cell_from_json(body.at("value"), schema[*col]));
        const auto idx = session.pending()->current.rows.find_row(id);
        return json{{"prediction", to_json(result.prediction)},
                    {"current_prediction", to_json(session.pending()->current.predictions[*idx])},
                    {"entry", to_json(result.entry)}};
    }));

    server.Get(prefix + "/drift", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        json out = to_json(s->session->session().drift());
        out["has_pending"] = s->session->session().pending().has_value();
        return out;
    }));

    // Body: {acknowledged: bool}
    server.Post(prefix + "/retrain", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        const json body = parse_body(req);
        auto s = slot(session_id(req));
        std::unique_lock lock(s->mutex);
        return s->session->merge(body.value("acknowledged", false), request_id(req, body));
    }));

    // Body: {index}
    server.Post(prefix + "/revert", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        const json body = parse_body(req);
        auto s = slot(session_id(req));
        std::unique_lock lock(s->mutex);
        return s->session->revert(body.at("index").get<std::size_t>(), request_id(req, body));
    }));

    server.Get(prefix + "/history", wrap([this, session_id](const httplib::Request& req, httplib::Response&) {
        auto s = slot(session_id(req));
        std::shared_lock lock(s->mutex);
        const auto& session = s->session->session();
        json log = json::array();
        if (session.pending()) {
            for (const auto& e : session.pending()->log) log.push_back(to_json(e));
        }
        return json{{"entries", history_to_json(session.history())}, {"pending_edit_log", log}};
    }));
}

}  // namespace debias
