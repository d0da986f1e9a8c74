// Command-line driver: ingest, report, augment, curate, retrain, revert,
// experiments and the HTTP server. Shares every engine path with the service.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "debias/benchmark.hpp"
#include "debias/config.hpp"
#include "debias/error.hpp"
#include "debias/service.hpp"
#include "debias/store.hpp"

namespace {

using namespace debias;
using nlohmann::json;
namespace fs = std::filesystem;

struct Globals {
    std::string config_path;
    std::string data_dir;
    std::string session;
    bool json_output = false;
};

Config resolve_config(const Globals& g) {
    Config config = load_config(g.config_path.empty() ? std::nullopt : std::optional<fs::path>(g.config_path));
    if (!g.data_dir.empty()) config.data_dir = g.data_dir;
    if (!g.session.empty()) config.default_session = g.session;
    return config;
}

std::unique_ptr<PersistentSession> open_session(const Config& config) {
    const fs::path dir = session_path(config, config.default_session);
    if (!PersistentSession::exists(dir)) {
        throw Error(ErrorCode::kUnknownSession, "no session '" + config.default_session + "'; run ingest first",
                    {{"path", dir.string()}});
    }
    return PersistentSession::open(dir, clock_for(config));
}

Schema read_schema(const std::string& path) {
    try {
        return schema_from_json(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::kInvalidArgument, "schema file is not valid JSON", {{"path", path}, {"reason", e.what()}});
    }
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::kInvalidArgument, "file is not valid JSON", {{"path", path}, {"reason", e.what()}});
    }
}

std::string render_quality(const QualityReport& q) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "outliers      " << q.outlier_severity << "\n"
        << "duplicates    " << q.duplicate_severity << "\n"
        << "correlation   " << q.correlation_severity << "\n"
        << "skew          " << q.skew_severity << "\n"
        << "imbalance     " << q.imbalance_severity << "\n"
        << "overall       " << q.overall << " (" << std::setprecision(1) << q.overall * 100.0 << "%)\n";
    for (const auto& p : q.flagged_pairs) {
        out << std::setprecision(3) << "correlated: " << p.first << " ~ " << p.second << " " << p.association << "\n";
    }
    return out.str();
}

std::string render_overview(const Overview& o) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "heldout accuracy " << o.accuracy << " [" << o.accuracy_interval.lower << ", " << o.accuracy_interval.upper
        << "]  delta " << std::showpos << o.accuracy_delta << std::noshowpos << "\n"
        << "train rows " << o.train_rows << "  heldout rows " << o.heldout_rows << "\n"
        << "predictors";
    for (const auto& p : o.predictors) out << " " << p;
    out << "\n";
    return out.str();
}

std::string render_batch(const GeneratedBatch& b) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "generated " << b.size() << " rows with " << b.generator_id << "\n"
        << "estimated accuracy " << b.estimated_accuracy << "\n";
    if (b.estimated_quality) out << "estimated quality " << b.estimated_quality->overall << "\n";
    for (const auto& w : b.warnings) {
        out << "warning: " << w.constraint.variable << " has " << w.existing_count << " existing rows for "
            << w.requested_count << " requested (ratio " << w.ratio << ")\n";
    }
    return out.str();
}

std::string render_drift(const DriftReport& d) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    for (const auto& v : d.variables) {
        out << std::left << std::setw(16) << v.variable << std::right << std::setw(8) << v.score
            << (v.flagged ? "  flagged" : "") << "\n";
    }
    out << "threshold " << d.threshold << "\n";
    return out.str();
}

void emit(const Globals& g, const json& doc, const std::string& text) {
    if (g.json_output) {
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << text;
    }
}

Cell parse_cell(const Schema& schema, const std::string& variable, const std::string& text) {
    const auto col = column_index(schema, variable);
    if (!col) throw Error(ErrorCode::kInvalidArgument, "unknown variable '" + variable + "'");
    return cell_from_json(json(text), schema[*col]);
}

volatile std::sig_atomic_t g_stop = 0;
httplib::Server* g_server = nullptr;

void on_signal(int) {
    g_stop = 1;
    if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Representation-bias workbench: analyse, augment, curate and retrain tabular data"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--data-dir", g.data_dir, "Session storage directory (overrides the config)");
    app.add_option("--session", g.session, "Session id (default: config default_session)");
    app.add_flag("--json", g.json_output, "Machine-readable output");

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Load a CSV, split, freeze bins, train the default model");
    std::string csv_path;
    std::string schema_path;
    std::optional<double> split_fraction;
    std::optional<std::uint64_t> split_seed;
    ingest_cmd->add_option("csv", csv_path, "CSV file with a header row")->required();
    ingest_cmd->add_option("--schema", schema_path, "Schema JSON file")->required();
    ingest_cmd->add_option("--split", split_fraction, "Heldout fraction");
    ingest_cmd->add_option("--seed", split_seed, "Split seed");

    // report
    auto* report_cmd = app.add_subcommand("report", "Bias, quality or per-segment report");
    bool want_bias = false;
    bool want_quality = false;
    std::string segments_var;
    std::string report_csv;
    std::string report_schema;
    report_cmd->add_flag("--bias", want_bias, "Representation and coverage per segment (default)");
    report_cmd->add_flag("--quality", want_quality, "Data quality severities");
    report_cmd->add_option("--segments", segments_var, "One variable's segments");
    report_cmd->add_option("--csv", report_csv, "Report on a raw CSV instead of the session (counts only)");
    report_cmd->add_option("--schema", report_schema, "Schema for --csv");

    // augment
    auto* augment_cmd = app.add_subcommand("augment", "Generate a pending batch under constraints");
    std::string constraints_path;
    std::string backend_name = "nn";
    std::uint64_t seed = 0;
    std::size_t neighbours = 5;
    bool plan_only = false;
    augment_cmd->add_option("--constraints", constraints_path, "Constraint JSON file")->required();
    augment_cmd->add_option("--backend", backend_name, "nn | external")->check(CLI::IsMember({"nn", "external"}));
    augment_cmd->add_option("--seed", seed, "Generator seed");
    augment_cmd->add_option("--neighbours", neighbours, "Neighbours for the nn backend");
    augment_cmd->add_flag("--plan", plan_only, "Only print low-coverage warnings");

    // curation
    auto* generated_cmd = app.add_subcommand("generated", "List pending generated rows");
    std::optional<double> conf_below;
    std::string sort_key = "row_id";
    bool descending = false;
    generated_cmd->add_option("--confidence-below", conf_below, "Keep rows with confidence below this value");
    generated_cmd->add_option("--sort", sort_key, "row_id | confidence | <variable>");
    generated_cmd->add_flag("--desc", descending, "Descending order");

    RowId row_id = 0;
    std::string variable;
    std::string value;
    auto* edit_cmd = app.add_subcommand("edit", "Edit one cell of a generated row");
    edit_cmd->add_option("--row", row_id)->required();
    edit_cmd->add_option("--variable", variable)->required();
    edit_cmd->add_option("--value", value)->required();
    auto* whatif_cmd = app.add_subcommand("whatif", "Re-predict a generated row with one cell changed");
    whatif_cmd->add_option("--row", row_id)->required();
    whatif_cmd->add_option("--variable", variable)->required();
    whatif_cmd->add_option("--value", value)->required();
    auto* remove_cmd = app.add_subcommand("remove", "Remove a generated row");
    remove_cmd->add_option("--row", row_id)->required();
    auto* restore_cmd = app.add_subcommand("restore", "Restore a generated row to its generated state");
    restore_cmd->add_option("--row", row_id)->required();
    auto* discard_cmd = app.add_subcommand("discard", "Discard the pending batch");
    auto* drift_cmd = app.add_subcommand("drift", "Drift of the training set if the pending batch were merged");

    auto* retrain_cmd = app.add_subcommand("retrain", "Merge the pending batch and retrain");
    bool acknowledged = false;
    retrain_cmd->add_flag("--ack", acknowledged, "Acknowledge the drift warning");
    auto* revert_cmd = app.add_subcommand("revert", "Restore the state recorded at a history index");
    std::size_t revert_index = 0;
    revert_cmd->add_option("--index", revert_index)->required();
    auto* history_cmd = app.add_subcommand("history", "Session history with deltas");
    auto* overview_cmd = app.add_subcommand("overview", "Model accuracy and training set size");

    // experiments
    auto* baseline_cmd = app.add_subcommand("baseline", "Naive grid-search augmentation, merge and retrain");
    std::size_t budget = 64;
    bool on_benchmark = false;
    std::size_t bench_rows = 2000;
    baseline_cmd->add_option("--budget", budget, "Grid points to evaluate");
    baseline_cmd->add_option("--seed", seed, "Generator seed");
    baseline_cmd->add_flag("--benchmark", on_benchmark, "Run on the synthetic benchmark instead of the session");
    baseline_cmd->add_option("--rows", bench_rows, "Benchmark rows");

    auto* ratio_cmd = app.add_subcommand("ratio-bench", "Estimated accuracy against existing/requested ratio");
    RatioBenchConfig ratio;
    ratio_cmd->add_option("--seeds", ratio.seeds, "Generator seeds");
    ratio_cmd->add_option("--batches", ratio.batches_per_seed, "Batches per seed");
    ratio_cmd->add_option("--requested", ratio.requested, "Rows requested per batch");
    ratio_cmd->add_option("--rows", bench_rows, "Benchmark rows");

    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
    std::optional<int> port;
    std::string host;
    serve_cmd->add_option("--port", port);
    serve_cmd->add_option("--host", host);

    CLI11_PARSE(app, argc, argv);

    try {
        const Config config = resolve_config(g);

        if (ingest_cmd->parsed()) {
            SessionSettings settings = config.session;
            if (split_fraction) settings.heldout_fraction = *split_fraction;
            if (split_seed) settings.split_seed = *split_seed;
            const TabularDataset data = ingest(read_file(csv_path), read_schema(schema_path));
            auto ps = PersistentSession::create(session_path(config, config.default_session), config.default_session,
                                                data, settings, clock_for(config));
            json out = to_json(ps->session().overview());
            out["id"] = ps->id();
            emit(g, out, "session " + ps->id() + "\n" + render_overview(ps->session().overview()));
        } else if (report_cmd->parsed()) {
            if (!report_csv.empty()) {
                if (report_schema.empty()) throw Error(ErrorCode::kInvalidArgument, "--csv needs --schema");
                const TabularDataset data = freeze_segmentation(ingest(read_file(report_csv), read_schema(report_schema)));
                if (want_quality) {
                    const auto q = quality_report(data, config.session.quality);
                    emit(g, to_json(q), render_quality(q));
                } else {
                    BiasReport report = bias_report(data, config.session.threshold);
                    if (!segments_var.empty()) {
                        const VariableReport* v = report.find(segments_var);
                        if (v == nullptr) throw Error(ErrorCode::kInvalidArgument, "unknown predictor '" + segments_var + "'");
                        report.per_variable = {*v};
                    }
                    emit(g, to_json(report), render_table(report));
                }
            } else {
                auto ps = open_session(config);
                const auto& session = ps->session();
                if (want_quality) {
                    const auto q = session.quality();
                    emit(g, to_json(q), render_quality(q));
                } else {
                    BiasReport report = session.bias();
                    if (!segments_var.empty()) {
                        const VariableReport* v = report.find(segments_var);
                        if (v == nullptr) throw Error(ErrorCode::kInvalidArgument, "unknown predictor '" + segments_var + "'");
                        report.per_variable = {*v};
                    }
                    emit(g, to_json(report), render_table(report));
                }
            }
        } else if (augment_cmd->parsed()) {
            auto ps = open_session(config);
            const ConstraintSet constraints = constraints_from_json(read_json(constraints_path));
            if (plan_only) {
                const auto warnings = ps->session().plan(constraints);
                json out = json::array();
                std::ostringstream text;
                for (const auto& w : warnings) {
                    out.push_back(to_json(w));
                    text << "warning: " << w.constraint.variable << " existing " << w.existing_count << " requested "
                         << w.requested_count << " ratio " << w.ratio << "\n";
                }
                if (warnings.empty()) text << "no low-coverage warnings\n";
                emit(g, json{{"warnings", out}}, text.str());
            } else {
                const auto backend = make_backend(backend_name, config, neighbours);
                const json out = ps->augment(constraints, *backend, seed);
                emit(g, out, render_batch(ps->session().pending()->current));
            }
        } else if (generated_cmd->parsed()) {
            auto ps = open_session(config);
            const auto& pending = ps->session().pending();
            if (!pending) throw Error(ErrorCode::kNoPendingBatch, "no generated batch is pending");
            RowFilter filter;
            filter.confidence_below = conf_below;
            RowOrdering ordering;
            ordering.descending = descending;
            if (sort_key == "confidence") {
                ordering.key = SortKey::kConfidence;
            } else if (sort_key != "row_id") {
                ordering.key = SortKey::kVariable;
                ordering.variable = sort_key;
            }
            const auto& batch = pending->current;
            const auto view = filter_sort(batch, filter, ordering);
            const auto& schema = batch.rows.schema();
            json rows = json::array();
            std::ostringstream text;
            text << "row_id";
            for (const auto& v : schema) text << "," << v.name;
            text << ",predicted,confidence,provenance\n";
            for (std::size_t i : view) {
                json cells = json::object();
                text << batch.rows.row_ids()[i];
                for (std::size_t c = 0; c < schema.size(); ++c) {
                    cells[schema[c].name] = cell_to_json(batch.rows.rows()[i][c]);
                    text << "," << format_cell(batch.rows.rows()[i][c]);
                }
                text << "," << batch.predictions[i].predicted_class << "," << std::fixed << std::setprecision(4)
                     << batch.predictions[i].confidence << "," << to_string(batch.rows.provenance()[i]) << "\n";
                rows.push_back({{"row_id", batch.rows.row_ids()[i]},
                                {"cells", cells},
                                {"provenance", to_string(batch.rows.provenance()[i])},
                                {"prediction", to_json(batch.predictions[i])}});
            }
            emit(g, json{{"rows", rows}}, text.str());
        } else if (edit_cmd->parsed() || whatif_cmd->parsed()) {
            auto ps = open_session(config);
            const Cell cell = parse_cell(ps->session().dataset().schema(), variable, value);
            if (whatif_cmd->parsed()) {
                const auto r = ps->session().what_if(row_id, variable, cell);
                std::ostringstream text;
                text << "predicted " << r.prediction.predicted_class << " confidence " << std::fixed
                     << std::setprecision(4) << r.prediction.confidence << "\n";
                emit(g, json{{"prediction", to_json(r.prediction)}, {"entry", to_json(r.entry)}}, text.str());
            } else {
                const json entry = ps->edit(row_id, variable, cell);
                emit(g, entry, "edited row " + std::to_string(row_id) + "\n");
            }
        } else if (remove_cmd->parsed()) {
            auto ps = open_session(config);
            emit(g, ps->remove(row_id), "removed row " + std::to_string(row_id) + "\n");
        } else if (restore_cmd->parsed()) {
            auto ps = open_session(config);
            emit(g, ps->restore(row_id), "restored row " + std::to_string(row_id) + "\n");
        } else if (discard_cmd->parsed()) {
            auto ps = open_session(config);
            emit(g, ps->discard(), "discarded pending batch\n");
        } else if (drift_cmd->parsed()) {
            auto ps = open_session(config);
            const auto d = ps->session().drift();
            emit(g, to_json(d), render_drift(d));
        } else if (retrain_cmd->parsed()) {
            auto ps = open_session(config);
            ps->merge(acknowledged);
            emit(g, history_to_json(ps->session().history()).back(), render_history(ps->session().history()));
        } else if (revert_cmd->parsed()) {
            auto ps = open_session(config);
            ps->revert(revert_index);
            emit(g, history_to_json(ps->session().history()).back(), render_history(ps->session().history()));
        } else if (history_cmd->parsed()) {
            auto ps = open_session(config);
            emit(g, history_to_json(ps->session().history()), render_history(ps->session().history()));
        } else if (overview_cmd->parsed()) {
            auto ps = open_session(config);
            emit(g, to_json(ps->session().overview()), render_overview(ps->session().overview()));
        } else if (baseline_cmd->parsed()) {
            const auto backend = make_backend("nn", config);
            // Experiments never touch the persisted session.
            Session session = on_benchmark
                                  ? Session::create(benchmark_dataset(bench_rows), config.session, clock_for(config))
                                  : open_session(config)->session();
            const BaselineResult r = run_baseline(session, budget, *backend, seed);
            std::ostringstream text;
            text << std::fixed << std::setprecision(4) << "            before     after\n"
                 << "overall RR  " << r.before.overall_rr << "    " << r.after.overall_rr << "\n"
                 << "overall CR  " << r.before.overall_cr << "    " << r.after.overall_cr << "\n"
                 << "accuracy    " << r.before.accuracy << "    " << r.after.accuracy << "\n"
                 << "generated   " << r.generated << " rows over " << r.constraints.constraints.size()
                 << " segments\n";
            emit(g, to_json(r), text.str());
        } else if (ratio_cmd->parsed()) {
            const auto backend = make_backend("nn", config);
            const Session session = Session::create(benchmark_dataset(bench_rows), config.session, clock_for(config));
            const auto r = ratio_bench(session.dataset(), session.model(), *backend, ratio);
            emit(g, to_json(r), render_ratio_table(r));
        } else if (serve_cmd->parsed()) {
            Config serve_config = config;
            if (port) serve_config.port = *port;
            if (!host.empty()) serve_config.host = host;
            Service service(serve_config);
            httplib::Server server;
            service.mount(server);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << serve_config.host << ":" << serve_config.port << "\n";
            if (!server.listen(serve_config.host, serve_config.port)) {
                if (g_stop) return 0;
                throw Error(ErrorCode::kIoError, "cannot listen", {{"host", serve_config.host}, {"port", serve_config.port}});
            }
        }
    } catch (const Error& e) {
        if (g.json_output) {
            std::cerr << error_body(e).dump(2) << "\n";
        } else {
            std::cerr << "error: " << to_string(e.code()) << ": " << e.what();
            if (!e.detail().empty()) std::cerr << " " << e.detail().dump();
            std::cerr << "\n";
        }
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
