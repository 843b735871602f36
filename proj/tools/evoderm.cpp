// evoderm: command-line front end for diagnosis, memory, knowledge base,
// evaluation, dataset preparation and the HTTP service.

#include "evoderm/app.hpp"
#include "evoderm/config.hpp"
#include "evoderm/csv.hpp"
#include "evoderm/dataset.hpp"
#include "evoderm/error.hpp"
#include "evoderm/metrics.hpp"
#include "evoderm/serialization.hpp"
#include "evoderm/service.hpp"
#include "evoderm/util.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evoderm;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kBackend = 3, kIo = 4 };

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::MalformedInput:
        case ErrorCode::InvalidArgument:
        case ErrorCode::UnknownLabel:
        case ErrorCode::LengthMismatch:
        case ErrorCode::TooFewSamples:
        case ErrorCode::EmptyManifest:
        case ErrorCode::EmptyInput: return kUsage;
        case ErrorCode::BackendFailure:
        case ErrorCode::Timeout:
        case ErrorCode::AuthMissing:
        case ErrorCode::DistributionInvalid: return kBackend;
        case ErrorCode::IoFailure:
        case ErrorCode::CorruptSnapshot:
        case ErrorCode::SchemaVersionUnsupported: return kIo;
        default: return kFailure;
    }
}

std::string fixed(double x, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return;
    }
    auto parent = fs::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) fs::create_directories(parent, ec);
    write_file_atomic(path, text);
}

void print_evolution(const std::optional<GuidelineVersion>& g) {
    if (g) std::cout << "guideline evolved: " << g->category << " v" << g->version << "\n";
}

struct Options {
    std::string config_path;

    // diagnose
    std::string image;
    std::string report_out;
    std::string case_id;
    bool confirm = false;
    bool no_memory = false;
    bool timing = false;

    // memory
    std::string manifest;
    std::string sidecar;
    std::string query_image;
    std::string query_case;
    std::size_t k = 5;
    std::vector<std::string> categories;
    std::string category;
    bool as_json = false;
    std::string out;

    // kb
    std::vector<std::string> kb_paths;
    bool dedupe = false;
    std::string label;

    // eval
    std::string gold;
    std::string pred;
    std::string compare;
    std::size_t bootstrap = 0;
    std::uint64_t seed = 0;
    std::string json_out;

    // dataset
    double ratio = 0.8;
    bool stratified = false;
    std::string train_out;
    std::string test_out;
    std::string rules;
    bool drop_unmatched = false;

    // serve
    std::string bind;
    int port = -1;
};

AppConfig load(const Options& o) {
    AppConfig c = load_config(o.config_path);
    if (o.no_memory) c.use_memory = false;
    return c;
}

// --- diagnose -----------------------------------------------------------------

int cmd_diagnose(const Options& o) {
    App app(load(o));
    ImageInput image = load_image(o.image);
    DiagnoseOutcome out = app.diagnose(image, o.confirm, o.case_id);
    json report = o.timing ? report_to_json(out.result, true) : out.report;
    write_output(o.report_out, report.dump(2));
    if (!o.report_out.empty()) {
        std::cout << "final diagnosis: " << out.result.report.final_diagnosis << "\n"
                  << "report written to " << o.report_out << "\n";
    }
    if (out.added) {
        std::cout << "case " << out.added->case_id << " confirmed as " << out.result.report.final_diagnosis << "\n";
        print_evolution(out.added->evolved);
    }
    return kOk;
}

// --- memory -------------------------------------------------------------------

int cmd_memory_add(const Options& o) {
    App app(load(o));
    auto rows = csv::parse(read_file_text(o.manifest));
    if (rows.empty() || rows.front() != csv::Row{"case_id", "image_path", "key_findings", "diagnosis"}) {
        throw Error(ErrorCode::MalformedInput, "memory manifest header must be case_id,image_path,key_findings,diagnosis");
    }
    fs::path base = fs::absolute(o.manifest).parent_path();

    std::map<std::string, Embedding> sidecar;
    if (!o.sidecar.empty()) {
        for (auto& rec : read_embedding_sidecar(o.sidecar)) sidecar.emplace(rec.image_path, std::move(rec.embedding));
    }

    // Build and check every entry before touching the store.
    auto snap = app.memory().snapshot();
    std::set<std::string> ids;
    std::vector<MemoryEntry> entries;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 4) throw Error(ErrorCode::MalformedInput, "memory manifest row " + std::to_string(i + 1));
        MemoryEntry e;
        e.id = r[0];
        e.diagnosis = normalize_label(r[3]);
        e.key_findings = r[2];
        if (auto it = sidecar.find(r[1]); it != sidecar.end()) {
            e.embedding = it->second;
        } else {
            std::string path = fs::path(r[1]).is_absolute() ? r[1] : (base / r[1]).string();
            ImageInput image = load_image(path);
            e.embedding = app.embed_image(image);
            if (trim(e.key_findings).empty()) {
                e.key_findings = app.ports().describer->describe(image, kDefaultMorphologyPrompt);
            }
        }
        validate_entry(e, app.memory().config().dim);
        if (!ids.insert(e.id).second || snap->find_case(e.id)) {
            throw Error(ErrorCode::DuplicateId, "case id '" + e.id + "' already present");
        }
        if (!app.memory().config().allow_new_labels && !snap->labels().contains(e.diagnosis)) {
            throw Error(ErrorCode::UnknownLabel, "case " + e.id + ": diagnosis '" + e.diagnosis + "' is not registered");
        }
        entries.push_back(std::move(e));
    }
    for (auto& e : entries) print_evolution(app.memory().add_case(std::move(e), *app.ports().summarizer).evolved);
    std::cout << "added " << entries.size() << " cases; store holds " << app.memory().size() << "\n";
    return kOk;
}

int cmd_memory_query(const Options& o) {
    App app(load(o));
    auto snap = app.memory().snapshot();
    Embedding q;
    if (!o.query_case.empty()) {
        const MemoryEntry* e = snap->find_case(o.query_case);
        if (!e) throw Error(ErrorCode::InvalidArgument, "no case '" + o.query_case + "'");
        q = e->embedding;
    } else {
        q = app.embed_image(load_image(o.query_image));
    }
    auto hits = app.memory().query_similar(q, o.k);
    if (o.as_json) {
        std::cout << json(hits).dump(2) << "\n";
        return kOk;
    }
    std::printf("%-4s  %-24s  %-9s  %s\n", "rank", "case_id", "score", "diagnosis");
    for (std::size_t i = 0; i < hits.size(); ++i) {
        std::printf("%-4zu  %-24s  %-9s  %s\n", i + 1, hits[i].case_id.c_str(), fixed(hits[i].score, 6).c_str(),
                    hits[i].diagnosis.c_str());
    }
    return kOk;
}

int cmd_memory_evolve(const Options& o) {
    App app(load(o));
    std::vector<std::string> cats = o.categories;
    if (cats.empty()) cats = app.memory().snapshot()->categories();
    for (const auto& raw : cats) {
        std::string c = normalize_label(raw);
        auto g = app.memory().maybe_evolve(c, *app.ports().summarizer);
        if (g) {
            print_evolution(g);
        } else {
            std::cout << "no evolution for " << c << " (pending " << app.memory().pending_count(c) << "/"
                      << app.memory().config().n_thresh << ")\n";
        }
    }
    return kOk;
}

int cmd_memory_timeline(const Options& o) {
    App app(load(o));
    std::string c = normalize_label(o.category);
    auto rows = app.memory().guideline_timeline(c);
    if (o.as_json) {
        json out = json::array();
        for (const auto& r : rows) {
            out.push_back({{"category", c}, {"version", r.version}, {"refinement_delta", r.refinement_delta},
                           {"created_at", r.created_at}, {"sources", r.source_count}});
        }
        std::cout << out.dump(2) << "\n";
        return kOk;
    }
    std::printf("%-24s  %-7s  %-8s  %-7s  %s\n", "category", "version", "delta", "sources", "created_at");
    for (const auto& r : rows) {
        std::printf("%-24s  %-7u  %-8s  %-7zu  %llu\n", c.c_str(), r.version, fixed(r.refinement_delta).c_str(),
                    r.source_count, static_cast<unsigned long long>(r.created_at));
    }
    return kOk;
}

int cmd_memory_export(const Options& o) {
    App app(load(o));
    write_output(o.out, app.memory().to_json().dump(1));
    return kOk;
}

// --- kb -------------------------------------------------------------------------

int cmd_kb_ingest(const Options& o) {
    AppConfig config = load(o);
    App app(config);
    std::size_t added = 0;
    for (const auto& p : o.kb_paths) {
        if (fs::is_directory(p)) {
            added += app.kb().ingest_directory(p, config.chunk_policy, o.dedupe);
        } else {
            added += app.kb().ingest(read_file_text(p), fs::path(p).filename().string(), config.chunk_policy, o.dedupe);
        }
    }
    app.save_kb();
    std::cout << "ingested " << added << " chunks; knowledge base holds " << app.kb().size() << "\n";
    return kOk;
}

int cmd_kb_query(const Options& o) {
    App app(load(o));
    auto hits = app.kb().retrieve_prior(normalize_label(o.label), o.k);
    if (hits.empty()) std::cout << "knowledge base is empty\n";
    for (const auto& h : hits) {
        std::cout << fixed(h.score.value_or(0.0), 6) << "  " << h.chunk_id << "\n" << h.text << "\n\n";
    }
    return kOk;
}

int cmd_kb_stats(const Options& o) {
    App app(load(o));
    std::cout << "chunks: " << app.kb().size() << "\ndim: " << app.kb().dim() << "\n";
    return kOk;
}

// --- eval -----------------------------------------------------------------------

int cmd_eval(const Options& o) {
    auto gold = eval::read_manifest(o.gold);
    auto preds = eval::join_predictions(gold, eval::read_predictions(o.pred));
    auto labels = eval::label_space_of(gold);
    auto report = eval::evaluate(preds, labels, o.bootstrap, o.seed);
    if (!o.compare.empty()) {
        auto other = eval::join_predictions(gold, eval::read_predictions(o.compare));
        std::vector<double> a, b;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            a.push_back(preds[i].predicted == preds[i].gold ? 1.0 : 0.0);
            b.push_back(other[i].predicted == other[i].gold ? 1.0 : 0.0);
        }
        report.comparison = eval::paired_ttest(a, b);
    }
    std::cout << eval::format_table(report);
    if (!o.json_out.empty()) write_output(o.json_out, eval::to_json(report).dump(2));
    return kOk;
}

// --- dataset --------------------------------------------------------------------

int cmd_dataset_split(const Options& o) {
    auto manifest = eval::read_manifest(o.manifest);
    auto parts = eval::split(manifest, o.ratio, o.seed, o.stratified);
    write_output(o.train_out, eval::format_manifest(parts.train));
    write_output(o.test_out, eval::format_manifest(parts.test));
    std::cout << "train " << parts.train.size() << ", test " << parts.test.size() << "\n";
    return kOk;
}

int cmd_dataset_remap(const Options& o) {
    auto manifest = eval::read_manifest(o.manifest);
    auto rules = eval::parse_remap_rules(read_file_text(o.rules));
    auto result = eval::remap_labels(manifest, rules, o.drop_unmatched);
    write_output(o.out, eval::format_manifest(result.manifest));
    for (const auto& [label, count] : result.counts) std::cerr << count << "\t" << label << "\n";
    std::cerr << "dropped " << result.dropped << "\n";
    return kOk;
}

// --- serve ----------------------------------------------------------------------

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

int cmd_serve(const Options& o) {
    AppConfig config = load(o);
    if (!o.bind.empty()) config.bind_address = o.bind;
    if (o.port >= 0) config.port = o.port;
    App app(config);
    Service service(app);
    int port = 0;
    try {
        port = service.bind(config.bind_address, config.port);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBackend;
    }
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << config.bind_address << ":" << port << std::endl;

    std::thread watcher([&] {
        while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        service.stop();
    });
    service.listen();
    g_stop.store(true);
    watcher.join();
    app.memory().checkpoint();
    std::cout << "shutdown: memory store flushed" << std::endl;
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"evoderm: dermatology diagnosis engine with self-evolving case memory"};
    cli.require_subcommand(1);
    Options o;
    cli.add_option("-c,--config", o.config_path, "Configuration file (TOML subset)")->envname("EVODERM_CONFIG");
    std::function<int()> action;
    auto on = [&](CLI::App* sub, std::function<int()> fn) { sub->callback([&action, fn] { action = fn; }); };

    auto* diag = cli.add_subcommand("diagnose", "Run the diagnosis pipeline on one image");
    diag->add_option("image", o.image, "Image file (a sibling <image>.meta.json is read if present)")->required();
    diag->add_flag("--confirm", o.confirm, "Store the case in memory with its final diagnosis");
    diag->add_option("--case-id", o.case_id, "Case id for --confirm (default: derived from the image)");
    diag->add_option("--report-out", o.report_out, "Write the report JSON here instead of stdout");
    diag->add_flag("--no-memory", o.no_memory, "Ignore guidelines and historical cases");
    diag->add_flag("--timing", o.timing, "Include step durations in the report");
    on(diag, [&] { return cmd_diagnose(o); });

    auto* mem = cli.add_subcommand("memory", "Inspect and maintain the case memory");
    mem->require_subcommand(1);
    auto* add = mem->add_subcommand("add", "Insert confirmed cases from a CSV manifest");
    add->add_option("manifest", o.manifest, "CSV with header case_id,image_path,key_findings,diagnosis")->required();
    add->add_option("--sidecar", o.sidecar, "Precomputed embeddings CSV (image_path,d,v1..vd)");
    on(add, [&] { return cmd_memory_add(o); });
    auto* query = mem->add_subcommand("query", "Top-k similar cases");
    auto* qimg = query->add_option("--image", o.query_image, "Query image");
    auto* qcase = query->add_option("--case", o.query_case, "Use a stored case's embedding as the query");
    qimg->excludes(qcase);
    query->add_option("-k", o.k, "Number of cases")->capture_default_str();
    query->add_flag("--json", o.as_json, "JSON output");
    on(query, [&] {
        if (o.query_image.empty() && o.query_case.empty()) throw Error(ErrorCode::InvalidArgument, "need --image or --case");
        return cmd_memory_query(o);
    });
    auto* evolve = mem->add_subcommand("evolve", "Evolve guidelines whose pending count reached the threshold");
    evolve->add_option("category", o.categories, "Categories (default: all)");
    on(evolve, [&] { return cmd_memory_evolve(o); });
    auto* timeline = mem->add_subcommand("timeline", "Guideline version history of one category");
    timeline->add_option("category", o.category, "Disease category")->required();
    timeline->add_flag("--json", o.as_json, "JSON output");
    on(timeline, [&] { return cmd_memory_timeline(o); });
    auto* exp = mem->add_subcommand("export", "Dump the memory snapshot as JSON");
    exp->add_option("--out", o.out, "Output file (default stdout)");
    on(exp, [&] { return cmd_memory_export(o); });

    auto* kb = cli.add_subcommand("kb", "Manage the handbook knowledge base");
    kb->require_subcommand(1);
    auto* ingest = kb->add_subcommand("ingest", "Ingest .txt/.md files or directories");
    ingest->add_option("paths", o.kb_paths, "Files or directories")->required();
    ingest->add_flag("--dedupe", o.dedupe, "Skip chunks whose text is already stored");
    on(ingest, [&] { return cmd_kb_ingest(o); });
    auto* kbq = kb->add_subcommand("query", "Retrieve textbook standards for a disease label");
    kbq->add_option("label", o.label, "Disease label")->required();
    kbq->add_option("-k", o.k, "Number of chunks")->capture_default_str();
    on(kbq, [&] { return cmd_kb_query(o); });
    auto* stats = kb->add_subcommand("stats", "Chunk count and embedding dimension");
    on(stats, [&] { return cmd_kb_stats(o); });

    auto* ev = cli.add_subcommand("eval", "Metrics, bootstrap intervals and paired t-test");
    ev->add_option("--gold", o.gold, "Gold manifest CSV")->required();
    ev->add_option("--pred", o.pred, "Predictions CSV (sample_id,predicted_label)")->required();
    ev->add_option("--compare", o.compare, "Second predictions CSV for a paired t-test");
    ev->add_option("--bootstrap", o.bootstrap, "Bootstrap resamples (0 disables, else >= 100)")->capture_default_str();
    ev->add_option("--seed", o.seed, "Bootstrap seed")->capture_default_str();
    ev->add_option("--json-out", o.json_out, "Also write the report as JSON");
    on(ev, [&] { return cmd_eval(o); });

    auto* ds = cli.add_subcommand("dataset", "Manifest splitting and label remapping");
    ds->require_subcommand(1);
    auto* sp = ds->add_subcommand("split", "Seeded train/test split");
    sp->add_option("manifest", o.manifest, "Manifest CSV")->required();
    sp->add_option("--ratio", o.ratio, "Train fraction in (0,1)")->capture_default_str();
    sp->add_option("--seed", o.seed, "Shuffle seed")->capture_default_str();
    sp->add_flag("--stratified", o.stratified, "Split every class separately");
    sp->add_option("--train-out", o.train_out, "Train manifest output")->required();
    sp->add_option("--test-out", o.test_out, "Test manifest output")->required();
    on(sp, [&] { return cmd_dataset_split(o); });
    auto* rm = ds->add_subcommand("remap", "Merge sub-labels into classes with ordered rules");
    rm->add_option("manifest", o.manifest, "Manifest CSV")->required();
    rm->add_option("--rules", o.rules, "JSON array of {pattern, target, match}")->required();
    rm->add_flag("--drop-unmatched", o.drop_unmatched, "Drop records no rule matches");
    rm->add_option("--out", o.out, "Output manifest (default stdout)");
    on(rm, [&] { return cmd_dataset_remap(o); });

    auto* serve = cli.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--bind", o.bind, "Bind address (overrides config)");
    serve->add_option("--port", o.port, "Port, 0 for any free port (overrides config)");
    on(serve, [&] { return cmd_serve(o); });

    auto* cfg = cli.add_subcommand("config", "Print a commented example configuration");
    on(cfg, [&] {
        std::cout << example_config();
        return static_cast<int>(kOk);
    });

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = cli.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        return action ? action() : kUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}
