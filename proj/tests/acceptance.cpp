// Acceptance gate: prints "criterion N: PASS|FAIL" for criteria 1-10 and
// exits non-zero if any criterion fails. Oracles here are written
// independently of the library code they check.

#include "evoderm/app.hpp"
#include "evoderm/csv.hpp"
#include "evoderm/dataset.hpp"
#include "evoderm/embedding_index.hpp"
#include "evoderm/error.hpp"
#include "evoderm/memory_store.hpp"
#include "evoderm/metrics.hpp"
#include "evoderm/mock_backends.hpp"
#include "evoderm/model_adapters.hpp"
#include "evoderm/orchestrator.hpp"
#include "evoderm/service.hpp"
#include "evoderm/snapshot_io.hpp"
#include "stub_server.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace evoderm;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2e", x);
    return buf;
}

std::string fmt(double x, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

// --- oracle 1: metrics from expanded sample lists ------------------------------

struct Samples {
    std::size_t classes = 0;
    std::vector<std::size_t> gold, pred;
};

Samples expand(const std::vector<std::vector<std::uint64_t>>& counts) {
    Samples s;
    s.classes = counts.size();
    for (std::size_t g = 0; g < counts.size(); ++g)
        for (std::size_t p = 0; p < counts.size(); ++p)
            for (std::uint64_t i = 0; i < counts[g][p]; ++i) {
                s.gold.push_back(g);
                s.pred.push_back(p);
            }
    return s;
}

struct OracleMetrics {
    double acc, macro_f1, weighted_f1, mcc, kappa;
};

OracleMetrics oracle_metrics(const Samples& s) {
    const std::size_t n = s.gold.size(), L = s.classes;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += s.gold[i] == s.pred[i];
    double acc = static_cast<double>(correct) / static_cast<double>(n);

    double macro = 0.0, weighted = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
        double tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t i = 0; i < n; ++i) {
            bool g = s.gold[i] == k, p = s.pred[i] == k;
            tp += g && p;
            fp += !g && p;
            fn += g && !p;
            support += g;
        }
        double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        macro += f1;
        weighted += support * f1;
    }
    macro /= static_cast<double>(L);
    weighted /= static_cast<double>(n);

    // MCC as the correlation of one-hot indicator matrices.
    std::vector<double> gm(L, 0.0), pm(L, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        gm[s.gold[i]] += 1.0 / static_cast<double>(n);
        pm[s.pred[i]] += 1.0 / static_cast<double>(n);
    }
    long double cov_gp = 0, cov_gg = 0, cov_pp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < L; ++k) {
            long double x = (s.gold[i] == k ? 1.0L : 0.0L) - gm[k];
            long double y = (s.pred[i] == k ? 1.0L : 0.0L) - pm[k];
            cov_gp += x * y;
            cov_gg += x * x;
            cov_pp += y * y;
        }
    }
    double denom = static_cast<double>(std::sqrt(cov_gg * cov_pp));
    double mcc = denom > 1e-12 ? static_cast<double>(cov_gp) / denom : 0.0;

    // Kappa from observed and chance agreement.
    double pe = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
        double rows = 0, cols = 0;
        for (std::size_t i = 0; i < n; ++i) {
            rows += s.gold[i] == k;
            cols += s.pred[i] == k;
        }
        pe += (rows / static_cast<double>(n)) * (cols / static_cast<double>(n));
    }
    double kappa = 1.0 - pe > 1e-15 ? (acc - pe) / (1.0 - pe) : 0.0;
    return {acc, macro, weighted, mcc, kappa};
}

eval::ConfusionMatrix to_matrix(const std::vector<std::vector<std::uint64_t>>& counts) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < counts.size(); ++i) labels.push_back("L" + std::to_string(i));
    eval::ConfusionMatrix m(labels);
    for (std::size_t g = 0; g < counts.size(); ++g)
        for (std::size_t p = 0; p < counts.size(); ++p) m.add(g, p, counts[g][p]);
    return m;
}

Outcome criterion1() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    int matrices = 0;
    double worst = 0.0;
    std::string where;
    auto track = [&](double lib, double ref, const std::string& what) {
        double d = std::abs(lib - ref);
        if (d > worst) {
            worst = d;
            where = what;
        }
    };
    for (; matrices < 240; ++matrices) {
        std::size_t L = 2 + rng() % 9;
        std::uint64_t n = 1 + rng() % 500;
        std::vector<std::vector<std::uint64_t>> counts(L, std::vector<std::uint64_t>(L, 0));
        // Mix near-diagonal and uniform matrices, and leave some classes empty.
        bool diagonal_heavy = matrices % 2 == 0;
        std::size_t used = matrices % 7 == 0 ? std::max<std::size_t>(1, L / 2) : L;
        for (std::uint64_t i = 0; i < n; ++i) {
            std::size_t g = rng() % used;
            std::size_t p = diagonal_heavy && rng() % 3 ? g : rng() % L;
            ++counts[g][p];
        }
        auto m = to_matrix(counts);
        auto ref = oracle_metrics(expand(counts));
        std::string tag = "matrix " + std::to_string(matrices);
        track(eval::accuracy(m), ref.acc, tag + " accuracy");
        track(eval::macro_f1(m), ref.macro_f1, tag + " macro_f1");
        track(eval::weighted_f1(m), ref.weighted_f1, tag + " weighted_f1");
        track(eval::mcc(m), ref.mcc, tag + " mcc");
        track(eval::kappa(m), ref.kappa, tag + " kappa");
    }

    // Every 2x2 matrix with cells 0..7 against the binary closed form.
    double worst_binary = 0.0;
    int binary_cases = 0;
    for (int tp = 0; tp < 8; ++tp)
        for (int fn = 0; fn < 8; ++fn)
            for (int fp = 0; fp < 8; ++fp)
                for (int tn = 0; tn < 8; ++tn) {
                    if (tp + fn + fp + tn == 0) continue;
                    auto m = to_matrix({{std::uint64_t(tp), std::uint64_t(fn)}, {std::uint64_t(fp), std::uint64_t(tn)}});
                    double den = std::sqrt(double(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
                    double ref = den > 0 ? (double(tp) * tn - double(fp) * fn) / den : 0.0;
                    worst_binary = std::max(worst_binary, std::abs(eval::mcc(m) - ref));
                    ++binary_cases;
                }
    double elapsed = seconds_since(t0);
    bool pass = worst <= 1e-10 && worst_binary <= 1e-12 && elapsed < 5.0;
    return {pass, std::to_string(matrices) + " matrices, max |diff| " + sci(worst) +
                      (where.empty() ? "" : " at " + where) + "; " + std::to_string(binary_cases) +
                      " 2x2 cases, max |diff| " + sci(worst_binary) + "; " + fmt(elapsed) + " s"};
}

// --- oracle 2: exhaustive scan --------------------------------------------------

Outcome criterion2() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    const std::size_t dim = 64, n = 1000;
    EvolutionConfig ec;
    ec.dim = dim;
    ec.n_thresh = 1000000;
    ec.allow_new_labels = true;
    MemoryGraph graph(ec);
    MockSummarizer summarizer;

    std::vector<std::vector<double>> vecs;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v;
        if (i >= 900) {
            v = vecs[rng() % 100];  // exact duplicates force score ties
        } else {
            auto e = testing::random_embedding(rng, dim);
            v.assign(e.values().begin(), e.values().end());
        }
        vecs.push_back(v);
        // ids deliberately not in insertion order
        ids.push_back("case-" + std::to_string((i * 7919) % 100003));
        graph.add_case({ids.back(), Embedding(v), "findings", "label" + std::to_string(i % 3), 0}, summarizer);
    }

    auto oracle = [&](const std::vector<double>& q, std::size_t k) {
        struct Row {
            double score;
            std::size_t order;
        };
        std::vector<Row> rows;
        double qn = 0;
        for (double x : q) qn += x * x;
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0, vn = 0;
            for (std::size_t j = 0; j < dim; ++j) {
                dot += q[j] * vecs[i][j];
                vn += vecs[i][j] * vecs[i][j];
            }
            rows.push_back({dot / std::sqrt(qn * vn), i});
        }
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.order < b.order;
        });
        rows.resize(std::min(k, rows.size()));
        return rows;
    };

    int mismatches = 0;
    double worst = 0.0;
    int tied_queries = 0;
    for (int qi = 0; qi < 50; ++qi) {
        std::vector<double> q;
        if (qi % 5 == 0) {
            q = vecs[rng() % 100];  // lands on a duplicated vector
            ++tied_queries;
        } else {
            auto e = testing::random_embedding(rng, dim);
            q.assign(e.values().begin(), e.values().end());
        }
        for (std::size_t k : {1, 5, 20}) {
            auto hits = graph.query_similar(Embedding(q), k);
            auto ref = oracle(q, k);
            if (hits.size() != ref.size()) {
                ++mismatches;
                continue;
            }
            for (std::size_t r = 0; r < ref.size(); ++r) {
                if (hits[r].case_id != ids[ref[r].order]) ++mismatches;
                worst = std::max(worst, std::abs(hits[r].score - ref[r].score));
            }
        }
    }
    double elapsed = seconds_since(t0);
    bool pass = mismatches == 0 && worst <= 1e-12 && elapsed < 2.0;
    return {pass, "50 queries x k in {1,5,20} over 1000 vectors (100 duplicates, " + std::to_string(tied_queries) +
                      " tie-forcing queries): " + std::to_string(mismatches) + " rank mismatches, max score diff " +
                      sci(worst) + "; " + fmt(elapsed) + " s"};
}

// --- oracle 3: closed-form evolution cadence -----------------------------------

std::set<std::string> oracle_terms(const std::string& text) {
    std::set<std::string> out;
    std::istringstream in(text);
    for (std::string w; in >> w;) {
        std::size_t b = 0, e = w.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
        if (b == e) continue;
        std::string t = w.substr(b, e - b);
        for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.insert(t);
    }
    return out;
}

std::string oracle_union_text(const std::set<std::string>& terms) {
    std::string out;
    for (const auto& t : terms) {
        if (!out.empty()) out += "; ";
        out += t;
    }
    return out;
}

Outcome criterion3() {
    const std::vector<std::string> vocab{"Scale,", "plaque", "(erythema)", "Annular-Ring", "vesicle.", "crust",
                                         "papule;", "lichenified", "pustule", "ulcer"};
    int checks = 0, failures = 0;
    std::string first_failure;
    auto expect = [&](bool ok, const std::string& what) {
        ++checks;
        if (!ok && failures++ == 0) first_failure = what;
    };
    MockSummarizer summarizer;
    for (std::uint32_t N : {1u, 3u, 5u, 10u}) {
        for (std::size_t m = 0; m <= 50; ++m) {
            EvolutionConfig ec;
            ec.dim = 4;
            ec.n_thresh = N;
            ec.allow_new_labels = true;
            MemoryGraph g(ec);
            std::mt19937_64 rng(derive_seed(N, m));
            std::set<std::string> seen;
            for (std::size_t i = 1; i <= m; ++i) {
                std::string findings;
                std::size_t words = 1 + rng() % 4;
                for (std::size_t w = 0; w < words; ++w) findings += vocab[rng() % vocab.size()] + " ";
                auto more = oracle_terms(findings);
                seen.insert(more.begin(), more.end());
                g.add_case({"c" + std::to_string(i), Embedding({1.0, double(i), 0.5, -1.0}), findings, "cat", 0},
                           summarizer);
            }
            std::string tag = "N=" + std::to_string(N) + " m=" + std::to_string(m);
            auto versions = g.guidelines("cat");
            expect(versions.size() == m / N, tag + " version count");
            expect(g.pending_count("cat") == m % N, tag + " pending");
            if (m >= N && !versions.empty()) {
                // the newest version folds in everything up to the last trigger point
                std::mt19937_64 replay(derive_seed(N, m));
                std::set<std::string> upto;
                std::size_t last_trigger = (m / N) * N;
                for (std::size_t i = 1; i <= last_trigger; ++i) {
                    std::string findings;
                    std::size_t words = 1 + replay() % 4;
                    for (std::size_t w = 0; w < words; ++w) findings += vocab[replay() % vocab.size()] + " ";
                    auto more = oracle_terms(findings);
                    upto.insert(more.begin(), more.end());
                }
                expect(versions.back().text == oracle_union_text(upto), tag + " guideline text");
            }
        }
    }
    // Per-insert trace: version count and pending after each insert.
    for (std::uint32_t N : {1u, 3u, 5u, 10u}) {
        EvolutionConfig ec;
        ec.dim = 4;
        ec.n_thresh = N;
        ec.allow_new_labels = true;
        MemoryGraph g(ec);
        for (std::size_t i = 1; i <= 50; ++i) {
            auto r = g.add_case({"c" + std::to_string(i), Embedding({1.0, 0.0, double(i), 0.0}), "t" + std::to_string(i % 4),
                                 "cat", 0},
                                summarizer);
            std::string tag = "trace N=" + std::to_string(N) + " i=" + std::to_string(i);
            expect(r.evolved.has_value() == (i % N == 0), tag + " trigger");
            expect(g.guidelines("cat").size() == i / N, tag + " versions");
            expect(g.pending_count("cat") == i % N, tag + " pending");
        }
    }
    return {failures == 0, std::to_string(checks) + " checks, " + std::to_string(failures) + " failed" +
                               (first_failure.empty() ? "" : " (first: " + first_failure + ")")};
}

// --- corpus helpers ------------------------------------------------------------

const fs::path kCorpus = fs::path(EVODERM_SOURCE_DIR) / "data" / "corpus";

EnvLookup env_of(std::map<std::string, std::string> vars) {
    return [vars](const std::string& name) -> std::optional<std::string> {
        auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

AppConfig corpus_config(const fs::path& work) {
    return parse_config(read_file_text((kCorpus / "evoderm.toml").string()), kCorpus,
                        env_of({{"EVODERM_MEMORY_DIR", (work / "memory").string()},
                                {"EVODERM_KB_PATH", (work / "kb.json").string()}}));
}

void seed_memory(App& app) {
    auto rows = csv::parse(read_file_text((kCorpus / "memory_seed.csv").string()));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        ImageInput img = load_image((kCorpus / rows[i][1]).string());
        app.memory().add_case({rows[i][0], app.embed_image(img), rows[i][2], rows[i][3], 0}, *app.ports().summarizer);
    }
}

struct CorpusRun {
    std::vector<std::string> ids;
    std::vector<std::string> gold;
    std::vector<std::string> reports;  // serialized report JSON
    std::vector<DiagnosisResult> results;
};

CorpusRun run_corpus(App& app, bool use_memory) {
    CorpusRun run;
    PipelineConfig pc = app.pipeline_config();
    pc.use_memory = use_memory;
    for (const auto& rec : eval::read_manifest((kCorpus / "test.csv").string())) {
        ImageInput img = load_image((kCorpus / rec.image_path).string());
        auto result = diagnose(img, app.ports(), &app.memory(), &app.kb(), pc);
        run.ids.push_back(rec.sample_id);
        run.gold.push_back(rec.label);
        run.reports.push_back(report_to_json(result).dump());
        run.results.push_back(std::move(result));
    }
    return run;
}

// --- 4: determinism and trace completeness ------------------------------------

Outcome criterion4() {
    std::vector<CorpusRun> runs;
    for (int r = 0; r < 2; ++r) {
        testing::TempDir work;
        App app(corpus_config(work.path));
        seed_memory(app);
        runs.push_back(run_corpus(app, true));
    }
    const auto& a = runs[0];
    const auto& b = runs[1];
    std::size_t identical = 0, complete = 0, in_pre = 0;
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        identical += a.reports[i] == b.reports[i];
        const auto& res = a.results[i];
        const auto& rep = res.report;

        bool stages_ok = rep.stage_trace.size() == 5 &&
                         std::all_of(rep.stage_trace.begin(), rep.stage_trace.end(), stage_record_consistent);
        for (std::size_t s = 0; s < rep.stage_trace.size() && stages_ok; ++s) {
            stages_ok = rep.stage_trace[s].stage_index == static_cast<int>(s) + 1;
        }
        std::vector<std::string> expected{"embed", "describe", "pre_diag"};
        for (const auto& c : rep.candidates) expected.push_back("retrieve_prior:" + c.label);
        for (auto s : {"guideline_union", "memory_query", "evidence_build", "review", "report"}) expected.push_back(s);
        std::vector<std::string> got;
        bool digests = true;
        for (const auto& step : res.trace.steps) {
            got.push_back(step.step_name);
            digests = digests && step.inputs_digest.size() == 16 && step.outputs_digest.size() == 16;
        }
        complete += stages_ok && got == expected && digests;
        in_pre += std::any_of(rep.candidates.begin(), rep.candidates.end(),
                              [&](const CandidateDiagnosis& c) { return c.label == rep.final_diagnosis; });
    }
    std::size_t n = a.reports.size();
    bool pass = n == 60 && identical == n && complete == n && in_pre == n;
    return {pass, std::to_string(identical) + "/" + std::to_string(n) + " byte-identical reports, " +
                      std::to_string(complete) + "/" + std::to_string(n) + " complete traces, " +
                      std::to_string(in_pre) + "/" + std::to_string(n) + " D* in D_pre"};
}

// --- 5: memory ablation --------------------------------------------------------

Outcome criterion5() {
    auto t0 = Clock::now();
    testing::TempDir work;
    App app(corpus_config(work.path));
    seed_memory(app);
    auto with = run_corpus(app, true);
    auto without = run_corpus(app, false);

    std::set<std::string> designated;
    auto rows = csv::parse(read_file_text((kCorpus / "designated.csv").string()));
    for (std::size_t i = 1; i < rows.size(); ++i) designated.insert(rows[i][0]);

    std::size_t right_with = 0, right_without = 0;
    std::set<std::string> gained, lost;
    for (std::size_t i = 0; i < with.ids.size(); ++i) {
        bool a = with.results[i].report.final_diagnosis == with.gold[i];
        bool b = without.results[i].report.final_diagnosis == without.gold[i];
        right_with += a;
        right_without += b;
        if (a && !b) gained.insert(with.ids[i]);
        if (b && !a) lost.insert(with.ids[i]);
    }
    double n = static_cast<double>(with.ids.size());
    double elapsed = seconds_since(t0);
    bool pass = with.ids.size() == 60 && designated.size() == 20 && gained == designated && lost.empty() &&
                right_with == right_without + 20 && elapsed < 10.0;
    return {pass, "with memory " + std::to_string(right_with) + "/60 (" + fmt(100 * right_with / n, 1) +
                      "%), without " + std::to_string(right_without) + "/60 (" + fmt(100 * right_without / n, 1) +
                      "%); gained set == designated: " + (gained == designated ? "yes" : "no") + "; " + fmt(elapsed) +
                      " s"};
}

// --- 6: persistence ------------------------------------------------------------

Outcome criterion6() {
    testing::TempDir dir;
    EvolutionConfig ec;
    ec.dim = 32;
    ec.n_thresh = 40;
    ec.allow_new_labels = true;
    MockSummarizer summarizer;
    const std::vector<std::string> cats{"psoriasis", "eczema", "tinea"};
    std::mt19937_64 rng(606);

    std::vector<std::string> problems;
    auto compare = [&](const MemoryGraph& a, const MemoryGraph& b, const std::string& tag, std::uint64_t qseed) {
        std::mt19937_64 q(qseed);
        for (int i = 0; i < 20; ++i) {
            Embedding e = testing::random_embedding(q, 32);
            if (a.query_similar(e, 10) != b.query_similar(e, 10)) {
                problems.push_back(tag + ": query " + std::to_string(i));
                break;
            }
        }
        for (const auto& c : cats) {
            auto ta = a.guideline_timeline(c), tb = b.guideline_timeline(c);
            bool same = ta.size() == tb.size();
            for (std::size_t i = 0; same && i < ta.size(); ++i) {
                same = ta[i].version == tb[i].version && ta[i].refinement_delta == tb[i].refinement_delta &&
                       ta[i].created_at == tb[i].created_at && ta[i].source_count == tb[i].source_count;
            }
            if (!same) problems.push_back(tag + ": timeline " + c);
            if (a.pending_count(c) != b.pending_count(c)) problems.push_back(tag + ": pending " + c);
            if (a.guidelines(c) != b.guidelines(c)) problems.push_back(tag + ": guidelines " + c);
        }
    };

    MemoryGraph graph = MemoryGraph::open(dir.path / "durable", ec, 128);
    for (int i = 0; i < 500; ++i) {
        std::string findings = "term" + std::to_string(rng() % 60) + " term" + std::to_string(rng() % 60);
        graph.add_case({"case-" + std::to_string(i), testing::random_embedding(rng, 32), findings, cats[i % 3], 0},
                       summarizer);
    }
    std::size_t versions = 0;
    for (const auto& c : cats) versions += graph.guidelines(c).size();
    bool four_each = std::all_of(cats.begin(), cats.end(), [&](const auto& c) { return graph.guidelines(c).size() == 4; });

    graph.save(dir / "store.json");
    MemoryGraph loaded = MemoryGraph::load(dir / "store.json");
    compare(graph, loaded, "save/load", 1);

    MemoryGraph reopened = MemoryGraph::open(dir.path / "durable", ec, 128);
    compare(graph, reopened, "reopen", 2);

    auto rejects = [&](const std::string& path, auto&& load) {
        std::string bytes = read_file_text(path);
        std::mt19937_64 r(9);
        int rejected = 0;
        for (int t = 0; t < 5; ++t) {
            std::string copy = bytes;
            copy[r() % copy.size()] ^= static_cast<char>(1u << (r() % 8));
            write_file_atomic(path, copy);
            try {
                load();
            } catch (const Error& e) {
                rejected += e.code() == ErrorCode::CorruptSnapshot;
            }
        }
        write_file_atomic(path, bytes);
        return rejected;
    };
    int flat = rejects(dir / "store.json", [&] { MemoryGraph::load(dir / "store.json"); });
    int durable = rejects((dir.path / "durable" / "snapshot.json").string(),
                          [&] { MemoryGraph::open(dir.path / "durable", ec, 128); });

    bool pass = problems.empty() && four_each && flat == 5 && durable == 5 && graph.size() == 500;
    return {pass, "500 cases, " + std::to_string(versions) + " guideline versions (4 per category: " +
                      (four_each ? "yes" : "no") + "); " +
                      (problems.empty() ? std::string("queries/timelines/pending identical after save-load and reopen")
                                        : "mismatch: " + problems.front()) +
                      "; flipped-byte rejections " + std::to_string(flat) + "/5 file, " + std::to_string(durable) +
                      "/5 durable"};
}

// --- 7: refinement-delta timeline ---------------------------------------------

Outcome criterion7() {
    EvolutionConfig ec;
    ec.dim = 2;
    ec.n_thresh = 2;
    ec.allow_new_labels = true;
    MemoryGraph g(ec);
    MockSummarizer summarizer;
    const std::vector<std::string> script{"a b", "b c", "c d", "e", "a", "f g h", "i", "a"};
    for (std::size_t i = 0; i < script.size(); ++i) {
        g.add_case({"s" + std::to_string(i), Embedding({1.0, double(i)}), script[i], "cat", 0}, summarizer);
    }
    // v0 {a,b,c}; v1 adds d,e of 5; v2 adds f,g,h of 8; v3 adds i of 9.
    const std::vector<double> expected{1.0, 2.0 / 5.0, 3.0 / 8.0, 1.0 / 9.0};
    auto tl = g.guideline_timeline("cat");
    bool pass = tl.size() == expected.size();
    std::string got;
    for (std::size_t i = 0; i < tl.size(); ++i) {
        if (i < expected.size()) pass = pass && tl[i].refinement_delta == expected[i] && tl[i].version == i;
        got += (i ? ", " : "") + format_double(tl[i].refinement_delta);
    }
    return {pass, "deltas [" + got + "] vs expected [1, 0.4, 0.375, 0.111...]"};
}

// --- 8: statistics -------------------------------------------------------------

std::uint64_t oracle_splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Outcome criterion8() {
    // 100-sample, 3-class fixture
    const std::vector<std::string> labels{"a", "b", "c"};
    std::vector<eval::LabeledPrediction> preds;
    for (int i = 0; i < 100; ++i) {
        std::string gold = labels[i % 3];
        std::string pred = (i % 7 == 0 || i % 11 == 0) ? labels[(i + 1) % 3] : gold;
        preds.push_back({"s" + std::to_string(i), gold, pred});
    }
    const std::size_t B = 1000;
    const std::uint64_t seed = 2024;

    // independent percentile bootstrap on macro-F1 and accuracy
    auto oracle_ci = [&](bool macro) {
        std::vector<double> stats;
        for (std::size_t r = 0; r < B; ++r) {
            std::mt19937_64 engine(oracle_splitmix(seed ^ oracle_splitmix(r + 0xD1B54A32D192ED03ULL)));
            Samples s;
            s.classes = 3;
            for (std::size_t i = 0; i < preds.size(); ++i) {
                double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
                const auto& p = preds[static_cast<std::size_t>(u * static_cast<double>(preds.size()))];
                s.gold.push_back(static_cast<std::size_t>(p.gold[0] - 'a'));
                s.pred.push_back(static_cast<std::size_t>(p.predicted[0] - 'a'));
            }
            auto m = oracle_metrics(s);
            stats.push_back(macro ? m.macro_f1 : m.acc);
        }
        std::sort(stats.begin(), stats.end());
        auto q = [&](double p) {
            double h = (stats.size() - 1) * p;
            std::size_t lo = static_cast<std::size_t>(std::floor(h));
            std::size_t hi = std::min(lo + 1, stats.size() - 1);
            return stats[lo] + (h - lo) * (stats[hi] - stats[lo]);
        };
        return std::pair{q(0.025), q(0.975)};
    };

    eval::MetricFn acc = [](const eval::ConfusionMatrix& m) { return eval::accuracy(m); };
    eval::MetricFn mf1 = [](const eval::ConfusionMatrix& m) { return eval::macro_f1(m); };
    auto lib_acc = eval::bootstrap_ci(preds, labels, acc, B, seed);
    auto lib_acc2 = eval::bootstrap_ci(preds, labels, acc, B, seed);
    auto lib_mf1 = eval::bootstrap_ci(preds, labels, mf1, B, seed);
    auto ref_acc = oracle_ci(false);
    auto ref_mf1 = oracle_ci(true);
    double boot_diff = std::max({std::abs(lib_acc.low - ref_acc.first), std::abs(lib_acc.high - ref_acc.second),
                                 std::abs(lib_mf1.low - ref_mf1.first), std::abs(lib_mf1.high - ref_mf1.second)});
    bool deterministic = lib_acc.low == lib_acc2.low && lib_acc.high == lib_acc2.high;

    std::vector<double> d{0.1, -0.2, 0.3, 0.05, -0.1}, zero(5, 0.0);
    auto t = eval::paired_ttest(d, zero);
    double t_diff = std::abs(t.t_stat - 0.34874291623145787);
    double p_diff = std::abs(t.p_value - 0.7448652012024437);

    bool pass = deterministic && boot_diff <= 1e-12 && t_diff <= 1e-9 && p_diff <= 1e-9 && t.df == 4;
    return {pass, std::string("bootstrap seed-deterministic: ") + (deterministic ? "yes" : "no") +
                      ", max bound diff vs oracle " + sci(boot_diff) + " (acc CI [" + fmt(lib_acc.low, 4) +
                      ", " + fmt(lib_acc.high, 4) + "]); t=" + format_double(t.t_stat) +
                      " p=" + format_double(t.p_value)};
}

// --- 9: split and remap --------------------------------------------------------

Outcome criterion9() {
    const std::vector<std::pair<std::string, int>> rsdd{
        {"Cutaneous Neuroendocrine Carcinoma", 115}, {"Generalized Pustular Psoriasis", 110},
        {"Behcet's Disease", 81},                    {"Blue Rubber Bleb Nevus Syndrome", 73},
        {"Dermatofibrosarcoma Protuberans", 59},     {"Gorlin Syndrome", 58},
        {"Epithelioid Sarcoma", 46},                 {"Cryopyrin-Associated Periodic Syndrome", 22}};
    const std::vector<std::size_t> expected{38, 36, 27, 24, 19, 19, 15, 7};

    eval::Manifest m;
    std::mt19937_64 rng(9);
    for (std::size_t c = 0; c < rsdd.size(); ++c)
        for (int i = 0; i < rsdd[c].second; ++i)
            m.push_back({"r" + std::to_string(c) + "-" + std::to_string(i), "img.png", rsdd[c].first, std::nullopt});
    std::shuffle(m.begin(), m.end(), rng);

    std::vector<std::string> problems;
    std::size_t train_total = 0, test_total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = eval::split(m, 1.0 / 3.0, seed, true);
        std::map<std::string, std::size_t> per;
        for (const auto& r : s.train) ++per[r.label];
        for (std::size_t c = 0; c < rsdd.size(); ++c) {
            if (per[rsdd[c].first] != expected[c]) problems.push_back("seed " + std::to_string(seed) + " " + rsdd[c].first);
        }
        std::set<std::string> train_ids, test_ids;
        for (const auto& r : s.train) train_ids.insert(r.sample_id);
        for (const auto& r : s.test) test_ids.insert(r.sample_id);
        std::vector<std::string> overlap;
        std::set_intersection(train_ids.begin(), train_ids.end(), test_ids.begin(), test_ids.end(),
                              std::back_inserter(overlap));
        if (!overlap.empty()) problems.push_back("seed " + std::to_string(seed) + " overlap");
        if (train_ids.size() + test_ids.size() != m.size()) problems.push_back("seed " + std::to_string(seed) + " lost rows");
        // both parts keep manifest order
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < m.size(); ++i) pos[m[i].sample_id] = i;
        for (const auto* part : {&s.train, &s.test})
            for (std::size_t i = 1; i < part->size(); ++i)
                if (pos[(*part)[i - 1].sample_id] > pos[(*part)[i].sample_id]) {
                    problems.push_back("seed " + std::to_string(seed) + " order");
                    break;
                }
        if (seed == 0) {
            train_total = s.train.size();
            test_total = s.test.size();
        }
    }
    bool seeds_differ = eval::split(m, 1.0 / 3.0, 1, true).train != eval::split(m, 1.0 / 3.0, 2, true).train;

    // 30-record remap fixture
    const std::vector<std::pair<std::string, int>> subs{
        {"contact-dermatitis-allergic", 6}, {"Contact-Dermatitis-Irritant", 5}, {"phytophotodermatitis", 3},
        {"scabies", 4},                     {"pediculosis-capitis", 3},         {"psoriasis", 5},
        {"acne", 4}};
    eval::Manifest fixture;
    int k = 0;
    for (const auto& [sub, n] : subs)
        for (int i = 0; i < n; ++i) fixture.push_back({"f" + std::to_string(k++), "x.png", sub, sub});
    auto rules = eval::parse_remap_rules(R"([
        {"pattern": "contact-dermatitis", "target": "Contact Dermatitis"},
        {"pattern": "phytophotodermatitis", "target": "Contact Dermatitis", "match": "exact"},
        {"pattern": "scabies", "target": "Scabies and Pediculosis"},
        {"pattern": "pediculosis", "target": "Scabies and Pediculosis"}
    ])");
    auto remapped = eval::remap_labels(fixture, rules, false);
    std::map<std::string, std::size_t> declared{
        {"Contact Dermatitis", 14}, {"Scabies and Pediculosis", 7}, {"psoriasis", 5}, {"acne", 4}};
    bool remap_ok = fixture.size() == 30 && remapped.counts == declared && remapped.dropped == 0;
    auto dropped = eval::remap_labels(fixture, rules, true);
    remap_ok = remap_ok && dropped.dropped == 9 && dropped.manifest.size() == 21;

    eval::Manifest two{{"1", "", "x", "contact-dermatitis-allergic"}, {"2", "", "y", "contact-dermatitis-irritant"}};
    auto pair = eval::remap_labels(two, rules, false);
    remap_ok = remap_ok && pair.counts.size() == 1 && pair.counts["Contact Dermatitis"] == 2;

    bool pass = problems.empty() && seeds_differ && remap_ok && train_total == 185 && test_total == 379;
    return {pass, "train " + std::to_string(train_total) + " / test " + std::to_string(test_total) +
                      ", per-class floor counts over 20 seeds: " + (problems.empty() ? "ok" : problems.front()) +
                      "; remap counts match declared: " + (remap_ok ? "yes" : "no")};
}

// --- 10: HTTP adapters and CLI/HTTP parity ------------------------------------

std::string run_command(const std::string& cmd, int& status) {
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        status = -1;
        return out;
    }
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    status = pclose(pipe);
    return out;
}

Outcome criterion10() {
    std::vector<std::string> notes;
    bool ok = true;
    BackendProfile p;
    p.model_name = "stub";
    p.backoff_base_ms = 1;
    p.timeout_ms = 3000;
    p.max_retries = 3;
    std::vector<ChatMessage> msgs{{"user", "hello"}};

    {
        testing::StubServer stub([](int, const std::string&, const json& body) {
            return testing::StubReply{200, testing::chat_body("echo:" + body["messages"][0]["content"].get<std::string>())};
        });
        p.endpoint_url = stub.url();
        auto r = HttpChatClient(p).chat(msgs);
        bool pass = r.text == "echo:hello" && r.attempts == 1;
        ok = ok && pass;
        notes.push_back(std::string("echo ") + (pass ? "ok" : "FAILED"));
    }
    {
        testing::StubServer stub([](int n, const std::string&, const json&) {
            return n < 3 ? testing::StubReply{503, "{}"} : testing::StubReply{200, testing::chat_body("ok")};
        });
        p.endpoint_url = stub.url();
        auto r = HttpChatClient(p).chat(msgs);
        bool pass = r.text == "ok" && r.attempts == 3 && stub.hits() == 3;
        ok = ok && pass;
        notes.push_back("retry-then-succeed in " + std::to_string(r.attempts) + " attempts");
    }
    {
        testing::StubServer stub([](int, const std::string&, const json&) { return testing::StubReply{500, "{}"}; });
        p.endpoint_url = stub.url();
        int attempts = -1, status = -1;
        try {
            HttpChatClient(p).chat(msgs);
        } catch (const BackendError& e) {
            attempts = e.attempts();
            status = e.status();
        }
        bool pass = attempts == p.max_retries + 1 && status == 500 && stub.hits() == p.max_retries + 1;
        ok = ok && pass;
        notes.push_back("bounded failure after " + std::to_string(attempts) + " attempts (max_retries " +
                        std::to_string(p.max_retries) + ")");
    }

    // CLI vs HTTP on five corpus images.
    testing::TempDir work;
    auto write_config = [&](const fs::path& dir) {
        std::ofstream out(dir / "evoderm.toml");
        out << "[memory]\ndir = \"" << (dir / "memory").string() << "\"\n"
            << "[kb]\npath = \"" << (dir / "kb.json").string() << "\"\nhandbook_dir = \""
            << (kCorpus.parent_path() / "handbook").string() << "\"\n"
            << "[evolution]\nn_thresh = 10\n"
            << "[pipeline]\nlabels = [\"psoriasis\", \"eczema\", \"tinea\"]\n";
    };
    fs::create_directories(work.path / "http");
    write_config(work.path / "http");
    {
        App seeder(load_config((work.path / "http" / "evoderm.toml").string(), env_of({})));
        seed_memory(seeder);
        seeder.memory().checkpoint();
    }
    fs::copy(work.path / "http", work.path / "cli", fs::copy_options::recursive);
    write_config(work.path / "cli");

    App app(load_config((work.path / "http" / "evoderm.toml").string(), env_of({})));
    Service service(app);
    int port = service.bind("127.0.0.1", 0);
    std::thread server([&] { service.listen(); });
    while (!service.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));

    std::size_t same = 0;
    const std::vector<std::string> picks{"test/test-psoriasis-00.ppm", "test/test-psoriasis-13.ppm",
                                         "test/test-eczema-05.ppm", "test/test-tinea-02.ppm", "test/test-tinea-17.ppm"};
    std::string first_diff;
    httplib::Client http("127.0.0.1", port);
    for (const auto& rel : picks) {
        std::string path = (kCorpus / rel).string();
        int status = 0;
        std::string cmd = "env -u EVODERM_CONFIG '" + std::string(EVODERM_CLI_PATH) + "' -c '" +
                          (work.path / "cli" / "evoderm.toml").string() + "' diagnose '" + path + "'";
        std::string cli_out = run_command(cmd, status);

        json body{{"image_b64", base64_encode(read_file_bytes(path))},
                  {"meta", json::parse(read_file_text(path + ".meta.json"))}};
        auto res = http.Post("/v1/diagnose", body.dump(), "application/json");
        json cli_json = json::parse(cli_out, nullptr, false);
        bool match = status == 0 && res && res->status == 200 && !cli_json.is_discarded() &&
                     cli_json == json::parse(res->body);
        same += match;
        if (!match && first_diff.empty()) first_diff = rel;
    }
    service.stop();
    server.join();
    ok = ok && same == picks.size();
    notes.push_back("CLI/HTTP report parity " + std::to_string(same) + "/" + std::to_string(picks.size()) +
                    (first_diff.empty() ? "" : " (first mismatch " + first_diff + ")"));

    std::string detail;
    for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
    return {ok, detail};
}

}  // namespace

int main() {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9, criterion10};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
