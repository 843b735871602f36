#include "evoderm/service.hpp"

#include "evoderm/error.hpp"
#include "evoderm/model_adapters.hpp"
#include "evoderm/serialization.hpp"
#include "evoderm/util.hpp"

#include <httplib.h>

#include <sstream>

namespace evoderm {

using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::DuplicateId: return 409;
        case ErrorCode::EmptyCategory: return 404;
        case ErrorCode::BackendFailure:
        case ErrorCode::AuthMissing: return 502;
        case ErrorCode::Timeout: return 504;
        case ErrorCode::IoFailure:
        case ErrorCode::CorruptSnapshot:
        case ErrorCode::SchemaVersionUnsupported:
        case ErrorCode::ConfigError: return 500;
        default: return 400;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, json{{"error", {{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
    try {
        json body = json::parse(req.body);
        if (!body.is_object()) throw Error(ErrorCode::MalformedInput, "request body must be a JSON object");
        return body;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedInput, std::string("request body is not JSON: ") + e.what());
    }
}

// Wraps a handler so every failure becomes a JSON error object.
template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            send_error(res, http_status(e.code()), std::string(to_string(e.code())), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "MalformedInput", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "Internal", e.what());
        }
    };
}

ImageInput image_from_body(const json& body) {
    ImageInput image;
    bool has_image = body.contains("image_b64");
    bool has_embedding = body.contains("embedding");
    if (!has_image && !has_embedding) {
        throw Error(ErrorCode::MalformedInput, "request needs image_b64 or embedding");
    }
    if (has_image) {
        if (!body["image_b64"].is_string()) throw Error(ErrorCode::MalformedInput, "image_b64 must be a string");
        image.bytes = base64_decode(body["image_b64"].get<std::string>());
    }
    if (has_embedding) {
        if (!body["embedding"].is_array()) throw Error(ErrorCode::MalformedInput, "embedding must be an array");
        image.embedding = Embedding(body["embedding"].get<std::vector<double>>());
    }
    if (body.contains("meta")) {
        if (!body["meta"].is_object()) throw Error(ErrorCode::MalformedInput, "meta must be an object");
        image.meta = parse_image_meta(body["meta"].dump());
    }
    return image;
}

Embedding parse_query_vector(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(parse_double(trim(item)));
    return Embedding(std::move(values));
}

json evolved_json(const std::optional<GuidelineVersion>& g) {
    if (!g) return nullptr;
    return json{{"category", g->category}, {"version", g->version}, {"refinement_delta", g->refinement_delta}};
}

}  // namespace

struct Service::Impl {
    App& app;
    httplib::Server server;
    int port = -1;

    explicit Impl(App& a) : app(a) {
        // httplib also sets SO_REUSEPORT, which lets a second server share a busy port.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });
        routes();
    }

    void routes() {
        server.Post("/v1/diagnose", guarded([this](const httplib::Request& req, httplib::Response& res) {
            json body = parse_body(req);
            ImageInput image = image_from_body(body);
            bool confirm = body.value("confirm", false);
            std::string case_id = body.value("case_id", std::string{});
            DiagnoseOutcome out = app.diagnose(image, confirm, case_id);
            json doc = out.report;
            if (out.added) {
                doc["confirmation"] = {{"case_id", out.added->case_id}, {"evolved", evolved_json(out.added->evolved)}};
            }
            send_json(res, 200, doc);
        }));

        server.Get("/v1/memory/cases", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto snap = app.memory().snapshot();
            if (!req.has_param("query")) {
                json cases = json::array();
                for (const auto& c : snap->cases()) {
                    cases.push_back({{"case_id", c->id}, {"diagnosis", c->diagnosis}, {"created_at", c->created_at}});
                }
                send_json(res, 200, json{{"cases", std::move(cases)}});
                return;
            }
            std::size_t k = app.config().evolution.top_k;
            if (req.has_param("k")) k = static_cast<std::size_t>(std::stoul(req.get_param_value("k")));
            std::string query = req.get_param_value("query");
            Embedding q;
            if (const MemoryEntry* stored = snap->find_case(query)) {
                q = stored->embedding;
            } else {
                q = parse_query_vector(query);
            }
            validate_embedding(q, app.memory().config().dim);
            send_json(res, 200, json{{"hits", snap->query_similar(q, k)}});
        }));

        server.Post("/v1/memory/cases", guarded([this](const httplib::Request& req, httplib::Response& res) {
            json body = parse_body(req);
            MemoryEntry entry;
            entry.id = body.at("id").get<std::string>();
            entry.key_findings = body.at("key_findings").get<std::string>();
            entry.diagnosis = body.at("diagnosis").get<std::string>();
            entry.embedding = app.embed_image(image_from_body(body));
            AddResult added = app.memory().add_case(std::move(entry), *app.ports().summarizer);
            send_json(res, 201, json{{"case_id", added.case_id}, {"evolved", evolved_json(added.evolved)}});
        }));

        server.Post(R"(/v1/memory/evolve/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::string category = normalize_label(std::string(req.matches[1]));
            auto evolved = app.memory().maybe_evolve(category, *app.ports().summarizer);
            json body{{"category", category}, {"evolved", evolved_json(evolved)},
                      {"pending", app.memory().pending_count(category)}};
            send_json(res, 200, body);
        }));

        server.Get(R"(/v1/memory/guidelines/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::string category = normalize_label(std::string(req.matches[1]));
            auto snap = app.memory().snapshot();
            const CategoryState* cat = snap->category(category);
            if (cat == nullptr) {
                send_error(res, 404, "EmptyCategory", "unknown category '" + category + "'");
                return;
            }
            send_json(res, 200, json{{"category", category}, {"versions", cat->versions}, {"pending", cat->pending.size()}});
        }));

        server.Get("/v1/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, json{{"status", "ok"}, {"cases", app.memory().size()}, {"kb_chunks", app.kb().size()}});
        }));
    }
};

Service::Service(App& app) : impl_(std::make_unique<Impl>(app)) {}

Service::~Service() {
    if (impl_) impl_->server.stop();
}

int Service::bind(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
    impl_->port = bound;
    return bound;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

bool Service::running() const { return impl_->server.is_running(); }

}  // namespace evoderm
