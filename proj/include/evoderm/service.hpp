#pragma once

#include "evoderm/app.hpp"

#include <memory>
#include <string>

namespace evoderm {

/// JSON-over-HTTP front end for an App.
///
///   POST /v1/diagnose                      {image_b64 | embedding, meta?, confirm?, case_id?}
///   GET  /v1/memory/cases?query=&k=        query is a stored case id or comma-separated floats
///   POST /v1/memory/cases                  {id, key_findings, diagnosis, embedding | image_b64}
///   POST /v1/memory/evolve/{category}
///   GET  /v1/memory/guidelines/{category}
///   GET  /v1/healthz
///
/// Errors come back as {"error": {"code", "message"}}.
class Service {
public:
    explicit Service(App& app);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds without serving; port 0 picks a free port. Returns the bound
    /// port or throws IoFailure.
    int bind(const std::string& host, int port);

    /// Serves until stop() is called.
    void listen();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace evoderm
