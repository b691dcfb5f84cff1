#pragma once

#include "therm/session.hpp"

#include <memory>
#include <string>

namespace therm {

/// JSON-over-HTTP front end for a SessionService.
///
///   POST /sessions                  {init_temp?, budget?, seed?}
///   GET  /sessions
///   GET  /sessions/{id}
///   POST /sessions/{id}/response    {step, response, comment?}
///   GET  /sessions/{id}/eui
///   GET  /sessions/{id}/posterior
///
/// Errors map to 400 (bad request), 404 (unknown id) and 409 (conflict),
/// each with a body {"error": message}.
class HttpApi {
public:
    explicit HttpApi(SessionService& service);
    ~HttpApi();

    HttpApi(const HttpApi&) = delete;
    HttpApi& operator=(const HttpApi&) = delete;

    /// Binds host:port (port 0 picks a free port). Returns the bound port;
    /// throws std::runtime_error if the address is unavailable.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called. Requires a successful bind().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace therm
