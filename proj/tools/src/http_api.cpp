#include "http_api.hpp"

#include "therm/errors.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace therm {

namespace {

using nlohmann::json;

void reply(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

/// Runs a handler and maps library exceptions onto HTTP status codes.
template <typename F>
void guarded(httplib::Response& res, F&& f)
{
    try {
        f();
    } catch (const NotFoundError& e) {
        reply(res, 404, {{"error", e.what()}});
    } catch (const ConflictError& e) {
        reply(res, 409, {{"error", e.what()}});
    } catch (const DomainError& e) {
        reply(res, 400, {{"error", e.what()}});
    } catch (const json::exception& e) {
        reply(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
    } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
    }
}

json parse_body(const httplib::Request& req)
{
    if (req.body.empty()) {
        return json::object();
    }
    json j = json::parse(req.body);
    if (!j.is_object()) {
        throw DomainError("request body must be a JSON object");
    }
    return j;
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<T>();
}

} // namespace

struct HttpApi::Impl {
    SessionService& service;
    httplib::Server server;
    bool bound = false;

    explicit Impl(SessionService& s) : service(s)
    {
        // The library default also sets SO_REUSEPORT, which would let a
        // second server share a port that is already being served.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });
        routes();
    }

    void routes()
    {
        server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json body = parse_body(req);
                const auto budget = optional_field<long long>(body, "budget");
                if (budget && *budget < 1) {
                    throw DomainError("budget must be >= 1");
                }
                const auto seed = optional_field<std::uint64_t>(body, "seed");
                const SessionSnapshot s = service.create(
                    optional_field<double>(body, "init_temp"),
                    budget ? std::optional<std::size_t>(static_cast<std::size_t>(*budget)) : std::nullopt, seed);
                reply(res, 201, to_json(s));
            });
        });
        server.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                json out = json::array();
                for (const auto& s : service.list()) {
                    out.push_back(to_json(*s));
                }
                reply(res, 200, out);
            });
        });
        server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, to_json(*service.get(req.matches[1]))); });
        });
        server.Post(R"(/sessions/([^/]+)/response)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json body = parse_body(req);
                const long long step = body.at("step").get<long long>();
                if (step < 0) {
                    throw DomainError("step must be >= 0");
                }
                const json& r = body.at("response");
                if (!r.is_number_integer()) {
                    throw DomainError("response must be an integer -1, 0 or 1");
                }
                const SessionSnapshot s = service.submit(req.matches[1], static_cast<std::size_t>(step),
                                                         r.get<int>(), optional_field<std::string>(body, "comment"));
                reply(res, 200, to_json(s));
            });
        });
        server.Get(R"(/sessions/([^/]+)/eui)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = service.get(req.matches[1]);
                reply(res, 200, {{"schema", kSessionSchema}, {"step", s->next_step()}, {"candidates", s->eui_map}});
            });
        });
        server.Get(R"(/sessions/([^/]+)/posterior)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = service.get(req.matches[1]);
                if (!s->posterior_summary) {
                    throw NotFoundError("session has no posterior yet");
                }
                json out{{"schema", kSessionSchema}, {"step", s->next_step()}, {"xbest", *s->posterior_summary}};
                if (s->utility_band) {
                    out["utility"] = *s->utility_band;
                }
                reply(res, 200, out);
            });
        });
    }
};

HttpApi::HttpApi(SessionService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpApi::~HttpApi()
{
    stop();
}

int HttpApi::bind(const std::string& host, int port)
{
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    impl_->bound = true;
    return bound;
}

void HttpApi::listen()
{
    if (!impl_->bound) {
        throw std::logic_error("HttpApi::listen before bind");
    }
    impl_->server.listen_after_bind();
}

void HttpApi::stop()
{
    if (impl_->server.is_running()) {
        impl_->server.stop();
    }
}

} // namespace therm
