#include "http_api.hpp"

#include "therm/errors.hpp"
#include "therm/session.hpp"
#include "therm/simulator.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

using namespace therm;
namespace fs = std::filesystem;

namespace {

/// Fresh empty directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    TempDir()
    {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("therm-test-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

ServiceConfig config_for(const fs::path& dir, bool async = false)
{
    ServiceConfig c;
    c.store_dir = dir;
    c.hmc.burn_in = 120;
    c.hmc.retained = 80;
    c.hmc.thin = 1;
    c.async = async;
    return c;
}

long count_lines(const fs::path& p)
{
    std::ifstream in(p);
    return static_cast<long>(std::count(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>(), '\n'));
}

std::string dump(const SessionSnapshot& s)
{
    return to_json(s).dump();
}

} // namespace

TEST(SessionService, CreateAndGet)
{
    TempDir dir;
    SessionService svc(config_for(dir.path()));
    EXPECT_TRUE(svc.list().empty());
    const SessionSnapshot s = svc.create(21.0, 10, 7);
    EXPECT_EQ(s.status, SessionStatus::AwaitingResponse);
    EXPECT_DOUBLE_EQ(s.current_query, 21.0);
    EXPECT_EQ(s.seed, 7u);
    EXPECT_TRUE(s.history.empty());
    EXPECT_FALSE(s.posterior_summary.has_value());
    EXPECT_EQ(dump(*svc.get(s.id)), dump(s));
    EXPECT_NE(svc.create().id, s.id);
    EXPECT_EQ(svc.list().size(), 2u);
    EXPECT_TRUE(fs::exists(dir.path() / (s.id + ".jsonl")));
}

TEST(SessionService, CreateRejectsBadInput)
{
    TempDir dir;
    SessionService svc(config_for(dir.path()));
    EXPECT_THROW(svc.create(19.0), DomainError);
    EXPECT_THROW(svc.create(28.5), DomainError);
    EXPECT_THROW(svc.create(21.0, 0), DomainError);
    EXPECT_TRUE(svc.list().empty());
}

TEST(SessionService, SubmitFlowIdempotencyAndConflicts)
{
    TempDir dir;
    SessionService svc(config_for(dir.path()));
    const std::string id = svc.create(21.0, 2, 3).id;
    EXPECT_THROW(svc.submit("nope", 0, 1), NotFoundError);
    EXPECT_THROW(svc.submit(id, 0, 2), DomainError);
    EXPECT_THROW(svc.submit(id, 1, 1), ConflictError);  // future step

    const SessionSnapshot a = svc.submit(id, 0, 1, std::string("too cold"));
    EXPECT_EQ(a.status, SessionStatus::AwaitingResponse);
    ASSERT_EQ(a.history.size(), 1u);
    EXPECT_EQ(a.history.steps[0].response, 1);
    ASSERT_TRUE(a.posterior_summary.has_value());
    EXPECT_FALSE(a.eui_map.empty());
    ASSERT_EQ(a.comments.size(), 1u);
    EXPECT_EQ(a.comments[0].text, "too cold");
    EXPECT_NE(a.current_query, 21.0);

    // Same token, same answer: no new mutation.
    const fs::path log = dir.path() / (id + ".jsonl");
    const long lines_before = count_lines(log);
    EXPECT_EQ(lines_before, 2);
    EXPECT_EQ(dump(svc.submit(id, 0, 1)), dump(a));
    EXPECT_EQ(count_lines(log), lines_before);
    EXPECT_THROW(svc.submit(id, 0, -1), ConflictError);

    const SessionSnapshot b = svc.submit(id, 1, 0);
    EXPECT_EQ(b.status, SessionStatus::BudgetExhausted);
    EXPECT_EQ(b.stop_reason, StopReason::BudgetExhausted);
    EXPECT_THROW(svc.submit(id, 2, 0), ConflictError);
    EXPECT_EQ(dump(svc.submit(id, 1, 0)), dump(b));  // replayed token still fine
}

TEST(SessionService, AsyncReportsComputing)
{
    TempDir dir;
    ServiceConfig cfg = config_for(dir.path(), true);
    cfg.hmc.burn_in = 1500;
    cfg.hmc.retained = 500;
    SessionService svc(cfg);
    const std::string id = svc.create(24.0, 5, 1).id;
    const SessionSnapshot pending = svc.submit(id, 0, -1);
    EXPECT_EQ(pending.status, SessionStatus::Computing);
    EXPECT_TRUE(pending.history.empty());
    // While computing, a duplicate is absorbed and anything else conflicts.
    EXPECT_EQ(svc.submit(id, 0, -1).status, SessionStatus::Computing);
    EXPECT_THROW(svc.submit(id, 0, 1), ConflictError);
    EXPECT_THROW(svc.submit(id, 1, 1), ConflictError);
    svc.wait_idle(id);
    const auto done = svc.get(id);
    EXPECT_EQ(done->status, SessionStatus::AwaitingResponse);
    EXPECT_EQ(done->history.size(), 1u);
    EXPECT_TRUE(done->error.empty());
}

TEST(SessionService, ReplayReconstructsIdenticalState)
{
    TempDir dir;
    std::string original;
    std::string id;
    {
        SessionService svc(config_for(dir.path()));
        id = svc.create(21.0, 4, 9).id;
        std::mt19937_64 rng(4);
        const SyntheticOccupant occ = synthetic_occupant(1);
        for (std::size_t step = 0;; ++step) {
            const auto s = svc.get(id);
            if (s->status != SessionStatus::AwaitingResponse) {
                break;
            }
            svc.submit(id, step, sample_response(occ, s->current_query, rng),
                       step == 1 ? std::optional<std::string>("this is good") : std::nullopt);
        }
        original = dump(*svc.get(id));
        EXPECT_EQ(svc.get(id)->history.size(), 4u);
    }
    SessionService again(config_for(dir.path()));
    ASSERT_EQ(again.recovery().recovered, std::vector<std::string>{id});
    EXPECT_TRUE(again.recovery().unrecoverable.empty());
    EXPECT_EQ(dump(*again.get(id)), original);
}

TEST(SessionService, RecoveryHandlesDamage)
{
    TempDir dir;
    std::string good;
    std::string torn;
    std::string broken;
    std::string torn_state;
    {
        SessionService svc(config_for(dir.path()));
        good = svc.create(22.0, 3, 1).id;
        torn = svc.create(23.0, 3, 2).id;
        broken = svc.create(24.0, 3, 3).id;
        svc.submit(torn, 0, 1);
        torn_state = dump(*svc.get(torn));
        svc.submit(broken, 0, 1);
        svc.submit(broken, 1, -1);
    }
    {
        // A crash mid-append leaves a partial record without its newline.
        std::ofstream f(dir.path() / (torn + ".jsonl"), std::ios::app);
        f << R"({"schema":"therm.session/1","type":"response","st)";
    }
    {
        // Corrupt the middle record of another session.
        const fs::path p = dir.path() / (broken + ".jsonl");
        std::ifstream in(p);
        std::vector<std::string> lines;
        for (std::string l; std::getline(in, l);) {
            lines.push_back(l);
        }
        in.close();
        lines[1] = "{not json";
        std::ofstream out(p, std::ios::trunc);
        for (const auto& l : lines) {
            out << l << '\n';
        }
    }
    SessionService svc(config_for(dir.path()));
    const auto& rep = svc.recovery();
    EXPECT_EQ(rep.recovered.size(), 2u);
    ASSERT_EQ(rep.unrecoverable.size(), 1u);
    EXPECT_EQ(rep.unrecoverable[0].first, broken);
    EXPECT_EQ(dump(*svc.get(torn)), torn_state);
    EXPECT_EQ(svc.get(good)->status, SessionStatus::AwaitingResponse);
    EXPECT_THROW((void)svc.get(broken), NotFoundError);
}

TEST(SessionService, EmptyStoreRecoversNothing)
{
    TempDir dir;
    SessionService svc(config_for(dir.path()));
    EXPECT_TRUE(svc.recovery().recovered.empty());
    EXPECT_TRUE(svc.recovery().unrecoverable.empty());
    EXPECT_TRUE(svc.list().empty());
}

TEST(SessionJson, Shape)
{
    SessionSnapshot s;
    s.id = "abc";
    s.status = SessionStatus::Computing;
    const auto j = to_json(s);
    EXPECT_EQ(j.at("schema"), "therm.session/1");
    EXPECT_EQ(j.at("status"), "computing");
    EXPECT_EQ(j.at("step"), 0);
    EXPECT_TRUE(j.at("posterior_summary").is_null());
    EXPECT_TRUE(j.at("history").is_array());
    EXPECT_FALSE(j.contains("error"));
    EXPECT_EQ(to_string(SessionStatus::BudgetExhausted), "budget_exhausted");
    EXPECT_EQ(to_string(SessionStatus::AwaitingResponse), "awaiting_response");
    EXPECT_EQ(to_string(SessionStatus::Converged), "converged");
}

TEST(HttpApi, RoutesAndStatusCodes)
{
    TempDir dir;
    SessionService svc(config_for(dir.path()));
    HttpApi api(svc);
    const int port = api.bind("127.0.0.1", 0);
    std::thread server([&] { api.listen(); });
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(30, 0);
    for (int i = 0; i < 100 && !cli.Get("/sessions"); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

    auto list = cli.Get("/sessions");
    ASSERT_TRUE(list);
    EXPECT_EQ(list->status, 200);
    EXPECT_EQ(list->body, "[]");

    auto bad = cli.Post("/sessions", R"({"init_temp": 19.0})", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    EXPECT_TRUE(nlohmann::json::parse(bad->body).contains("error"));
    EXPECT_EQ(cli.Post("/sessions", "{oops", "application/json")->status, 400);

    auto created = cli.Post("/sessions", R"({"init_temp": 21.0, "budget": 3, "seed": 7})", "application/json");
    ASSERT_TRUE(created);
    EXPECT_EQ(created->status, 201);
    const auto cj = nlohmann::json::parse(created->body);
    const std::string id = cj.at("id");
    EXPECT_EQ(cj.at("status"), "awaiting_response");
    EXPECT_DOUBLE_EQ(cj.at("current_query").get<double>(), 21.0);

    EXPECT_EQ(cli.Get("/sessions/missing")->status, 404);
    EXPECT_EQ(cli.Get("/sessions/" + id + "/posterior")->status, 404);
    EXPECT_EQ(cli.Post("/sessions/" + id + "/response", R"({"step": 0, "response": 5})", "application/json")->status,
              400);
    EXPECT_EQ(cli.Post("/sessions/" + id + "/response", R"({"step": 0, "response": 0.5})", "application/json")->status,
              400);
    EXPECT_EQ(cli.Post("/sessions/" + id + "/response", R"({"response": 1})", "application/json")->status, 400);
    EXPECT_EQ(cli.Post("/sessions/" + id + "/response", R"({"step": 4, "response": 1})", "application/json")->status,
              409);
    EXPECT_EQ(cli.Post("/sessions/missing/response", R"({"step": 0, "response": 1})", "application/json")->status,
              404);

    auto answered = cli.Post("/sessions/" + id + "/response", R"({"step": 0, "response": 1, "comment": "chilly"})",
                             "application/json");
    ASSERT_TRUE(answered);
    EXPECT_EQ(answered->status, 200);
    const auto aj = nlohmann::json::parse(answered->body);
    EXPECT_EQ(aj.at("step"), 1);
    EXPECT_EQ(aj.at("history").size(), 1u);
    EXPECT_EQ(aj.at("comments").at(0).at("text"), "chilly");
    EXPECT_EQ(cli.Post("/sessions/" + id + "/response", R"({"step": 0, "response": -1})", "application/json")->status,
              409);

    auto eui = cli.Get("/sessions/" + id + "/eui");
    ASSERT_TRUE(eui);
    EXPECT_EQ(eui->status, 200);
    const auto ej = nlohmann::json::parse(eui->body);
    EXPECT_EQ(ej.at("candidates").size(), candidate_set(21.0).size());
    EXPECT_TRUE(ej.at("candidates").at(0).contains("temp"));

    auto post = cli.Get("/sessions/" + id + "/posterior");
    ASSERT_TRUE(post);
    EXPECT_EQ(post->status, 200);
    const auto pj = nlohmann::json::parse(post->body);
    EXPECT_EQ(pj.at("xbest").at("pmf").size(), 17u);
    EXPECT_EQ(pj.at("utility").at("q50").size(), 17u);
    EXPECT_EQ(pj.at("xbest").at("ci95").size(), 2u);

    auto one = cli.Get("/sessions/" + id);
    ASSERT_TRUE(one);
    EXPECT_EQ(nlohmann::json::parse(one->body).at("id"), id);
    EXPECT_EQ(nlohmann::json::parse(cli.Get("/sessions")->body).size(), 1u);

    api.stop();
    server.join();
}

TEST(HttpApi, BindFailsOnOccupiedPort)
{
    TempDir dir;
    SessionService svc(config_for(dir.path()));
    HttpApi first(svc);
    const int port = first.bind("127.0.0.1", 0);
    HttpApi second(svc);
    EXPECT_THROW(second.bind("127.0.0.1", port), std::runtime_error);
}
