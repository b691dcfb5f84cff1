#include "therm/session.hpp"

#include "therm/errors.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace therm {

std::string_view to_string(SessionStatus s) noexcept
{
    switch (s) {
    case SessionStatus::AwaitingResponse:
        return "awaiting_response";
    case SessionStatus::Computing:
        return "computing";
    case SessionStatus::Converged:
        return "converged";
    case SessionStatus::BudgetExhausted:
        return "budget_exhausted";
    }
    return "awaiting_response";
}

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
}

nlohmann::json to_json(const SessionSnapshot& s)
{
    nlohmann::json comments = nlohmann::json::array();
    for (const auto& c : s.comments) {
        comments.push_back({{"step", c.step}, {"text", c.text}});
    }
    nlohmann::json j{{"schema", kSessionSchema},
                     {"id", s.id},
                     {"created_at", s.created_at},
                     {"status", to_string(s.status)},
                     {"budget", s.budget},
                     {"seed", s.seed},
                     {"init_temp", s.init_temp},
                     {"current_query", s.current_query},
                     {"step", s.next_step()},
                     {"history", s.history.steps},
                     {"comments", comments},
                     {"stop_reason", to_string(s.stop_reason)},
                     {"posterior_summary", nullptr},
                     {"eui_map", s.eui_map}};
    if (s.posterior_summary) {
        j["posterior_summary"] = *s.posterior_summary;
    }
    if (!s.error.empty()) {
        j["error"] = s.error;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Store

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::filesystem::create_directories(dir_);
}

std::filesystem::path SessionStore::path_for(const std::string& id) const
{
    return dir_ / (id + ".jsonl");
}

void SessionStore::append(const std::string& id, const nlohmann::json& record) const
{
    const std::string line = record.dump() + "\n";
    std::FILE* f = std::fopen(path_for(id).c_str(), "ab");
    if (f == nullptr) {
        throw std::runtime_error("session store: cannot open " + path_for(id).string());
    }
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0;
    std::fclose(f);
    if (!ok) {
        throw std::runtime_error("session store: write failed for " + id);
    }
}

std::vector<SessionStore::Log> SessionStore::read_all() const
{
    std::vector<Log> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") {
            continue;
        }
        Log log;
        log.id = entry.path().stem().string();
        std::ifstream in(entry.path(), std::ios::binary);
        const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::size_t pos = 0;
        while (pos < content.size() && log.error.empty()) {
            const std::size_t nl = content.find('\n', pos);
            if (nl == std::string::npos) {
                // A crash mid-append leaves an unterminated line; earlier
                // records are complete by construction.
                log.truncated_tail = true;
                break;
            }
            const std::string line = content.substr(pos, nl - pos);
            pos = nl + 1;
            try {
                log.records.push_back(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception& ex) {
                log.error = "corrupt record: " + std::string(ex.what());
            }
        }
        out.push_back(std::move(log));
    }
    std::sort(out.begin(), out.end(), [](const Log& a, const Log& b) { return a.id < b.id; });
    return out;
}

// ---------------------------------------------------------------------------
// Service

struct SessionService::Entry {
    std::mutex mu;  // serializes mutations of this session
    std::unique_ptr<ElicitationEngine> engine;
    std::shared_ptr<const SessionSnapshot> snap;
    std::thread worker;
    int pending_response = 0;

    mutable std::mutex idle_mu;
    mutable std::condition_variable idle_cv;
    bool busy = false;

    [[nodiscard]] std::shared_ptr<const SessionSnapshot> load() const { return std::atomic_load(&snap); }
};

namespace {

EngineConfig engine_config(double init_temp, std::size_t budget, std::uint64_t seed, const HmcConfig& hmc)
{
    EngineConfig c;
    c.init_temp = init_temp;
    c.budget = budget;
    c.seed = seed;
    c.hmc = hmc;
    return c;
}

SessionStatus status_for(const StopDecision& d)
{
    if (!d.stop) {
        return SessionStatus::AwaitingResponse;
    }
    return d.reason == StopReason::BudgetExhausted ? SessionStatus::BudgetExhausted : SessionStatus::Converged;
}

} // namespace

SessionService::SessionService(ServiceConfig cfg) : cfg_(std::move(cfg)), store_(cfg_.store_dir)
{
    cfg_.hmc.validate();
    recover();
}

SessionService::~SessionService()
{
    shutdown();
}

void SessionService::shutdown()
{
    std::vector<std::shared_ptr<Entry>> entries;
    {
        std::lock_guard lock(map_mu_);
        for (auto& [id, e] : sessions_) {
            entries.push_back(e);
        }
    }
    for (auto& e : entries) {
        std::lock_guard lock(e->mu);
        if (e->worker.joinable()) {
            e->worker.join();
        }
    }
}

std::string SessionService::fresh_id()
{
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    for (;;) {
        std::ostringstream os;
        os << "s" << std::hex << std::setw(12) << std::setfill('0') << (rng() & 0xFFFFFFFFFFFFULL);
        const std::string id = os.str();
        std::lock_guard lock(map_mu_);
        if (sessions_.count(id) == 0 && !std::filesystem::exists(store_.path_for(id))) {
            return id;
        }
    }
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const
{
    std::lock_guard lock(map_mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw NotFoundError("no session '" + id + "'");
    }
    return it->second;
}

void SessionService::publish(Entry& e, SessionSnapshot snap) const
{
    std::atomic_store(&e.snap, std::shared_ptr<const SessionSnapshot>(std::make_shared<SessionSnapshot>(std::move(snap))));
}

void SessionService::apply_step(Entry& e, int response, const std::string& timestamp, SessionSnapshot& snap)
{
    try {
        e.engine->submit(response, timestamp);
        snap.error.clear();
    } catch (const std::exception& ex) {
        // The engine is unchanged; the same step may be answered again.
        snap.error = ex.what();
    }
    const ElicitationEngine& eng = *e.engine;
    snap.history = eng.history();
    snap.current_query = eng.current_query();
    snap.stop_reason = eng.stop_decision().reason;
    snap.status = status_for(eng.stop_decision());
    if (!eng.xbest_trace().empty()) {
        snap.posterior_summary = eng.xbest_trace().back();
    }
    if (const auto post = eng.posterior()) {
        snap.utility_band = utility_band(*post);
    }
    snap.eui_map = eng.last_selection().scores;
}

SessionSnapshot SessionService::create(std::optional<double> init_temp,
                                       std::optional<std::size_t> budget,
                                       std::optional<std::uint64_t> seed)
{
    const double t0 = init_temp.value_or(cfg_.default_init_temp);
    const std::size_t b = budget.value_or(cfg_.default_budget);
    const std::uint64_t sd = seed.value_or(cfg_.default_seed);
    const EngineConfig ec = engine_config(t0, b, sd, cfg_.hmc);
    ec.validate();

    auto e = std::make_shared<Entry>();
    e->engine = std::make_unique<ElicitationEngine>(ec);
    SessionSnapshot snap;
    snap.id = fresh_id();
    snap.created_at = utc_timestamp();
    snap.budget = b;
    snap.seed = sd;
    snap.init_temp = t0;
    snap.current_query = t0;

    store_.append(snap.id,
                  {{"schema", kSessionSchema},
                   {"type", "create"},
                   {"id", snap.id},
                   {"created_at", snap.created_at},
                   {"init_temp", t0},
                   {"budget", b},
                   {"seed", sd},
                   {"hmc", cfg_.hmc}});
    publish(*e, snap);
    {
        std::lock_guard lock(map_mu_);
        sessions_[snap.id] = e;
    }
    return snap;
}

SessionSnapshot SessionService::submit(const std::string& id,
                                       std::size_t step,
                                       int response,
                                       std::optional<std::string> comment)
{
    if (response < -1 || response > 1) {
        throw DomainError("response must be -1, 0 or 1");
    }
    const std::shared_ptr<Entry> e = find(id);
    std::unique_lock lock(e->mu);
    const auto cur = e->load();

    if (step < cur->next_step()) {
        if (cur->history.steps[step].response == response) {
            return *cur;
        }
        throw ConflictError("step " + std::to_string(step) + " was already answered differently");
    }
    if (cur->status == SessionStatus::Computing) {
        if (step == cur->next_step() && response == e->pending_response) {
            return *cur;
        }
        throw ConflictError("session is computing");
    }
    if (cur->status != SessionStatus::AwaitingResponse) {
        throw ConflictError("session is " + std::string(to_string(cur->status)));
    }
    if (step != cur->next_step()) {
        throw ConflictError("expected step " + std::to_string(cur->next_step()) + ", got " + std::to_string(step));
    }

    const std::string ts = utc_timestamp();
    nlohmann::json rec{{"schema", kSessionSchema},
                       {"type", "response"},
                       {"step", step},
                       {"response", response},
                       {"timestamp", ts}};
    if (comment && !comment->empty()) {
        rec["comment"] = *comment;
    }
    store_.append(id, rec);

    SessionSnapshot next = *cur;
    next.status = SessionStatus::Computing;
    if (comment && !comment->empty()) {
        next.comments.push_back({step, *comment});
    }
    e->pending_response = response;
    {
        std::lock_guard idle(e->idle_mu);
        e->busy = true;
    }
    publish(*e, next);

    auto run = [this, e, response, ts, next]() mutable {
        apply_step(*e, response, ts, next);
        {
            std::lock_guard relock(e->mu);
            publish(*e, next);
        }
        std::lock_guard idle(e->idle_mu);
        e->busy = false;
        e->idle_cv.notify_all();
    };
    if (!cfg_.async) {
        lock.unlock();
        run();
        return *e->load();
    }
    if (e->worker.joinable()) {
        e->worker.join();
    }
    e->worker = std::thread(std::move(run));
    return next;
}

std::shared_ptr<const SessionSnapshot> SessionService::get(const std::string& id) const
{
    return find(id)->load();
}

std::vector<std::shared_ptr<const SessionSnapshot>> SessionService::list() const
{
    std::lock_guard lock(map_mu_);
    std::vector<std::shared_ptr<const SessionSnapshot>> out;
    out.reserve(sessions_.size());
    for (const auto& [id, e] : sessions_) {
        out.push_back(e->load());
    }
    return out;
}

void SessionService::wait_idle(const std::string& id) const
{
    const auto e = find(id);
    std::unique_lock lock(e->idle_mu);
    e->idle_cv.wait(lock, [&] { return !e->busy; });
}

void SessionService::recover()
{
    for (auto& log : store_.read_all()) {
        if (!log.error.empty()) {
            recovery_.unrecoverable.emplace_back(log.id, log.error);
            continue;
        }
        try {
            if (log.records.empty() || log.records.front().value("type", "") != "create") {
                throw std::runtime_error("missing create record");
            }
            const auto& c = log.records.front();
            HmcConfig hmc = c.at("hmc").get<HmcConfig>();
            auto e = std::make_shared<Entry>();
            SessionSnapshot snap;
            snap.id = c.at("id").get<std::string>();
            if (snap.id != log.id) {
                throw std::runtime_error("id does not match file name");
            }
            snap.created_at = c.at("created_at").get<std::string>();
            snap.init_temp = c.at("init_temp").get<double>();
            snap.budget = c.at("budget").get<std::size_t>();
            snap.seed = c.at("seed").get<std::uint64_t>();
            snap.current_query = snap.init_temp;
            e->engine = std::make_unique<ElicitationEngine>(engine_config(snap.init_temp, snap.budget, snap.seed, hmc));
            for (std::size_t i = 1; i < log.records.size(); ++i) {
                const auto& r = log.records[i];
                if (r.at("type").get<std::string>() != "response") {
                    throw std::runtime_error("unknown record type");
                }
                const auto step = r.at("step").get<std::size_t>();
                const int response = r.at("response").get<int>();
                if (step != snap.next_step() || snap.status != SessionStatus::AwaitingResponse || response < -1
                    || response > 1) {
                    throw std::runtime_error("record " + std::to_string(i) + " does not continue the session");
                }
                if (r.contains("comment")) {
                    snap.comments.push_back({step, r.at("comment").get<std::string>()});
                }
                apply_step(*e, response, r.at("timestamp").get<std::string>(), snap);
            }
            publish(*e, std::move(snap));
            std::lock_guard lock(map_mu_);
            sessions_[log.id] = e;
            recovery_.recovered.push_back(log.id);
        } catch (const std::exception& ex) {
            recovery_.unrecoverable.emplace_back(log.id, ex.what());
        }
    }
}

} // namespace therm
