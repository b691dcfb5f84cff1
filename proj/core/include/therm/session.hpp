#pragma once

#include "therm/engine.hpp"
#include "therm/serialize.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace therm {

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConflictError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SessionStatus { AwaitingResponse, Computing, Converged, BudgetExhausted };

std::string_view to_string(SessionStatus s) noexcept;

struct SessionComment {
    std::size_t step = 0;
    std::string text;
};

/// Immutable view of a session, replaced wholesale on every change.
struct SessionSnapshot {
    std::string id;
    std::string created_at;
    SessionStatus status = SessionStatus::AwaitingResponse;
    std::size_t budget = 10;
    std::uint64_t seed = 0;
    double init_temp = 21.0;
    double current_query = 21.0;
    ElicitationHistory history;
    std::vector<SessionComment> comments;
    StopReason stop_reason = StopReason::None;
    std::optional<XBestPosterior> posterior_summary;
    std::optional<UtilityBand> utility_band;
    std::vector<CandidateScore> eui_map;  // from the last refit
    std::string error;                    // last refit failure, if any

    /// Step token the next submit must carry (= answers recorded so far).
    [[nodiscard]] std::size_t next_step() const noexcept { return history.size(); }
};

nlohmann::json to_json(const SessionSnapshot& s);

/// Append-only JSON-lines log, one file per session.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path dir);

    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }
    [[nodiscard]] std::filesystem::path path_for(const std::string& id) const;

    /// Appends one record and flushes it to the OS before returning.
    void append(const std::string& id, const nlohmann::json& record) const;

    struct Log {
        std::string id;
        std::vector<nlohmann::json> records;
        bool truncated_tail = false;  // an unterminated last line was dropped
        std::string error;            // non-empty: unrecoverable
    };

    /// Reads every session log in the directory, sorted by id.
    [[nodiscard]] std::vector<Log> read_all() const;

private:
    std::filesystem::path dir_;
};

struct ServiceConfig {
    std::filesystem::path store_dir = "therm-sessions";
    HmcConfig hmc;
    std::size_t default_budget = 10;
    std::uint64_t default_seed = 0;
    double default_init_temp = 21.0;
    /// Run refits on worker threads. When false submit blocks until done.
    bool async = true;
};

struct RecoveryReport {
    std::vector<std::string> recovered;
    std::vector<std::pair<std::string, std::string>> unrecoverable;  // id, reason
};

/// Live elicitation sessions backed by a SessionStore.
///
/// Mutations of one session are serialized; refits of different sessions
/// run concurrently. Readers get the latest published snapshot without
/// waiting for a refit.
class SessionService {
public:
    explicit SessionService(ServiceConfig cfg);
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    [[nodiscard]] const RecoveryReport& recovery() const noexcept { return recovery_; }

    /// Throws DomainError on an invalid temperature or budget.
    SessionSnapshot create(std::optional<double> init_temp = {},
                           std::optional<std::size_t> budget = {},
                           std::optional<std::uint64_t> seed = {});

    /// Records the answer to step `step` and starts the refit. Re-sending the
    /// answer of an already recorded step returns the current state without
    /// a new mutation. Throws NotFoundError, ConflictError (wrong status,
    /// stale or future step, different answer for a recorded step) or
    /// DomainError (response outside {-1, 0, 1}).
    SessionSnapshot submit(const std::string& id,
                           std::size_t step,
                           int response,
                           std::optional<std::string> comment = {});

    [[nodiscard]] std::shared_ptr<const SessionSnapshot> get(const std::string& id) const;
    [[nodiscard]] std::vector<std::shared_ptr<const SessionSnapshot>> list() const;

    /// Blocks until the session has no refit in flight.
    void wait_idle(const std::string& id) const;
    /// Joins all workers. Called by the destructor.
    void shutdown();

private:
    struct Entry;

    std::shared_ptr<Entry> find(const std::string& id) const;
    void publish(Entry& e, SessionSnapshot snap) const;
    static void apply_step(Entry& e, int response, const std::string& timestamp, SessionSnapshot& snap);
    void recover();
    std::string fresh_id();

    ServiceConfig cfg_;
    SessionStore store_;
    RecoveryReport recovery_;
    mutable std::mutex map_mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t id_counter_ = 0;
};

/// UTC time as YYYY-MM-DDTHH:MM:SS.mmmZ.
std::string utc_timestamp();

} // namespace therm
