#pragma once

#include "nudge/gateway.hpp"
#include "nudge/orchestrator.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace nudge {

// --- heartbeats -------------------------------------------------------------

struct HeartbeatEntry {
    Timestamp last{};
    bool service_ok = true;

    friend bool operator==(const HeartbeatEntry&, const HeartbeatEntry&) = default;
};

class HeartbeatState {
public:
    // Throws OutOfOrder when ts precedes the user's previous heartbeat.
    void record(const std::string& user, Timestamp ts, bool service_ok);

    const std::map<std::string, HeartbeatEntry>& entries() const { return entries_; }
    void restore(std::map<std::string, HeartbeatEntry> entries) { entries_ = std::move(entries); }

    friend bool operator==(const HeartbeatState&, const HeartbeatState&) = default;

private:
    std::map<std::string, HeartbeatEntry> entries_;
};

struct AlertEvent {
    std::string user_id;
    Timestamp at{};
    Timestamp last_heartbeat{};
    bool service_ok = true;
    std::string reason; // "stale" or "service_down"

    nlohmann::json to_json() const;
};

inline constexpr std::chrono::seconds kDefaultHeartbeatThreshold{10 * 60};

// One alert per user whose last heartbeat is older than threshold or reported
// the service as down.
std::vector<AlertEvent> check_heartbeats(Timestamp now, const HeartbeatState& state, std::chrono::seconds threshold);

class Notifier {
public:
    virtual ~Notifier() = default;
    virtual void notify(const AlertEvent& alert) = 0;
};

// Appends one JSON object per alert.
class FileNotifier final : public Notifier {
public:
    explicit FileNotifier(std::filesystem::path path);
    void notify(const AlertEvent& alert) override;

private:
    std::filesystem::path path_;
    std::mutex mu_;
};

// Placeholder for mail delivery; records what it would have sent.
class EmailNotifier final : public Notifier {
public:
    explicit EmailNotifier(std::string recipient) : recipient_(std::move(recipient)) {}
    void notify(const AlertEvent& alert) override;
    std::vector<AlertEvent> outbox() const;

private:
    std::string recipient_;
    mutable std::mutex mu_;
    std::vector<AlertEvent> outbox_;
};

// --- snapshots --------------------------------------------------------------

inline constexpr int kSnapshotSchemaVersion = 1;

struct ServerState {
    EngineState engine;
    HeartbeatState heartbeats;

    friend bool operator==(const ServerState&, const ServerState&) = default;
};

nlohmann::json snapshot_to_json(const ServerState& state);
// Throws SchemaMismatch for another schema version, CorruptSnapshot otherwise.
ServerState snapshot_from_json(const nlohmann::json& j);

// Written to a temporary file and renamed into place.
void write_snapshot(const std::filesystem::path& path, const ServerState& state);
ServerState read_snapshot(const std::filesystem::path& path);

// --- server -----------------------------------------------------------------

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080; // 0 picks a free port
    std::filesystem::path data_dir = "data";
    std::optional<RemoteBackendConfig> backend;
    std::optional<std::filesystem::path> template_dir;
    std::chrono::seconds heartbeat_threshold = kDefaultHeartbeatThreshold;
    std::chrono::seconds heartbeat_check_period{60};
    std::chrono::milliseconds scheduler_period{1'000};
    std::chrono::seconds snapshot_period{30};
    std::chrono::milliseconds first_chunk_timeout{1'500};
    std::size_t word_cap = kDefaultWordCap;
    std::optional<std::filesystem::path> blocklist_path;
    std::string auth_token_env; // empty: no authentication
    EngineConfig engine;

    static ServerConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static ServerConfig load(const std::filesystem::path& path);
};

using Clock = std::function<Timestamp()>;
Timestamp system_now();

// HTTP front end over one Engine. The event log is appended to
// <data_dir>/events.jsonl before a request is acknowledged; engine state is
// snapshotted to <data_dir>/snapshot.json periodically and on stop.
class ApiServer {
public:
    explicit ApiServer(ServerConfig config, std::shared_ptr<GenerationBackend> remote = nullptr,
                       Clock clock = system_now, std::shared_ptr<Notifier> notifier = nullptr);
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Binds and serves on a background thread; returns the bound port.
    int start();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();
    void stop();
    int port() const { return port_; }

    Engine& engine() { return *engine_; }
    const HeartbeatState& heartbeats() const { return heartbeats_; }
    ServerState state() const;
    void snapshot();

    // One pass of the background work, for tests.
    void run_scheduler_once(Timestamp now);
    std::vector<AlertEvent> run_heartbeat_check_once(Timestamp now);

private:
    void install_routes();
    void background_loop();
    void recover();

    ServerConfig config_;
    Clock clock_;
    std::shared_ptr<Notifier> notifier_;
    std::shared_ptr<TemplateStore> templates_;
    std::unique_ptr<Engine> engine_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<JsonlWriter> writer_;
    std::unique_ptr<httplib::Server> http_;
    std::string auth_token_;

    mutable std::mutex hb_mu_;
    HeartbeatState heartbeats_;
    std::map<std::string, Timestamp> alerted_;

    std::mutex cache_mu_;
    std::map<std::string, std::pair<int, PersuasionMessage>> delivered_; // session -> (round, message)

    std::thread http_thread_;
    std::thread background_thread_;
    std::mutex bg_mu_;
    std::condition_variable bg_cv_;
    bool stopping_ = false;
    int port_ = 0;
};

} // namespace nudge
