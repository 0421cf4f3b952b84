#include "nudge/error.hpp"
#include "nudge/log.hpp"
#include "nudge/server.hpp"

#include <fstream>

namespace nudge {

void HeartbeatState::record(const std::string& user, Timestamp ts, bool service_ok) {
    auto it = entries_.find(user);
    if (it != entries_.end() && ts < it->second.last) {
        throw Error(Errc::OutOfOrder, "heartbeat at " + format_rfc3339(ts) + " precedes " +
                                          format_rfc3339(it->second.last) + " for user " + user);
    }
    entries_[user] = HeartbeatEntry{ts, service_ok};
}

nlohmann::json AlertEvent::to_json() const {
    return {{"user", user_id},
            {"at", format_rfc3339(at)},
            {"last_heartbeat", format_rfc3339(last_heartbeat)},
            {"service_ok", service_ok},
            {"reason", reason}};
}

std::vector<AlertEvent> check_heartbeats(Timestamp now, const HeartbeatState& state, std::chrono::seconds threshold) {
    std::vector<AlertEvent> alerts;
    for (const auto& [user, entry] : state.entries()) {
        const char* reason = nullptr;
        if (!entry.service_ok) {
            reason = "service_down";
        } else if (now - entry.last > threshold) {
            reason = "stale";
        }
        if (reason != nullptr) {
            alerts.push_back(AlertEvent{user, now, entry.last, entry.service_ok, reason});
        }
    }
    return alerts;
}

FileNotifier::FileNotifier(std::filesystem::path path) : path_(std::move(path)) {}

void FileNotifier::notify(const AlertEvent& alert) {
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app);
    if (!out) {
        throw Error(Errc::Io, "cannot open " + path_.string());
    }
    out << alert.to_json().dump() << '\n';
    out.flush();
}

void EmailNotifier::notify(const AlertEvent& alert) {
    log::info("alert for " + alert.user_id + " would be mailed to " + recipient_);
    std::lock_guard lock(mu_);
    outbox_.push_back(alert);
}

std::vector<AlertEvent> EmailNotifier::outbox() const {
    std::lock_guard lock(mu_);
    return outbox_;
}

} // namespace nudge
