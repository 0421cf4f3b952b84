#include "nudge/error.hpp"
#include "nudge/orchestrator.hpp"

#include <charconv>
#include <limits>

namespace nudge {

std::string HabitKey::to_string() const {
    return std::string(nudge::to_string(state)) + "|" + location + "|" + std::to_string(hour);
}

HabitKey HabitKey::parse(std::string_view text) {
    auto first = text.find('|');
    auto last = text.rfind('|');
    if (first == std::string_view::npos || first == last) {
        throw Error(Errc::Parse, "habit key must look like State|location|hour: '" + std::string(text) + "'");
    }
    HabitKey key;
    key.state = mental_state_kind_from_string(text.substr(0, first));
    key.location = std::string(text.substr(first + 1, last - first - 1));
    auto hour_text = text.substr(last + 1);
    auto [ptr, ec] = std::from_chars(hour_text.data(), hour_text.data() + hour_text.size(), key.hour);
    if (ec != std::errc{} || ptr != hour_text.data() + hour_text.size() || key.hour < 0 || key.hour > 23) {
        throw Error(Errc::Parse, "bad hour in habit key '" + std::string(text) + "'");
    }
    return key;
}

std::string_view to_string(HabitSource source) {
    return source == HabitSource::Initialization ? "Initialization" : "UserEdit";
}

std::optional<HabitBinding> HabitBook::find(const std::string& user, const HabitKey& key) const {
    auto u = users_.find(user);
    if (u == users_.end()) {
        return std::nullopt;
    }
    auto b = u->second.bindings.find(key);
    if (b == u->second.bindings.end()) {
        return std::nullopt;
    }
    return b->second;
}

std::string HabitBook::select(const UserProfile& profile, const HabitKey& key) {
    auto& u = users_[profile.user_id];
    if (auto b = u.bindings.find(key); b != u.bindings.end()) {
        u.last_recommended[b->second.habit] = ++tick_;
        return b->second.habit;
    }
    const std::string* best = nullptr;
    std::uint64_t best_tick = std::numeric_limits<std::uint64_t>::max();
    for (const auto& v : profile.values) {
        if (v.action.empty()) {
            continue;
        }
        auto it = u.last_recommended.find(v.action);
        std::uint64_t t = it == u.last_recommended.end() ? 0 : it->second;
        if (t < best_tick) {
            best_tick = t;
            best = &v.action;
        }
    }
    if (best == nullptr) {
        throw Error(Errc::NoActions, "profile of " + profile.user_id + " lists no actions");
    }
    u.bindings[key] = HabitBinding{*best, HabitSource::Initialization};
    u.last_recommended[*best] = ++tick_;
    return *best;
}

void HabitBook::edit(const std::string& user, const HabitKey& key, std::string habit) {
    auto u = users_.find(user);
    if (u == users_.end() || !u->second.bindings.contains(key)) {
        throw Error(Errc::UnknownKey, "no habit bound to " + key.to_string());
    }
    if (habit.empty()) {
        throw Error(Errc::MalformedValue, "habit must not be empty");
    }
    u->second.bindings[key] = HabitBinding{std::move(habit), HabitSource::UserEdit};
}

bool HabitBook::remove(const std::string& user, const HabitKey& key) {
    auto u = users_.find(user);
    return u != users_.end() && u->second.bindings.erase(key) > 0;
}

void HabitBook::restore(std::map<std::string, UserHabits> users, std::uint64_t tick) {
    users_ = std::move(users);
    tick_ = tick;
}

} // namespace nudge
