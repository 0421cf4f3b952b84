#include "nudge/error.hpp"
#include "nudge/server.hpp"

#include <fstream>

namespace nudge {

using nlohmann::json;

namespace {

json opt_str(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

json cell_json(const MentalStateCell& c) {
    return {{"state", to_string(c.state.kind())},
            {"engaged", c.engagement == Engagement::Engaged},
            {"other_text", c.state.other_text()}};
}

MentalStateCell cell_from(const json& j) {
    return MentalStateCell{MentalState::of(mental_state_kind_from_string(j.at("state").get<std::string>()),
                                           j.at("other_text").get<std::string>()),
                           j.at("engaged").get<bool>() ? Engagement::Engaged : Engagement::NotEngaged};
}

CellKey cell_key_from(const json& j) {
    return CellKey{mental_state_kind_from_string(j.at("state").get<std::string>()),
                   j.at("engaged").get<bool>() ? Engagement::Engaged : Engagement::NotEngaged};
}

json goals_json(const std::vector<GoalEntry>& goals) {
    json a = json::array();
    for (const auto& g : goals) {
        a.push_back({{"category", to_string(g.category)}, {"goal", g.goal}, {"action", g.action}});
    }
    return a;
}

std::vector<GoalEntry> goals_from(const json& a) {
    std::vector<GoalEntry> out;
    for (const auto& g : a) {
        out.push_back(GoalEntry{goal_category_from_string(g.at("category").get<std::string>()),
                                g.at("goal").get<std::string>(), g.at("action").get<std::string>()});
    }
    return out;
}

json strategy_json(const std::optional<Strategy>& s) { return s ? json(to_string(*s)) : json(nullptr); }

std::optional<Strategy> strategy_from(const json& j) {
    if (j.is_null()) {
        return std::nullopt;
    }
    return strategy_from_string(j.get<std::string>());
}

json request_json(const GenerationRequest& r) {
    const auto& s = r.slots;
    json slots = {{"app_name", s.app_name},
                  {"current_time", format_rfc3339(s.current_time)},
                  {"utc_offset", s.utc_offset.to_string()},
                  {"location_label", s.location_label},
                  {"habitual_minutes_today", s.habitual_minutes_today},
                  {"minutes_since_last_habitual",
                   s.minutes_since_last_habitual ? json(*s.minutes_since_last_habitual) : json(nullptr)},
                  {"cell", cell_json(s.cell)},
                  {"goals", goals_json(s.goals)},
                  {"habit", opt_str(s.habit)},
                  {"strategy", strategy_json(s.strategy)}};
    json prompt = {{"task_setup", r.prompt.task_setup},
                   {"context", r.prompt.context},
                   {"optimization", r.prompt.optimization},
                   {"strategy_description", r.prompt.strategy_description},
                   {"full_text", r.prompt.full_text}};
    return {{"request_id", r.request_id}, {"deadline_ms", r.deadline.count()}, {"prompt", prompt}, {"slots", slots}};
}

GenerationRequest request_from(const json& j) {
    GenerationRequest r;
    r.request_id = j.at("request_id").get<std::string>();
    r.deadline = std::chrono::milliseconds(j.at("deadline_ms").get<std::int64_t>());
    const auto& p = j.at("prompt");
    r.prompt.task_setup = p.at("task_setup").get<std::string>();
    r.prompt.context = p.at("context").get<std::string>();
    r.prompt.optimization = p.at("optimization").get<std::string>();
    r.prompt.strategy_description = p.at("strategy_description").get<std::string>();
    r.prompt.full_text = p.at("full_text").get<std::string>();
    const auto& s = j.at("slots");
    r.slots.app_name = s.at("app_name").get<std::string>();
    r.slots.current_time = parse_rfc3339(s.at("current_time").get<std::string>());
    r.slots.utc_offset = UtcOffset::parse(s.at("utc_offset").get<std::string>());
    r.slots.location_label = s.at("location_label").get<std::string>();
    r.slots.habitual_minutes_today = s.at("habitual_minutes_today").get<std::int64_t>();
    if (!s.at("minutes_since_last_habitual").is_null()) {
        r.slots.minutes_since_last_habitual = s.at("minutes_since_last_habitual").get<std::int64_t>();
    }
    r.slots.cell = cell_from(s.at("cell"));
    r.slots.goals = goals_from(s.at("goals"));
    if (!s.at("habit").is_null()) {
        r.slots.habit = s.at("habit").get<std::string>();
    }
    r.slots.strategy = strategy_from(s.at("strategy"));
    return r;
}

json session_json(const InterventionSession& s) {
    json rounds = json::array();
    for (const auto& r : s.rounds) {
        rounds.push_back({{"number", r.number},
                          {"strategy", strategy_json(r.strategy)},
                          {"shown_at", format_rfc3339(r.shown_at)},
                          {"habit_key", r.habit_key ? json(r.habit_key->to_string()) : json(nullptr)},
                          {"habit", r.habit}});
    }
    json shown = json::array();
    for (auto st : s.shown.to_vector()) {
        shown.push_back(to_string(st));
    }
    return {{"session", s.session_id},
            {"user", s.user_id},
            {"app", s.app},
            {"location", s.location},
            {"opened_at", format_rfc3339(s.opened_at)},
            {"last_activity", format_rfc3339(s.last_activity)},
            {"phase", to_string(s.phase)},
            {"cell", s.cell ? cell_json(*s.cell) : json(nullptr)},
            {"shown", shown},
            {"rounds", rounds},
            {"round_cap", s.round_cap},
            {"outcome", s.outcome ? json(to_string(*s.outcome)) : json(nullptr)},
            {"timeout", s.timeout},
            {"pending", s.pending ? request_json(*s.pending) : json(nullptr)}};
}

SessionPhase phase_from(const std::string& text) {
    for (auto p : {SessionPhase::AwaitIntent, SessionPhase::AwaitMentalState, SessionPhase::Persuading,
                   SessionPhase::Closed}) {
        if (to_string(p) == text) {
            return p;
        }
    }
    throw Error(Errc::Parse, "unknown phase '" + text + "'");
}

InterventionSession session_from(const json& j) {
    InterventionSession s;
    s.session_id = j.at("session").get<std::string>();
    s.user_id = j.at("user").get<std::string>();
    s.app = j.at("app").get<std::string>();
    s.location = j.at("location").get<std::string>();
    s.opened_at = parse_rfc3339(j.at("opened_at").get<std::string>());
    s.last_activity = parse_rfc3339(j.at("last_activity").get<std::string>());
    s.phase = phase_from(j.at("phase").get<std::string>());
    if (!j.at("cell").is_null()) {
        s.cell = cell_from(j.at("cell"));
    }
    for (const auto& st : j.at("shown")) {
        s.shown.insert(strategy_from_string(st.get<std::string>()));
    }
    for (const auto& r : j.at("rounds")) {
        RoundState rs;
        rs.number = r.at("number").get<int>();
        rs.strategy = strategy_from(r.at("strategy"));
        rs.shown_at = parse_rfc3339(r.at("shown_at").get<std::string>());
        if (!r.at("habit_key").is_null()) {
            rs.habit_key = HabitKey::parse(r.at("habit_key").get<std::string>());
        }
        rs.habit = r.at("habit").get<std::string>();
        s.rounds.push_back(std::move(rs));
    }
    s.round_cap = j.at("round_cap").get<int>();
    if (!j.at("outcome").is_null()) {
        s.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    }
    s.timeout = j.at("timeout").get<bool>();
    if (!j.at("pending").is_null()) {
        s.pending = request_from(j.at("pending"));
    }
    return s;
}

} // namespace

json snapshot_to_json(const ServerState& state) {
    const auto& e = state.engine;
    json profiles = json::array();
    for (const auto& [_, p] : e.profiles) {
        profiles.push_back({{"user", p.user_id},
                            {"values", goals_json(p.values)},
                            {"blacklist", p.blacklist},
                            {"utc_offset", p.utc_offset.to_string()}});
    }
    json ledger = json::array();
    for (const auto& [key, counts] : e.ledger.entries()) {
        ledger.push_back({{"user", key.first},
                          {"state", to_string(key.second.kind)},
                          {"engaged", key.second.engagement == Engagement::Engaged},
                          {"counts", counts}});
    }
    json habits = json::array();
    for (const auto& [user, h] : e.habits.users()) {
        json bindings = json::array();
        for (const auto& [k, b] : h.bindings) {
            bindings.push_back({{"key", k.to_string()}, {"habit", b.habit}, {"source", to_string(b.source)}});
        }
        habits.push_back({{"user", user}, {"bindings", bindings}, {"last_recommended", h.last_recommended}});
    }
    json unlocks = json::array();
    for (const auto& [user, u] : e.unlocks) {
        unlocks.push_back({{"user", user}, {"unlocked_at", format_rfc3339(u.unlocked_at)}, {"prompted", u.prompted_apps}});
    }
    json sessions = json::array();
    for (const auto& [_, s] : e.sessions) {
        sessions.push_back(session_json(s));
    }
    json heartbeats = json::array();
    for (const auto& [user, h] : state.heartbeats.entries()) {
        heartbeats.push_back({{"user", user}, {"last", format_rfc3339(h.last)}, {"service_ok", h.service_ok}});
    }
    return {{"schema_version", kSnapshotSchemaVersion},
            {"profiles", profiles},
            {"ledger", ledger},
            {"habits", habits},
            {"habit_tick", e.habits.tick()},
            {"unlocks", unlocks},
            {"sessions", sessions},
            {"next_session_seq", e.next_session_seq},
            {"heartbeats", heartbeats}};
}

ServerState snapshot_from_json(const json& j) {
    if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
        throw Error(Errc::CorruptSnapshot, "snapshot has no schema_version");
    }
    const int version = j["schema_version"].get<int>();
    if (version != kSnapshotSchemaVersion) {
        throw Error(Errc::SchemaMismatch, "snapshot schema " + std::to_string(version) + ", expected " +
                                              std::to_string(kSnapshotSchemaVersion));
    }
    try {
        ServerState state;
        auto& e = state.engine;
        for (const auto& p : j.at("profiles")) {
            UserProfile up;
            up.user_id = p.at("user").get<std::string>();
            up.values = goals_from(p.at("values"));
            up.blacklist = p.at("blacklist").get<std::set<std::string>>();
            up.utc_offset = UtcOffset::parse(p.at("utc_offset").get<std::string>());
            e.profiles.emplace(up.user_id, std::move(up));
        }
        for (const auto& l : j.at("ledger")) {
            e.ledger.set_counts(l.at("user").get<std::string>(), cell_key_from(l),
                                l.at("counts").get<StrategyLedger::Counts>());
        }
        std::map<std::string, HabitBook::UserHabits> habits;
        for (const auto& h : j.at("habits")) {
            auto& u = habits[h.at("user").get<std::string>()];
            for (const auto& b : h.at("bindings")) {
                u.bindings[HabitKey::parse(b.at("key").get<std::string>())] = HabitBinding{
                    b.at("habit").get<std::string>(), b.at("source").get<std::string>() == "UserEdit"
                                                          ? HabitSource::UserEdit
                                                          : HabitSource::Initialization};
            }
            u.last_recommended = h.at("last_recommended").get<std::map<std::string, std::uint64_t>>();
        }
        e.habits.restore(std::move(habits), j.at("habit_tick").get<std::uint64_t>());
        for (const auto& u : j.at("unlocks")) {
            e.unlocks[u.at("user").get<std::string>()] =
                UnlockSession{parse_rfc3339(u.at("unlocked_at").get<std::string>()),
                              u.at("prompted").get<std::set<std::string>>()};
        }
        for (const auto& s : j.at("sessions")) {
            auto session = session_from(s);
            e.sessions.emplace(session.session_id, std::move(session));
        }
        e.next_session_seq = j.at("next_session_seq").get<std::uint64_t>();
        std::map<std::string, HeartbeatEntry> hb;
        for (const auto& h : j.at("heartbeats")) {
            hb[h.at("user").get<std::string>()] =
                HeartbeatEntry{parse_rfc3339(h.at("last").get<std::string>()), h.at("service_ok").get<bool>()};
        }
        state.heartbeats.restore(std::move(hb));
        return state;
    } catch (const Error& err) {
        throw Error(Errc::CorruptSnapshot, err.what());
    } catch (const json::exception& err) {
        throw Error(Errc::CorruptSnapshot, err.what());
    }
}

void write_snapshot(const std::filesystem::path& path, const ServerState& state) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            throw Error(Errc::Io, "cannot write " + tmp.string());
        }
        out << snapshot_to_json(state).dump(1) << '\n';
        out.flush();
        if (!out) {
            throw Error(Errc::Io, "short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

ServerState read_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot read " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& err) {
        throw Error(Errc::CorruptSnapshot, err.what());
    }
    return snapshot_from_json(j);
}

} // namespace nudge
