#include "nudge/events.hpp"

#include "nudge/error.hpp"

#include <array>

namespace nudge {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::array<E, N>& values, const char* what) {
    for (auto v : values) {
        if (to_string(v) == text) {
            return v;
        }
    }
    throw Error(Errc::Parse, std::string("unknown ") + what + " '" + std::string(text) + "'");
}

constexpr std::array kEventKinds{
    EventKind::ScreenUnlock, EventKind::ScreenOff,       EventKind::AppOpen,  EventKind::AppClose,
    EventKind::IntentReport, EventKind::MentalStateReport, EventKind::PersuasionShown, EventKind::Decision,
    EventKind::Feedback,     EventKind::HabitEdit,       EventKind::Heartbeat, EventKind::SessionClosed,
};
constexpr std::array kIntents{Intent::Habitual, Intent::Instrumental, Intent::Relax, Intent::ExitAtIntent};
constexpr std::array kDecisions{Decision::Quit, Decision::Continue};
constexpr std::array kFeedbacks{Feedback::Up, Feedback::Down};
constexpr std::array kOutcomes{Outcome::ExitAtIntent, Outcome::QuitAtRound,  Outcome::ContinuedToExhaustion,
                               Outcome::InstrumentalPass, Outcome::RelaxPass, Outcome::HabitualPass};

} // namespace

std::string_view to_string(EventKind kind) {
    switch (kind) {
    case EventKind::ScreenUnlock: return "ScreenUnlock";
    case EventKind::ScreenOff: return "ScreenOff";
    case EventKind::AppOpen: return "AppOpen";
    case EventKind::AppClose: return "AppClose";
    case EventKind::IntentReport: return "IntentReport";
    case EventKind::MentalStateReport: return "MentalStateReport";
    case EventKind::PersuasionShown: return "PersuasionShown";
    case EventKind::Decision: return "Decision";
    case EventKind::Feedback: return "Feedback";
    case EventKind::HabitEdit: return "HabitEdit";
    case EventKind::Heartbeat: return "Heartbeat";
    case EventKind::SessionClosed: return "SessionClosed";
    }
    return "?";
}

std::string_view to_string(Intent intent) {
    switch (intent) {
    case Intent::Habitual: return "Habitual";
    case Intent::Instrumental: return "Instrumental";
    case Intent::Relax: return "Relax";
    case Intent::ExitAtIntent: return "ExitAtIntent";
    }
    return "?";
}

std::string_view to_string(Decision decision) { return decision == Decision::Quit ? "Quit" : "Continue"; }
std::string_view to_string(Feedback feedback) { return feedback == Feedback::Up ? "Up" : "Down"; }

std::string_view to_string(Outcome outcome) {
    switch (outcome) {
    case Outcome::ExitAtIntent: return "ExitAtIntent";
    case Outcome::QuitAtRound: return "QuitAtRound";
    case Outcome::ContinuedToExhaustion: return "ContinuedToExhaustion";
    case Outcome::InstrumentalPass: return "InstrumentalPass";
    case Outcome::RelaxPass: return "RelaxPass";
    case Outcome::HabitualPass: return "HabitualPass";
    }
    return "?";
}

EventKind event_kind_from_string(std::string_view text) { return parse_enum(text, kEventKinds, "event kind"); }
Intent intent_from_string(std::string_view text) { return parse_enum(text, kIntents, "intent"); }
Decision decision_from_string(std::string_view text) { return parse_enum(text, kDecisions, "decision"); }
Feedback feedback_from_string(std::string_view text) { return parse_enum(text, kFeedbacks, "feedback"); }
Outcome outcome_from_string(std::string_view text) { return parse_enum(text, kOutcomes, "outcome"); }

namespace {

nlohmann::ordered_json to_ordered_json(const UsageEvent& e) {
    nlohmann::ordered_json j;
    j["user"] = e.user_id;
    j["ts"] = format_rfc3339(e.ts);
    j["kind"] = to_string(e.kind);
    if (!e.app.empty()) j["app"] = e.app;
    if (!e.session_id.empty()) j["session"] = e.session_id;
    if (!e.location.empty()) j["location"] = e.location;
    if (e.intent) j["intent"] = to_string(*e.intent);
    if (e.cell) {
        j["state"] = to_string(e.cell->state.kind());
        j["engaged"] = e.cell->engagement == Engagement::Engaged;
        if (!e.cell->state.other_text().empty()) j["other_text"] = e.cell->state.other_text();
    }
    if (e.strategy) j["strategy"] = to_string(*e.strategy);
    if (e.round != 0) j["round"] = e.round;
    if (e.decision) j["decision"] = to_string(*e.decision);
    if (e.feedback) j["feedback"] = to_string(*e.feedback);
    if (!e.habit_key.empty()) j["habit_key"] = e.habit_key;
    if (!e.habit.empty()) j["habit"] = e.habit;
    if (e.service_ok) j["service_ok"] = *e.service_ok;
    if (e.outcome) j["outcome"] = to_string(*e.outcome);
    if (e.timeout) j["timeout"] = true;
    return j;
}

} // namespace

nlohmann::json to_json(const UsageEvent& e) {
    return nlohmann::json::parse(to_ordered_json(e).dump());
}

UsageEvent event_from_json(const nlohmann::json& j) {
    try {
        UsageEvent e;
        e.user_id = j.at("user").get<std::string>();
        e.ts = parse_rfc3339(j.at("ts").get<std::string>());
        e.kind = event_kind_from_string(j.at("kind").get<std::string>());
        e.app = j.value("app", "");
        e.session_id = j.value("session", "");
        e.location = j.value("location", "");
        if (j.contains("intent")) e.intent = intent_from_string(j["intent"].get<std::string>());
        if (j.contains("state")) {
            const auto kind = mental_state_kind_from_string(j["state"].get<std::string>());
            const bool engaged = j.value("engaged", false);
            e.cell = MentalStateCell{MentalState::of(kind, j.value("other_text", "")),
                                     engaged ? Engagement::Engaged : Engagement::NotEngaged};
        }
        if (j.contains("strategy")) e.strategy = strategy_from_string(j["strategy"].get<std::string>());
        e.round = j.value("round", 0);
        if (j.contains("decision")) e.decision = decision_from_string(j["decision"].get<std::string>());
        if (j.contains("feedback")) e.feedback = feedback_from_string(j["feedback"].get<std::string>());
        e.habit_key = j.value("habit_key", "");
        e.habit = j.value("habit", "");
        if (j.contains("service_ok")) e.service_ok = j["service_ok"].get<bool>();
        if (j.contains("outcome")) e.outcome = outcome_from_string(j["outcome"].get<std::string>());
        e.timeout = j.value("timeout", false);
        if (e.user_id.empty()) {
            throw Error(Errc::Parse, "event without user");
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::Parse, std::string("malformed event: ") + ex.what());
    } catch (const Error& ex) {
        if (ex.code() == Errc::Parse) {
            throw;
        }
        throw Error(Errc::Parse, ex.what());
    }
}

std::string to_jsonl_line(const UsageEvent& e) {
    return to_ordered_json(e).dump();
}

std::vector<UsageEvent> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot read " + path.string());
    }
    std::vector<UsageEvent> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        try {
            out.push_back(event_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(Errc::Parse, path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
        } catch (const Error& ex) {
            throw Error(Errc::Parse, path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<UsageEvent>& events) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::Io, "cannot write " + path.string());
    }
    for (const auto& e : events) {
        out << to_jsonl_line(e) << '\n';
    }
    if (!out) {
        throw Error(Errc::Io, "write failed for " + path.string());
    }
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) {
        throw Error(Errc::Io, "cannot open " + path.string() + " for append");
    }
}

void JsonlWriter::append(const UsageEvent& e) {
    const std::string line = to_jsonl_line(e);
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
    if (!out_) {
        throw Error(Errc::Io, "append failed for " + path_.string());
    }
}

} // namespace nudge
