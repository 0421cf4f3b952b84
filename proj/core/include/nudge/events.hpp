#pragma once

#include "nudge/strategy.hpp"
#include "nudge/time.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nudge {

// SessionClosed is written by the orchestrator when an intervention ends; it
// carries the outcome so that records can be rebuilt from the log alone.
enum class EventKind : std::uint8_t {
    ScreenUnlock,
    ScreenOff,
    AppOpen,
    AppClose,
    IntentReport,
    MentalStateReport,
    PersuasionShown,
    Decision,
    Feedback,
    HabitEdit,
    Heartbeat,
    SessionClosed,
};

enum class Intent : std::uint8_t { Habitual, Instrumental, Relax, ExitAtIntent };
enum class Decision : std::uint8_t { Quit, Continue };
enum class Feedback : std::uint8_t { Up, Down };

// HabitualPass closes a habitual visit that receives no persuasion (the
// intent-dialog-only mode).
enum class Outcome : std::uint8_t {
    ExitAtIntent,
    QuitAtRound,
    ContinuedToExhaustion,
    InstrumentalPass,
    RelaxPass,
    HabitualPass,
};

std::string_view to_string(EventKind kind);
std::string_view to_string(Intent intent);
std::string_view to_string(Decision decision);
std::string_view to_string(Feedback feedback);
std::string_view to_string(Outcome outcome);
EventKind event_kind_from_string(std::string_view text);
Intent intent_from_string(std::string_view text);
Decision decision_from_string(std::string_view text);
Feedback feedback_from_string(std::string_view text);
Outcome outcome_from_string(std::string_view text);

// One line of the event log. Payload fields are populated per kind:
//   AppOpen/AppClose: app (+ session, location on a triggering open)
//   IntentReport: session, app, intent
//   MentalStateReport: session, cell
//   PersuasionShown: session, round, strategy (absent for strategy-free rounds)
//   Decision: session, round, decision
//   Feedback: session, round, feedback
//   HabitEdit: habit_key, habit
//   Heartbeat: service_ok
//   SessionClosed: session, outcome, round (quit round), timeout
struct UsageEvent {
    std::string user_id;
    Timestamp ts{};
    EventKind kind{EventKind::Heartbeat};

    std::string app;
    std::string session_id;
    std::string location;
    std::optional<Intent> intent;
    std::optional<MentalStateCell> cell;
    std::optional<Strategy> strategy;
    int round = 0;
    std::optional<Decision> decision;
    std::optional<Feedback> feedback;
    std::string habit;
    std::string habit_key;
    std::optional<bool> service_ok;
    std::optional<Outcome> outcome;
    bool timeout = false;

    friend bool operator==(const UsageEvent&, const UsageEvent&) = default;
};

nlohmann::json to_json(const UsageEvent& e);
UsageEvent event_from_json(const nlohmann::json& j);

// One compact JSON object per line, field order fixed.
std::string to_jsonl_line(const UsageEvent& e);

std::vector<UsageEvent> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<UsageEvent>& events);

// Append-only JSONL file; every append is flushed before returning.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path);

    void append(const UsageEvent& e);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mu_;
};

} // namespace nudge
