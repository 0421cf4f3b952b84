#pragma once

#include "nudge/analytics.hpp"
#include "nudge/events.hpp"
#include "nudge/gateway.hpp"
#include "nudge/prompt.hpp"
#include "nudge/strategy.hpp"
#include "nudge/time.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace nudge {

// Baseline: intent dialog only. Simple: persuasion without mental state or
// strategy in the prompt. Full: everything.
enum class InterventionMode : std::uint8_t { Baseline, Simple, Full };
std::string_view to_string(InterventionMode mode);
InterventionMode intervention_mode_from_string(std::string_view text);

struct UserProfile {
    std::string user_id;
    std::vector<GoalEntry> values; // at most one per category, in category order
    std::set<std::string> blacklist;
    UtcOffset utc_offset;

    friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

// Duplicate categories resolve last-write-wins. Throws MalformedValue (empty
// goal or action, or no values at all) and EmptyBlacklist.
UserProfile make_profile(std::string user_id, const std::vector<GoalEntry>& values,
                         std::set<std::string> blacklist, UtcOffset offset = {});

// Context a habit is bound to: reported feeling, place and local hour.
struct HabitKey {
    MentalStateKind state{MentalStateKind::Inertia};
    std::string location;
    int hour = 0;

    // "Inertia|dormitory|22"
    std::string to_string() const;
    static HabitKey parse(std::string_view text);

    friend auto operator<=>(const HabitKey&, const HabitKey&) = default;
};

enum class HabitSource : std::uint8_t { Initialization, UserEdit };
std::string_view to_string(HabitSource source);

struct HabitBinding {
    std::string habit;
    HabitSource source = HabitSource::Initialization;

    friend bool operator==(const HabitBinding&, const HabitBinding&) = default;
};

class HabitBook {
public:
    struct UserHabits {
        std::map<HabitKey, HabitBinding> bindings;
        std::map<std::string, std::uint64_t> last_recommended; // action -> recommendation tick

        friend bool operator==(const UserHabits&, const UserHabits&) = default;
    };

    std::optional<HabitBinding> find(const std::string& user, const HabitKey& key) const;

    // The bound habit for key, or else the least recently recommended action
    // from the profile (ties in category order), which then becomes bound.
    // Throws NoActions when the profile lists no actions.
    std::string select(const UserProfile& profile, const HabitKey& key);

    // Throws UnknownKey when nothing is bound to key.
    void edit(const std::string& user, const HabitKey& key, std::string habit);
    bool remove(const std::string& user, const HabitKey& key);

    const std::map<std::string, UserHabits>& users() const { return users_; }
    std::uint64_t tick() const { return tick_; }
    void restore(std::map<std::string, UserHabits> users, std::uint64_t tick);

    friend bool operator==(const HabitBook&, const HabitBook&) = default;

private:
    std::map<std::string, UserHabits> users_;
    std::uint64_t tick_ = 0;
};

struct UnlockSession {
    Timestamp unlocked_at{};
    std::set<std::string> prompted_apps;

    friend bool operator==(const UnlockSession&, const UnlockSession&) = default;
};

enum class SessionPhase : std::uint8_t { AwaitIntent, AwaitMentalState, Persuading, Closed };
std::string_view to_string(SessionPhase phase);

struct RoundState {
    int number = 0;
    std::optional<Strategy> strategy;
    Timestamp shown_at{};
    std::optional<HabitKey> habit_key;
    std::string habit;

    friend bool operator==(const RoundState&, const RoundState&) = default;
};

struct InterventionSession {
    std::string session_id;
    std::string user_id;
    std::string app;
    std::string location;
    Timestamp opened_at{};
    Timestamp last_activity{};
    SessionPhase phase = SessionPhase::AwaitIntent;
    std::optional<MentalStateCell> cell;
    StrategySet shown;
    std::vector<RoundState> rounds;
    int round_cap = 0;
    std::optional<Outcome> outcome;
    bool timeout = false;
    std::optional<GenerationRequest> pending; // generated text not yet fetched

    int current_round() const { return static_cast<int>(rounds.size()); }

    friend bool operator==(const InterventionSession&, const InterventionSession&) = default;
};

enum class FeelingKind : std::uint8_t { Stress, Boredom, None, Other };

struct Feeling {
    FeelingKind kind = FeelingKind::None;
    std::string text; // Other only

    static Feeling from_string(std::string_view kind, std::string text = {});
};

// "None" is inertia; "Other" carries the user's own words.
MentalState to_mental_state(const Feeling& feeling);

struct NoAction {
    friend bool operator==(const NoAction&, const NoAction&) = default;
};
struct ShowIntentDialog {
    std::string session_id;
    friend bool operator==(const ShowIntentDialog&, const ShowIntentDialog&) = default;
};
using OpenAction = std::variant<NoAction, ShowIntentDialog>;

enum class IntentStep : std::uint8_t { AskMentalState, Closed };

struct NotYet {};
struct NextRound {
    GenerationRequest request;
};
struct Exhausted {};
using TickResult = std::variant<NotYet, NextRound, Exhausted>;

struct EngineConfig {
    InterventionMode mode = InterventionMode::Full;
    std::chrono::seconds round_interval{120};
    std::chrono::seconds orphan_timeout{30 * 60};
    PromptOptions prompt;
    std::size_t prompt_cap = kDefaultPromptCap;
    std::chrono::milliseconds generation_deadline{10'000};
};

// Everything the engine keeps besides the event log.
struct EngineState {
    std::map<std::string, UserProfile> profiles;
    StrategyLedger ledger;
    HabitBook habits;
    std::map<std::string, UnlockSession> unlocks;
    std::map<std::string, InterventionSession> sessions; // live ones plus each user's last closed one
    std::uint64_t next_session_seq = 1;

    friend bool operator==(const EngineState&, const EngineState&) = default;
};

using EventSink = std::function<void(const UsageEvent&)>;

// Drives interventions from trigger to outcome. All public operations are
// serialised on one mutex; generation happens outside, on the returned
// GenerationRequest.
class Engine {
public:
    explicit Engine(EngineConfig config = {}, std::shared_ptr<TemplateStore> templates = nullptr);

    const EngineConfig& config() const { return config_; }

    // Called after each event is accepted by the in-memory log.
    void set_event_sink(EventSink sink);

    UserProfile initialize_profile(const std::string& user, const std::vector<GoalEntry>& values,
                                   std::set<std::string> blacklist, UtcOffset offset = {});

    // Client-reported events: ScreenUnlock, ScreenOff, AppOpen, AppClose, Heartbeat.
    OpenAction handle_client_event(const UsageEvent& event);

    void on_screen_unlock(const std::string& user, Timestamp now);
    void on_screen_off(const std::string& user, Timestamp now);
    OpenAction on_app_open(const std::string& user, const std::string& app, Timestamp now,
                           const std::string& location = {});
    void on_app_close(const std::string& user, const std::string& app, Timestamp now);
    void on_heartbeat(const std::string& user, bool service_ok, Timestamp now);

    IntentStep submit_intent(const std::string& session_id, Intent intent, Timestamp now);
    GenerationRequest submit_mental_state(const std::string& session_id, Engagement engagement,
                                          const Feeling& feeling, Timestamp now);
    // target_round, when given, is the round the caller believes is current;
    // a mismatch marks the tick stale and yields NotYet.
    TickResult on_round_tick(const std::string& session_id, Timestamp now,
                             std::optional<int> target_round = std::nullopt);
    void submit_decision(const std::string& session_id, Decision decision, Timestamp now);
    void submit_feedback(const std::string& session_id, int round, Feedback feedback, Timestamp now);

    std::string select_habit(const std::string& user, const HabitKey& key);
    void edit_habit(const std::string& user, const HabitKey& key, std::string habit, Timestamp now);

    // Closes sessions idle longer than the orphan timeout, flagged timeout.
    std::vector<std::string> expire_sessions(Timestamp now);

    // Ticks every persuading session; returns the ones that advanced or ended.
    std::vector<std::pair<std::string, TickResult>> tick_all(Timestamp now);

    std::optional<GenerationRequest> take_pending(const std::string& session_id);
    std::optional<GenerationRequest> pending(const std::string& session_id) const;

    std::optional<InterventionSession> session(const std::string& session_id) const;
    std::optional<std::string> live_session(const std::string& user) const;
    std::optional<UnlockSession> unlock(const std::string& user) const;
    std::optional<UserProfile> profile(const std::string& user) const;
    std::optional<HabitBinding> habit_binding(const std::string& user, const HabitKey& key) const;
    StrategyLedger ledger() const;

    // Read access to the log under the engine lock.
    template <typename Fn>
    auto with_log(Fn&& fn) const {
        std::lock_guard lock(mu_);
        return fn(log_);
    }
    MetricsReport report() const;
    std::vector<InterventionRecord> records() const;

    EngineState export_state() const;
    // Replaces all state; events are re-ingested into a fresh log without
    // being passed to the sink. Where the log is ahead of the snapshot the log
    // wins: sessions it closed are closed, strategy counts take the larger
    // value, and sessions still open there but unknown to (or behind in) the
    // snapshot are closed as timed out. Those closing events reach the sink.
    void restore(EngineState state, const std::vector<UsageEvent>& events);

private:
    InterventionSession& find_session(const std::string& session_id);
    const UserProfile& find_profile(const std::string& user) const;
    void require_in_order(const std::string& user, Timestamp now) const;
    void emit(UsageEvent e);
    void close_session(InterventionSession& s, Outcome outcome, bool timeout, Timestamp now);
    void abandon(InterventionSession& s, Timestamp now);
    GenerationRequest start_round(InterventionSession& s, Timestamp now);
    TickResult tick_locked(InterventionSession& s, Timestamp now, std::optional<int> target_round);
    std::shared_ptr<const PromptTemplates> templates() const;

    EngineConfig config_;
    std::shared_ptr<TemplateStore> templates_;
    EventSink sink_;
    mutable std::mutex mu_;
    EngineState state_;
    std::map<std::string, std::string> live_by_user_;
    std::map<std::string, std::string> last_closed_by_user_;
    EventLog log_;
};

} // namespace nudge
