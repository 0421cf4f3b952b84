#pragma once

#include "nudge/events.hpp"
#include "nudge/strategy.hpp"
#include "nudge/time.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace nudge {

inline constexpr int kMaxRounds = 4;

struct RoundRecord {
    int number = 0;
    std::optional<Strategy> strategy;
    std::optional<Decision> decision;
    bool thumb_up = false;
    bool thumb_down = false;

    friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

// One triggered intervention, rebuilt from the log. Records flagged timeout
// were closed without an answer and are left out of every metric.
struct InterventionRecord {
    std::string user_id;
    std::string session_id;
    std::string app;
    Timestamp start{};
    std::optional<Intent> intent;
    std::optional<MentalStateCell> cell;
    std::vector<RoundRecord> rounds;
    std::optional<Outcome> outcome;
    int quit_round = 0;
    bool timeout = false;

    bool closed() const { return outcome.has_value(); }
    bool eligible() const { return closed() && !timeout; }
    bool reached_persuasion() const { return !rounds.empty(); }
    bool any_up() const;
    bool any_down() const;

    friend bool operator==(const InterventionRecord&, const InterventionRecord&) = default;
};

// Foreground span of one app. The intent is the one reported for this open,
// or inherited from an earlier report for the same app in the same unlock.
struct UsageInterval {
    std::string app;
    Timestamp open{};
    std::optional<Timestamp> close;
    std::optional<Intent> intent;
    bool reported = false; // intent came from a dialog on this very open

    friend bool operator==(const UsageInterval&, const UsageInterval&) = default;
};

struct Ratio {
    std::uint64_t numerator = 0;
    std::uint64_t denominator = 0;

    std::optional<double> value() const {
        if (denominator == 0) {
            return std::nullopt;
        }
        return static_cast<double>(numerator) / static_cast<double>(denominator);
    }

    friend bool operator==(const Ratio&, const Ratio&) = default;
};

using RateTable = std::map<std::string, Ratio>;

enum class GroupBy : std::uint8_t { None, Round, Strategy, Cell, Engagement };

struct MetricsReport {
    std::map<std::string, std::uint64_t> outcome_counts;
    Ratio overall;
    Ratio persuasion;
    RateTable by_round;
    RateTable by_strategy;
    RateTable by_cell;
    RateTable by_engagement;
    Ratio thumbs_up;
    Ratio thumbs_down;

    nlohmann::json to_json() const;
    std::string to_csv() const;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Overall acceptance: (exits at intent + quits during persuasion) over
// (habitual visits + exits at intent). Instrumental and relaxation visits are
// excluded from both sides.
Ratio overall_acceptance(std::span<const InterventionRecord> records);
std::optional<double> overall_acceptance_rate(std::span<const InterventionRecord> records);

// None and Round are per intervention (round k: quits at k over interventions
// reaching k). Strategy, Cell and Engagement are per round shown.
RateTable persuasion_acceptance_rate(std::span<const InterventionRecord> records, GroupBy group_by);

// Share of persuaded interventions with at least one thumb up (down).
std::pair<Ratio, Ratio> thumb_ratios(std::span<const InterventionRecord> records);
std::pair<double, double> thumb_rates(std::span<const InterventionRecord> records);

MetricsReport build_report(std::span<const InterventionRecord> records);

// Running totals kept by the log as events arrive.
struct MetricCounters {
    std::map<std::string, std::uint64_t> outcome_counts;
    std::uint64_t overall_quits = 0;
    std::uint64_t overall_visits = 0;
    std::uint64_t persuaded = 0;
    std::uint64_t persuaded_quits = 0;
    std::array<std::uint64_t, kMaxRounds + 1> round_reached{};
    std::array<std::uint64_t, kMaxRounds + 1> round_quits{};
    std::map<std::string, Ratio> strategy;
    std::map<std::string, Ratio> cell;
    std::map<std::string, Ratio> engagement;
    std::uint64_t thumbs_up = 0;
    std::uint64_t thumbs_down = 0;

    MetricsReport to_report() const;
};

struct ContextStats {
    std::int64_t habitual_minutes_today = 0;
    std::optional<std::int64_t> minutes_since_last_habitual;

    friend bool operator==(const ContextStats&, const ContextStats&) = default;
};

struct DailyUsageSummary {
    std::int64_t days = 0;
    std::uint64_t opens = 0;
    std::uint64_t categorized_opens = 0;
    std::uint64_t habitual_opens = 0;
    std::int64_t usage_seconds = 0;
    double opens_per_day = 0.0;
    double usage_hours_per_day = 0.0;
    std::optional<double> habitual_proportion;

    nlohmann::json to_json() const;
};

// Append-only event store with derived indexes (intervals, records, metric
// counters). Not synchronised; callers serialise writers.
class EventLog {
public:
    // Throws OutOfOrder, OrphanClose, UnknownSession or UnknownRound; the log
    // is unchanged when it throws.
    void ingest(const UsageEvent& event);

    const std::vector<UsageEvent>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    std::size_t count(EventKind kind) const;

    std::vector<InterventionRecord> records() const;
    const InterventionRecord* find_record(const std::string& session_id) const;

    const std::vector<UsageInterval>& intervals(const std::string& user) const;
    std::optional<Timestamp> last_timestamp(const std::string& user) const;
    std::vector<std::string> users() const;

    const MetricCounters& counters() const { return counters_; }
    MetricsReport incremental_report() const { return counters_.to_report(); }

    std::int64_t max_interval_seconds(const std::string& user) const;

private:
    struct UserState {
        std::vector<UsageInterval> intervals;
        std::map<std::string, std::size_t> open_by_app;
        std::map<std::string, Intent> unlock_intents;
        Timestamp last_ts{};
        bool any = false;
        std::int64_t max_interval_seconds = 0;
    };

    void validate(const UsageEvent& e) const;
    void apply(const UsageEvent& e);
    void close_interval(UserState& u, std::size_t index, Timestamp at);
    void count_closed(const InterventionRecord& r);

    std::vector<UsageEvent> events_;
    std::array<std::size_t, 12> kind_counts_{};
    std::unordered_map<std::string, UserState> users_;
    std::vector<InterventionRecord> records_;
    std::unordered_map<std::string, std::size_t> record_index_;
    MetricCounters counters_;
};

// Habitual minutes in the local day of `now` (intervals ended by `now`,
// clipped to midnight) and minutes since the latest such habitual open.
ContextStats compute_context_stats(const EventLog& log, const std::string& user, Timestamp now, UtcOffset offset);

// Inclusive local-date range. blacklist == nullptr counts every app.
DailyUsageSummary usage_summary(const EventLog& log, const std::string& user, std::chrono::sys_days first_day,
                                std::chrono::sys_days last_day, UtcOffset offset,
                                const std::set<std::string>* blacklist = nullptr);

enum class ScaleKind : std::uint8_t { SAS, SelfEfficacy };
std::string_view to_string(ScaleKind kind);

// Instrument definitions live in configuration; see config/scales/.
struct ScaleDefinition {
    ScaleKind kind = ScaleKind::SAS;
    std::string name;
    std::size_t item_count = 0;
    int min_point = 1;
    int max_point = 6;
    std::vector<std::size_t> reverse_keyed; // 0-based item indexes

    static ScaleDefinition from_json(const nlohmann::json& j);
    static ScaleDefinition load(const std::filesystem::path& path);
};

struct ScaleResponse {
    ScaleKind scale = ScaleKind::SAS;
    std::vector<int> item_scores;
    Timestamp administered_at{};
};

// Sum of item scores after reverse-keying. Throws ItemCountMismatch or OutOfRange.
int score_scale(const ScaleResponse& response, const ScaleDefinition& definition);

struct ScreeningApplication {
    int sas_subscore = 0;
    bool willing = false;
    double weekly_hours = 0.0;
    bool has_long_travel = false;
};

enum class ExclusionReason : std::uint8_t { LowSas, Unwilling, LowUsage, LongTravel };
std::string_view to_string(ExclusionReason reason);

struct ScreeningResult {
    bool include = false;
    std::optional<ExclusionReason> reason;
};

inline constexpr int kMinSasSubscore = 15;
inline constexpr double kMinWeeklyHours = 20.0;

// Rules are checked in order; the first failing one is reported.
ScreeningResult screen_participant(const ScreeningApplication& application);

} // namespace nudge
