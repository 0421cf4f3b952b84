#pragma once

#include "nudge/analytics.hpp"
#include "nudge/orchestrator.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace nudge::sim {

// Synthetic participant. Mix arrays follow enum declaration order.
struct Persona {
    std::string user_id = "p1";
    double daily_open_rate = 10.0; // per blacklisted app
    std::array<double, 4> intent_mix{0.6, 0.2, 0.1, 0.1}; // Habitual, Instrumental, Relax, ExitAtIntent
    std::map<CellKey, double> cell_mix;                     // over the six grid cells
    double base_quit_prob = 0.2;
    std::array<double, 4> strategy_affinity{1.0, 1.0, 1.0, 1.0};
    double thumb_up_prob = 0.3;
    double thumb_down_prob = 0.1;
    double mean_usage_minutes = 8.0;
    double reopen_prob = 0.0; // chance of reopening the same app in the same unlock
    std::vector<GoalEntry> values;
    std::set<std::string> blacklist{"Social"};
    std::string location = "home";
    UtcOffset utc_offset;

    // Throws InvalidConfig.
    void validate() const;
    static Persona from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Uniform cell mix and a full set of values; handy default for tests.
Persona default_persona(std::string user_id = "p1");

struct ScenarioConfig {
    std::vector<Persona> personas;
    int days = 7;
    InterventionMode mode = InterventionMode::Full;
    std::uint64_t seed = 1;
    std::chrono::sys_days start_date{std::chrono::year{2024} / 3 / 4};
    int wake_hour = 8;
    int sleep_hour = 23;
    std::chrono::seconds round_interval{120};

    void validate() const;
    static ScenarioConfig from_json(const nlohmann::json& j);
    static ScenarioConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

struct ScenarioResult {
    std::vector<UsageEvent> events;
    std::vector<InterventionRecord> records;
    MetricsReport report;
};

// Deterministic in config (seed included). Throws InvalidConfig.
ScenarioResult run_scenario(const ScenarioConfig& config);
// Drives an existing engine instead, leaving its state for inspection. The
// engine's mode and round interval should match the config.
ScenarioResult run_scenario(const ScenarioConfig& config, Engine& engine);

// Independent random streams, one per purpose, so that the same seed gives
// the same arrivals and answers whatever the mode.
enum class Stream : std::uint8_t { Arrivals, Intents, Cells, Decisions, Feedback, Durations };

class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t persona_index, Stream stream);
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double exponential(double mean);
    // Index drawn from weights that sum to one.
    std::size_t pick(const double* weights, std::size_t n);

private:
    std::mt19937_64 engine_;
};

struct IntentStage {};
struct MentalStateStage {};
struct RoundStage {
    int round = 1;
};
using Stage = std::variant<IntentStage, MentalStateStage, RoundStage>;
using PersonaDecision = std::variant<Intent, CellKey, Decision>;

// clamp(base_quit_prob * affinity(strategy), 0, 1); no strategy means affinity 1.
double round_quit_probability(const Persona& persona, std::optional<Strategy> strategy);

PersonaDecision persona_decide(const Persona& persona, const Stage& stage, std::optional<Strategy> strategy,
                               Rng& rng);

// Probability that a habitual visit ends with a quit during persuasion:
// every applicable strategy of the drawn cell is shown in turn until a quit.
double expected_persuasion_acceptance(const Persona& persona, InterventionMode mode);

} // namespace nudge::sim
