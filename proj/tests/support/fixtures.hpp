#pragma once

#include "nudge/orchestrator.hpp"
#include "nudge/prompt.hpp"
#include "nudge/time.hpp"

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

inline nudge::Timestamp at(const char* rfc3339) {
    return nudge::parse_rfc3339(rfc3339);
}

// Applicable strategies per cell, written out literally.
inline const std::map<nudge::CellKey, std::vector<nudge::Strategy>>& strategy_table() {
    using nudge::Engagement;
    using nudge::MentalStateKind;
    constexpr auto U = nudge::Strategy::Understanding;
    constexpr auto C = nudge::Strategy::Comforting;
    constexpr auto E = nudge::Strategy::Evoking;
    constexpr auto S = nudge::Strategy::ScaffoldingHabits;
    static const std::map<nudge::CellKey, std::vector<nudge::Strategy>> table{
        {{MentalStateKind::Boredom, Engagement::Engaged}, {U, C, E, S}},
        {{MentalStateKind::Boredom, Engagement::NotEngaged}, {U, C, S}},
        {{MentalStateKind::Stress, Engagement::Engaged}, {U, C, E, S}},
        {{MentalStateKind::Stress, Engagement::NotEngaged}, {U, C, S}},
        {{MentalStateKind::Inertia, Engagement::Engaged}, {U, E, S}},
        {{MentalStateKind::Inertia, Engagement::NotEngaged}, {U, S}},
        {{MentalStateKind::Other, Engagement::Engaged}, {U, C, E, S}},
        {{MentalStateKind::Other, Engagement::NotEngaged}, {U, C, S}},
    };
    return table;
}

inline std::vector<nudge::GoalEntry> four_values() {
    using nudge::GoalCategory;
    return {
        {GoalCategory::Career, "pass IELTS", "memorize vocabulary"},
        {GoalCategory::Health, "sleep before midnight", "neck stretches"},
        {GoalCategory::Life, "call parents weekly", "text mom"},
        {GoalCategory::Hobbies, "learn guitar", "practice one chord"},
    };
}

inline nudge::PromptSlots slots_for(nudge::MentalStateCell cell, std::optional<nudge::Strategy> strategy) {
    nudge::PromptSlots s;
    s.app_name = "Douyin";
    s.current_time = at("2024-03-05T14:30:00Z");
    s.utc_offset = nudge::UtcOffset::parse("+08:00");
    s.location_label = "library";
    s.habitual_minutes_today = 45;
    s.minutes_since_last_habitual = 12;
    s.cell = std::move(cell);
    s.goals = four_values();
    s.strategy = strategy;
    if (strategy == nudge::Strategy::ScaffoldingHabits) {
        s.habit = "neck stretches";
    }
    return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("nudge-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace fixtures

namespace fixtures {

struct GoldenCase {
    std::string name;
    nudge::PromptSlots slots;
};

// Six grid cells, two strategies each; together they cover all four strategies.
inline std::vector<GoldenCase> golden_cases() {
    using nudge::Engagement;
    using nudge::MentalState;
    using nudge::Strategy;
    struct Row {
        const char* cell;
        MentalState state;
        Engagement engagement;
        Strategy a;
        Strategy b;
    };
    const Row rows[] = {
        {"boredom_engaged", MentalState::boredom(), Engagement::Engaged, Strategy::Understanding, Strategy::Evoking},
        {"boredom_not_engaged", MentalState::boredom(), Engagement::NotEngaged, Strategy::Comforting,
         Strategy::ScaffoldingHabits},
        {"stress_engaged", MentalState::stress(), Engagement::Engaged, Strategy::Comforting, Strategy::Evoking},
        {"stress_not_engaged", MentalState::stress(), Engagement::NotEngaged, Strategy::Understanding,
         Strategy::ScaffoldingHabits},
        {"inertia_engaged", MentalState::inertia(), Engagement::Engaged, Strategy::Evoking,
         Strategy::ScaffoldingHabits},
        {"inertia_not_engaged", MentalState::inertia(), Engagement::NotEngaged, Strategy::Understanding,
         Strategy::ScaffoldingHabits},
    };
    auto stem = [](Strategy s) {
        switch (s) {
        case Strategy::Understanding: return "understanding";
        case Strategy::Comforting: return "comforting";
        case Strategy::Evoking: return "evoking";
        case Strategy::ScaffoldingHabits: return "scaffolding_habits";
        }
        return "?";
    };
    std::vector<GoldenCase> out;
    for (const auto& r : rows) {
        for (auto s : {r.a, r.b}) {
            out.push_back({std::string(r.cell) + "__" + stem(s), slots_for({r.state, r.engagement}, s)});
        }
    }
    return out;
}

} // namespace fixtures
