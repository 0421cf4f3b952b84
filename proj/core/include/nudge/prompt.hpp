#pragma once

#include "nudge/strategy.hpp"
#include "nudge/time.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nudge {

enum class GoalCategory : std::uint8_t { Career, Health, Life, Hobbies };

inline constexpr std::array<GoalCategory, 4> kAllGoalCategories{GoalCategory::Career, GoalCategory::Health,
                                                                GoalCategory::Life, GoalCategory::Hobbies};

std::string_view to_string(GoalCategory category);
GoalCategory goal_category_from_string(std::string_view text);

struct GoalEntry {
    GoalCategory category{GoalCategory::Career};
    std::string goal;
    std::string action;

    friend bool operator==(const GoalEntry&, const GoalEntry&) = default;
};

// Everything the prompt needs to know about the moment of intervention.
struct PromptSlots {
    std::string app_name;
    Timestamp current_time{};
    UtcOffset utc_offset{};
    std::string location_label;
    std::int64_t habitual_minutes_today = 0;
    std::optional<std::int64_t> minutes_since_last_habitual; // nullopt: first habitual check today
    MentalStateCell cell;
    std::vector<GoalEntry> goals;
    std::optional<std::string> habit; // present iff strategy is ScaffoldingHabits
    std::optional<Strategy> strategy; // absent only for the strategy-free (Simple) prompt

    friend bool operator==(const PromptSlots&, const PromptSlots&) = default;
};

struct AssembledPrompt {
    std::string task_setup;
    std::string context;
    std::string optimization;
    std::string strategy_description;
    std::string full_text;

    friend bool operator==(const AssembledPrompt&, const AssembledPrompt&) = default;
};

// Full: all four parts including mental state and strategy description.
// Simple: physical context only, with a generic persuasion instruction.
enum class PromptMode : std::uint8_t { Full, Simple };

inline constexpr std::size_t kDefaultPromptCap = 4000;
inline constexpr std::size_t kDefaultWordCap = 70;

// Section templates keyed by file stem ("background", "strategy.evoking", ...).
// Placeholders are written {name}.
class PromptTemplates {
public:
    static PromptTemplates defaults();

    // Loads <dir>/<stem>.txt for every known stem; missing files keep the
    // built-in text.
    static PromptTemplates load_dir(const std::filesystem::path& dir);
    void write_dir(const std::filesystem::path& dir) const;

    const std::string& get(std::string_view stem) const;
    void set(std::string_view stem, std::string text);
    const std::map<std::string, std::string, std::less<>>& all() const { return sections_; }

    static std::vector<std::string> known_stems();
    static std::string strategy_stem(Strategy strategy);

    friend bool operator==(const PromptTemplates&, const PromptTemplates&) = default;

private:
    std::map<std::string, std::string, std::less<>> sections_;
};

// Re-reads a template directory when any file in it changes.
class TemplateStore {
public:
    explicit TemplateStore(std::optional<std::filesystem::path> dir);

    std::shared_ptr<const PromptTemplates> current();
    void reload();

private:
    std::filesystem::file_time_type newest_mtime() const;

    std::optional<std::filesystem::path> dir_;
    std::mutex mu_;
    std::shared_ptr<const PromptTemplates> templates_;
    std::filesystem::file_time_type loaded_mtime_{};
    std::chrono::steady_clock::time_point last_check_{};
};

// Replaces {name} markers from vars. Throws MissingSlot for a marker with no value.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& vars);

std::string_view display_name(Strategy strategy);

// Canonical one-sentence description of a cell; Other cells quote the user's text.
std::string describe_mental_state(const MentalStateCell& cell);

struct PromptOptions {
    PromptMode mode = PromptMode::Full;
    std::size_t word_cap = kDefaultWordCap;
};

// Throws MissingSlot (habit absent for ScaffoldingHabits, goals empty for
// Evoking, no strategy in Full mode) or InvalidSlot (negative durations, habit
// given for another strategy).
AssembledPrompt assemble_prompt(const PromptSlots& slots, const PromptTemplates& templates,
                                const PromptOptions& options = {});

enum class PromptViolationKind : std::uint8_t { UnfilledSlot, EmptySection, TooLong };

struct PromptViolation {
    PromptViolationKind kind;
    std::string detail;
};

std::string_view to_string(PromptViolationKind kind);

std::vector<PromptViolation> validate_filled(const AssembledPrompt& prompt, std::size_t cap = kDefaultPromptCap);

} // namespace nudge
