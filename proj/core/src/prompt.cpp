#include "nudge/prompt.hpp"

#include "nudge/error.hpp"

#include <regex>

namespace nudge {

std::string_view to_string(GoalCategory category) {
    switch (category) {
    case GoalCategory::Career: return "Career";
    case GoalCategory::Health: return "Health";
    case GoalCategory::Life: return "Life";
    case GoalCategory::Hobbies: return "Hobbies";
    }
    return "?";
}

GoalCategory goal_category_from_string(std::string_view text) {
    for (auto c : kAllGoalCategories) {
        if (to_string(c) == text) {
            return c;
        }
    }
    throw Error(Errc::Parse, "unknown goal category '" + std::string(text) + "'");
}

std::string_view display_name(Strategy strategy) {
    switch (strategy) {
    case Strategy::Understanding: return "Understanding";
    case Strategy::Comforting: return "Comforting";
    case Strategy::Evoking: return "Evoking";
    case Strategy::ScaffoldingHabits: return "Scaffolding Habits";
    }
    return "?";
}

std::string_view to_string(PromptViolationKind kind) {
    switch (kind) {
    case PromptViolationKind::UnfilledSlot: return "UnfilledSlot";
    case PromptViolationKind::EmptySection: return "EmptySection";
    case PromptViolationKind::TooLong: return "TooLong";
    }
    return "?";
}

std::string describe_mental_state(const MentalStateCell& cell) {
    const bool engaged = cell.engagement == Engagement::Engaged;
    switch (cell.state.kind()) {
    case MentalStateKind::Boredom:
        return engaged ? "The user is engaged in an activity but feels bored by it and is losing interest."
                       : "The user is not engaged in any activity and feels bored, with nothing holding their "
                         "attention.";
    case MentalStateKind::Stress:
        return engaged ? "The user is engaged in an activity and feels stressed by it."
                       : "The user is not engaged in any activity but feels stressed.";
    case MentalStateKind::Inertia:
        return engaged ? "The user is engaged in an activity and reports no negative feeling, but is reluctant "
                         "to get going or to keep going with it."
                       : "The user is not engaged in any activity and reports no negative feeling, but is "
                         "reluctant to change what they are doing.";
    case MentalStateKind::Other:
        return engaged ? "The user is engaged in an activity and reports another negative feeling: \"" +
                             cell.state.other_text() + "\"."
                       : "The user is not engaged in any activity and reports another negative feeling: \"" +
                             cell.state.other_text() + "\".";
    }
    return {};
}

namespace {

std::string render_goals(const std::vector<GoalEntry>& goals) {
    if (goals.empty()) {
        return "No goals provided.";
    }
    std::string out;
    for (const auto& g : goals) {
        if (!out.empty()) {
            out += '\n';
        }
        out += "- ";
        out += to_string(g.category);
        out += ": ";
        out += g.goal;
        out += " (action: ";
        out += g.action;
        out += ')';
    }
    return out;
}

void check_slots(const PromptSlots& slots, PromptMode mode) {
    if (slots.habitual_minutes_today < 0) {
        throw Error(Errc::InvalidSlot, "habitual_minutes_today is negative");
    }
    if (slots.minutes_since_last_habitual && *slots.minutes_since_last_habitual < 0) {
        throw Error(Errc::InvalidSlot, "minutes_since_last_habitual is negative");
    }
    for (const auto& g : slots.goals) {
        if (g.goal.empty() || g.action.empty()) {
            throw Error(Errc::InvalidSlot, "goal entries need both a goal and an action");
        }
    }
    if (mode == PromptMode::Simple) {
        return;
    }
    if (!slots.strategy) {
        throw Error(Errc::MissingSlot, "strategy is required for a full prompt");
    }
    const bool scaffolding = *slots.strategy == Strategy::ScaffoldingHabits;
    if (scaffolding && (!slots.habit || slots.habit->empty())) {
        throw Error(Errc::MissingSlot, "habit is required for Scaffolding Habits");
    }
    if (!scaffolding && slots.habit) {
        throw Error(Errc::InvalidSlot, "habit given for a strategy other than Scaffolding Habits");
    }
    if (*slots.strategy == Strategy::Evoking && slots.goals.empty()) {
        throw Error(Errc::MissingSlot, "goals are required for Evoking");
    }
}

} // namespace

AssembledPrompt assemble_prompt(const PromptSlots& slots, const PromptTemplates& templates,
                                const PromptOptions& options) {
    check_slots(slots, options.mode);

    std::map<std::string, std::string, std::less<>> vars{
        {"app_name", slots.app_name},
        {"current_time", format_local(slots.current_time, slots.utc_offset)},
        {"location", slots.location_label},
        {"habitual_minutes", std::to_string(slots.habitual_minutes_today)},
        {"since_last", slots.minutes_since_last_habitual
                           ? std::to_string(*slots.minutes_since_last_habitual) + " minutes"
                           : std::string("first habitual check today")},
        {"mental_state", describe_mental_state(slots.cell)},
        {"goals", render_goals(slots.goals)},
        {"habit", slots.habit.value_or("")},
        {"word_cap", std::to_string(options.word_cap)},
    };

    AssembledPrompt p;
    p.task_setup = render_template(templates.get("background"), vars);
    p.optimization = render_template(templates.get("notes"), vars) + "\n\n" +
                     render_template(templates.get("output_format"), vars);
    if (options.mode == PromptMode::Full) {
        p.context = render_template(templates.get("user_data"), vars) + "\n\n" +
                    render_template(templates.get("mental_state"), vars) + "\n\n" +
                    render_template(templates.get("goals"), vars);
        p.strategy_description =
            render_template(templates.get(PromptTemplates::strategy_stem(*slots.strategy)), vars);
    } else {
        p.context = render_template(templates.get("user_data"), vars);
        p.strategy_description = render_template(templates.get("strategy.simple"), vars);
    }
    p.full_text = p.task_setup + "\n\n" + p.context + "\n\n" + p.optimization + "\n\n" + p.strategy_description;
    return p;
}

std::vector<PromptViolation> validate_filled(const AssembledPrompt& prompt, std::size_t cap) {
    std::vector<PromptViolation> out;
    static const std::regex marker(R"(\{[a-z_]+\})");
    std::smatch m;
    if (std::regex_search(prompt.full_text, m, marker)) {
        out.push_back({PromptViolationKind::UnfilledSlot, m.str()});
    }
    const std::pair<const char*, const std::string*> sections[] = {
        {"task_setup", &prompt.task_setup},
        {"context", &prompt.context},
        {"optimization", &prompt.optimization},
        {"strategy_description", &prompt.strategy_description},
    };
    for (const auto& [name, text] : sections) {
        if (text->empty()) {
            out.push_back({PromptViolationKind::EmptySection, name});
        }
    }
    if (prompt.full_text.size() > cap) {
        out.push_back({PromptViolationKind::TooLong,
                       std::to_string(prompt.full_text.size()) + " > " + std::to_string(cap) + " characters"});
    }
    return out;
}

} // namespace nudge
