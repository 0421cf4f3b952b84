#include "nudge/strategy.hpp"

#include "nudge/error.hpp"

namespace nudge {

std::string_view to_string(MentalStateKind kind) {
    switch (kind) {
    case MentalStateKind::Boredom: return "Boredom";
    case MentalStateKind::Stress: return "Stress";
    case MentalStateKind::Inertia: return "Inertia";
    case MentalStateKind::Other: return "Other";
    }
    return "?";
}

std::string_view to_string(Engagement engagement) {
    return engagement == Engagement::Engaged ? "Engaged" : "NotEngaged";
}

std::string_view to_string(Strategy strategy) {
    switch (strategy) {
    case Strategy::Understanding: return "Understanding";
    case Strategy::Comforting: return "Comforting";
    case Strategy::Evoking: return "Evoking";
    case Strategy::ScaffoldingHabits: return "ScaffoldingHabits";
    }
    return "?";
}

MentalStateKind mental_state_kind_from_string(std::string_view text) {
    for (auto k : {MentalStateKind::Boredom, MentalStateKind::Stress, MentalStateKind::Inertia, MentalStateKind::Other}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    throw Error(Errc::Parse, "unknown mental state '" + std::string(text) + "'");
}

Engagement engagement_from_string(std::string_view text) {
    if (text == "Engaged") {
        return Engagement::Engaged;
    }
    if (text == "NotEngaged") {
        return Engagement::NotEngaged;
    }
    throw Error(Errc::Parse, "unknown engagement '" + std::string(text) + "'");
}

Strategy strategy_from_string(std::string_view text) {
    for (auto s : kAllStrategies) {
        if (to_string(s) == text) {
            return s;
        }
    }
    throw Error(Errc::Parse, "unknown strategy '" + std::string(text) + "'");
}

MentalState MentalState::other(std::string text) {
    if (text.empty()) {
        throw Error(Errc::InvalidArgument, "Other mental state requires a description");
    }
    return MentalState(MentalStateKind::Other, std::move(text));
}

MentalState MentalState::of(MentalStateKind kind, std::string other_text) {
    if (kind == MentalStateKind::Other) {
        return other(std::move(other_text));
    }
    if (!other_text.empty()) {
        throw Error(Errc::InvalidArgument, "free text is only allowed for the Other mental state");
    }
    return MentalState(kind, {});
}

std::string to_string(CellKey key) {
    return std::string(to_string(key.kind)) + "/" + std::string(to_string(key.engagement));
}

std::vector<Strategy> StrategySet::to_vector() const {
    std::vector<Strategy> out;
    for (auto s : kAllStrategies) {
        if (contains(s)) {
            out.push_back(s);
        }
    }
    return out;
}

StrategySet applicable_set(CellKey cell) {
    // Understanding and habit scaffolding apply everywhere. Comforting needs a
    // negative feeling, so inertia is left out. Evoking needs an ongoing activity.
    StrategySet set{Strategy::Understanding, Strategy::ScaffoldingHabits};
    if (cell.kind != MentalStateKind::Inertia) {
        set.insert(Strategy::Comforting);
    }
    if (cell.engagement == Engagement::Engaged) {
        set.insert(Strategy::Evoking);
    }
    return set;
}

std::vector<Strategy> applicable_strategies(CellKey cell) {
    return applicable_set(cell).to_vector();
}

std::uint64_t StrategyLedger::count(const std::string& user, CellKey cell, Strategy strategy) const {
    return counts(user, cell)[static_cast<std::size_t>(canonical_rank(strategy))];
}

StrategyLedger::Counts StrategyLedger::counts(const std::string& user, CellKey cell) const {
    const auto it = counts_.find(Key{user, cell});
    return it == counts_.end() ? Counts{} : it->second;
}

std::optional<Strategy> StrategyLedger::next_strategy(const std::string& user, CellKey cell,
                                                      StrategySet already_shown) const {
    const StrategySet allowed = applicable_set(cell);
    if (!already_shown.is_subset_of(allowed)) {
        throw Error(Errc::NotApplicable, "already-shown set contains a strategy not applicable to " + to_string(cell));
    }
    const Counts current = counts(user, cell);
    std::optional<Strategy> best;
    for (auto s : kAllStrategies) {
        if (!allowed.contains(s) || already_shown.contains(s)) {
            continue;
        }
        const auto idx = static_cast<std::size_t>(canonical_rank(s));
        if (!best || current[idx] < current[static_cast<std::size_t>(canonical_rank(*best))]) {
            best = s;
        }
    }
    return best;
}

void StrategyLedger::record_shown(const std::string& user, CellKey cell, Strategy strategy) {
    if (!applicable_set(cell).contains(strategy)) {
        throw Error(Errc::NotApplicable,
                    std::string(to_string(strategy)) + " is not applicable to " + to_string(cell));
    }
    counts_[Key{user, cell}][static_cast<std::size_t>(canonical_rank(strategy))] += 1;
}

void StrategyLedger::set_counts(const std::string& user, CellKey cell, const Counts& counts) {
    const StrategySet allowed = applicable_set(cell);
    for (auto s : kAllStrategies) {
        if (!allowed.contains(s) && counts[static_cast<std::size_t>(canonical_rank(s))] != 0) {
            throw Error(Errc::NotApplicable, "ledger counts for inapplicable strategy in " + to_string(cell));
        }
    }
    counts_[Key{user, cell}] = counts;
}

} // namespace nudge
