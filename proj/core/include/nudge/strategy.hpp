#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nudge {

enum class MentalStateKind : std::uint8_t { Boredom, Stress, Inertia, Other };
enum class Engagement : std::uint8_t { Engaged, NotEngaged };

// Declaration order is the canonical rank used for tie-breaking.
enum class Strategy : std::uint8_t { Understanding, Comforting, Evoking, ScaffoldingHabits };

inline constexpr std::array<Strategy, 4> kAllStrategies{
    Strategy::Understanding, Strategy::Comforting, Strategy::Evoking, Strategy::ScaffoldingHabits};

constexpr int canonical_rank(Strategy s) { return static_cast<int>(s); }

std::string_view to_string(MentalStateKind kind);
std::string_view to_string(Engagement engagement);
std::string_view to_string(Strategy strategy);
MentalStateKind mental_state_kind_from_string(std::string_view text);
Engagement engagement_from_string(std::string_view text);
Strategy strategy_from_string(std::string_view text);

// A reported feeling. Free text is carried only by the Other kind, and must be
// non-empty there.
class MentalState {
public:
    static MentalState boredom() { return MentalState(MentalStateKind::Boredom, {}); }
    static MentalState stress() { return MentalState(MentalStateKind::Stress, {}); }
    static MentalState inertia() { return MentalState(MentalStateKind::Inertia, {}); }
    static MentalState other(std::string text);
    static MentalState of(MentalStateKind kind, std::string other_text = {});

    MentalStateKind kind() const { return kind_; }
    const std::string& other_text() const { return other_text_; }

    friend bool operator==(const MentalState&, const MentalState&) = default;

private:
    MentalState(MentalStateKind kind, std::string text) : kind_(kind), other_text_(std::move(text)) {}

    MentalStateKind kind_;
    std::string other_text_;
};

// Grid address of a cell, ignoring any free text. Ledgers and strategy tables
// are keyed by this.
struct CellKey {
    MentalStateKind kind{MentalStateKind::Inertia};
    Engagement engagement{Engagement::NotEngaged};

    friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

std::string to_string(CellKey key);

// The six grid cells followed by the two Other variants.
inline constexpr std::array<CellKey, 8> kAllCells{{
    {MentalStateKind::Boredom, Engagement::Engaged},
    {MentalStateKind::Boredom, Engagement::NotEngaged},
    {MentalStateKind::Stress, Engagement::Engaged},
    {MentalStateKind::Stress, Engagement::NotEngaged},
    {MentalStateKind::Inertia, Engagement::Engaged},
    {MentalStateKind::Inertia, Engagement::NotEngaged},
    {MentalStateKind::Other, Engagement::Engaged},
    {MentalStateKind::Other, Engagement::NotEngaged},
}};

struct MentalStateCell {
    MentalState state = MentalState::inertia();
    Engagement engagement{Engagement::NotEngaged};

    CellKey key() const { return {state.kind(), engagement}; }

    friend bool operator==(const MentalStateCell&, const MentalStateCell&) = default;
};

// Small value set over the four strategies.
class StrategySet {
public:
    StrategySet() = default;
    StrategySet(std::initializer_list<Strategy> items) {
        for (auto s : items) {
            insert(s);
        }
    }

    bool contains(Strategy s) const { return (bits_ >> canonical_rank(s)) & 1U; }
    void insert(Strategy s) { bits_ |= static_cast<std::uint8_t>(1U << canonical_rank(s)); }
    std::size_t size() const { return static_cast<std::size_t>(__builtin_popcount(bits_)); }
    bool empty() const { return bits_ == 0; }
    std::vector<Strategy> to_vector() const;
    bool is_subset_of(const StrategySet& other) const { return (bits_ & ~other.bits_) == 0; }
    std::uint8_t bits() const { return bits_; }

    friend bool operator==(const StrategySet&, const StrategySet&) = default;

private:
    std::uint8_t bits_ = 0;
};

// Strategies that may be shown in a cell, in canonical order.
std::vector<Strategy> applicable_strategies(CellKey cell);
inline std::vector<Strategy> applicable_strategies(const MentalStateCell& cell) {
    return applicable_strategies(cell.key());
}
StrategySet applicable_set(CellKey cell);

// How many times each strategy has been shown per (user, cell). Only the
// orchestrator mutates it.
class StrategyLedger {
public:
    using Counts = std::array<std::uint64_t, 4>;
    using Key = std::pair<std::string, CellKey>;

    std::uint64_t count(const std::string& user, CellKey cell, Strategy strategy) const;
    Counts counts(const std::string& user, CellKey cell) const;

    // Least-shown applicable strategy not yet shown in this intervention,
    // ties broken by canonical rank. Throws NotApplicable if already_shown
    // names a strategy outside the cell's set.
    std::optional<Strategy> next_strategy(const std::string& user, CellKey cell, StrategySet already_shown) const;

    // Throws NotApplicable for a strategy outside the cell's set.
    void record_shown(const std::string& user, CellKey cell, Strategy strategy);

    const std::map<Key, Counts>& entries() const { return counts_; }
    void set_counts(const std::string& user, CellKey cell, const Counts& counts);

    friend bool operator==(const StrategyLedger&, const StrategyLedger&) = default;

private:
    std::map<Key, Counts> counts_;
};

} // namespace nudge
