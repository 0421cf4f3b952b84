#include "nudge/analytics.hpp"

#include <sstream>

namespace nudge {

Ratio overall_acceptance(std::span<const InterventionRecord> records) {
    Ratio r;
    for (const auto& rec : records) {
        if (!rec.eligible()) {
            continue;
        }
        const bool exit_at_intent = *rec.outcome == Outcome::ExitAtIntent;
        if (exit_at_intent || rec.intent == Intent::Habitual) {
            ++r.denominator;
        }
        if (exit_at_intent || *rec.outcome == Outcome::QuitAtRound) {
            ++r.numerator;
        }
    }
    return r;
}

std::optional<double> overall_acceptance_rate(std::span<const InterventionRecord> records) {
    return overall_acceptance(records).value();
}

RateTable persuasion_acceptance_rate(std::span<const InterventionRecord> records, GroupBy group_by) {
    RateTable table;
    for (const auto& rec : records) {
        if (!rec.eligible() || !rec.reached_persuasion()) {
            continue;
        }
        const bool quit = *rec.outcome == Outcome::QuitAtRound;
        switch (group_by) {
        case GroupBy::None: {
            auto& r = table["all"];
            ++r.denominator;
            r.numerator += quit ? 1 : 0;
            break;
        }
        case GroupBy::Round:
            for (const auto& round : rec.rounds) {
                auto& r = table[std::to_string(round.number)];
                ++r.denominator;
                r.numerator += (quit && rec.quit_round == round.number) ? 1 : 0;
            }
            break;
        case GroupBy::Strategy:
        case GroupBy::Cell:
        case GroupBy::Engagement:
            for (const auto& round : rec.rounds) {
                std::optional<std::string> key;
                if (group_by == GroupBy::Strategy && round.strategy) {
                    key = std::string(to_string(*round.strategy));
                } else if (group_by == GroupBy::Cell && rec.cell) {
                    key = to_string(rec.cell->key());
                } else if (group_by == GroupBy::Engagement && rec.cell) {
                    key = std::string(to_string(rec.cell->engagement));
                }
                if (!key) {
                    continue;
                }
                auto& r = table[*key];
                ++r.denominator;
                r.numerator += (quit && rec.quit_round == round.number) ? 1 : 0;
            }
            break;
        }
    }
    return table;
}

std::pair<Ratio, Ratio> thumb_ratios(std::span<const InterventionRecord> records) {
    Ratio up;
    Ratio down;
    for (const auto& rec : records) {
        if (!rec.eligible() || !rec.reached_persuasion()) {
            continue;
        }
        ++up.denominator;
        ++down.denominator;
        up.numerator += rec.any_up() ? 1 : 0;
        down.numerator += rec.any_down() ? 1 : 0;
    }
    return {up, down};
}

std::pair<double, double> thumb_rates(std::span<const InterventionRecord> records) {
    const auto [up, down] = thumb_ratios(records);
    return {up.value().value_or(0.0), down.value().value_or(0.0)};
}

MetricsReport build_report(std::span<const InterventionRecord> records) {
    MetricsReport rep;
    for (const auto& rec : records) {
        if (rec.eligible()) {
            rep.outcome_counts[std::string(to_string(*rec.outcome))] += 1;
        }
    }
    rep.overall = overall_acceptance(records);
    const auto all = persuasion_acceptance_rate(records, GroupBy::None);
    if (const auto it = all.find("all"); it != all.end()) {
        rep.persuasion = it->second;
    }
    rep.by_round = persuasion_acceptance_rate(records, GroupBy::Round);
    rep.by_strategy = persuasion_acceptance_rate(records, GroupBy::Strategy);
    rep.by_cell = persuasion_acceptance_rate(records, GroupBy::Cell);
    rep.by_engagement = persuasion_acceptance_rate(records, GroupBy::Engagement);
    std::tie(rep.thumbs_up, rep.thumbs_down) = thumb_ratios(records);
    return rep;
}

namespace {

nlohmann::json ratio_json(const Ratio& r) {
    nlohmann::json j{{"numerator", r.numerator}, {"denominator", r.denominator}};
    const auto v = r.value();
    j["value"] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json table_json(const RateTable& t) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, ratio] : t) {
        j[key] = ratio_json(ratio);
    }
    return j;
}

void csv_row(std::ostringstream& out, std::string_view metric, std::string_view key, const Ratio& r) {
    out << metric << ',' << key << ',' << r.numerator << ',' << r.denominator << ',';
    if (const auto v = r.value()) {
        out.precision(17);
        out << *v;
    }
    out << '\n';
}

} // namespace

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["outcome_counts"] = outcome_counts;
    j["overall_acceptance"] = ratio_json(overall);
    j["persuasion_acceptance"] = ratio_json(persuasion);
    j["persuasion_by_round"] = table_json(by_round);
    j["persuasion_by_strategy"] = table_json(by_strategy);
    j["persuasion_by_cell"] = table_json(by_cell);
    j["persuasion_by_engagement"] = table_json(by_engagement);
    j["thumbs_up"] = ratio_json(thumbs_up);
    j["thumbs_down"] = ratio_json(thumbs_down);
    return j;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << "metric,key,numerator,denominator,value\n";
    csv_row(out, "overall_acceptance", "", overall);
    csv_row(out, "persuasion_acceptance", "", persuasion);
    for (const auto& [k, r] : by_round) csv_row(out, "persuasion_by_round", k, r);
    for (const auto& [k, r] : by_strategy) csv_row(out, "persuasion_by_strategy", k, r);
    for (const auto& [k, r] : by_cell) csv_row(out, "persuasion_by_cell", k, r);
    for (const auto& [k, r] : by_engagement) csv_row(out, "persuasion_by_engagement", k, r);
    csv_row(out, "thumbs_up", "", thumbs_up);
    csv_row(out, "thumbs_down", "", thumbs_down);
    for (const auto& [k, n] : outcome_counts) {
        out << "outcome_count," << k << ',' << n << ",,\n";
    }
    return out.str();
}

} // namespace nudge
