#include "nudge/analytics.hpp"
#include "nudge/error.hpp"

#include <algorithm>
#include <fstream>

namespace nudge {

std::string_view to_string(ScaleKind kind) {
    return kind == ScaleKind::SAS ? "SAS" : "SelfEfficacy";
}

std::string_view to_string(ExclusionReason reason) {
    switch (reason) {
    case ExclusionReason::LowSas: return "LowSas";
    case ExclusionReason::Unwilling: return "Unwilling";
    case ExclusionReason::LowUsage: return "LowUsage";
    case ExclusionReason::LongTravel: return "LongTravel";
    }
    return "?";
}

ScaleDefinition ScaleDefinition::from_json(const nlohmann::json& j) {
    try {
        ScaleDefinition d;
        const auto kind = j.at("scale").get<std::string>();
        if (kind == "SAS") {
            d.kind = ScaleKind::SAS;
        } else if (kind == "SelfEfficacy") {
            d.kind = ScaleKind::SelfEfficacy;
        } else {
            throw Error(Errc::InvalidConfig, "unknown scale '" + kind + "'");
        }
        d.name = j.value("name", kind);
        d.item_count = j.at("items").get<std::size_t>();
        d.min_point = j.at("min").get<int>();
        d.max_point = j.at("max").get<int>();
        d.reverse_keyed = j.value("reverse_keyed", std::vector<std::size_t>{});
        if (d.item_count == 0 || d.min_point > d.max_point) {
            throw Error(Errc::InvalidConfig, "scale '" + d.name + "' has an empty item set or range");
        }
        for (auto idx : d.reverse_keyed) {
            if (idx >= d.item_count) {
                throw Error(Errc::InvalidConfig, "reverse-keyed item out of range in scale '" + d.name + "'");
            }
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("malformed scale definition: ") + e.what());
    }
}

ScaleDefinition ScaleDefinition::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot read " + path.string());
    }
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
    }
}

int score_scale(const ScaleResponse& response, const ScaleDefinition& definition) {
    if (response.scale != definition.kind) {
        throw Error(Errc::InvalidArgument, "response is for a different scale");
    }
    if (response.item_scores.size() != definition.item_count) {
        throw Error(Errc::ItemCountMismatch, std::to_string(response.item_scores.size()) + " items, expected " +
                                                 std::to_string(definition.item_count));
    }
    int total = 0;
    for (std::size_t i = 0; i < response.item_scores.size(); ++i) {
        const int raw = response.item_scores[i];
        if (raw < definition.min_point || raw > definition.max_point) {
            throw Error(Errc::OutOfRange, "item " + std::to_string(i + 1) + " scored " + std::to_string(raw));
        }
        const bool reversed =
            std::find(definition.reverse_keyed.begin(), definition.reverse_keyed.end(), i) != definition.reverse_keyed.end();
        total += reversed ? definition.min_point + definition.max_point - raw : raw;
    }
    return total;
}

ScreeningResult screen_participant(const ScreeningApplication& a) {
    if (a.sas_subscore < kMinSasSubscore) {
        return {false, ExclusionReason::LowSas};
    }
    if (!a.willing) {
        return {false, ExclusionReason::Unwilling};
    }
    if (a.weekly_hours < kMinWeeklyHours) {
        return {false, ExclusionReason::LowUsage};
    }
    if (a.has_long_travel) {
        return {false, ExclusionReason::LongTravel};
    }
    return {true, std::nullopt};
}

} // namespace nudge
