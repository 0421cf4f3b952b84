#include "nudge/simulator.hpp"

#include "nudge/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace nudge::sim {

using nlohmann::json;

namespace {

constexpr std::array<Intent, 4> kIntents{Intent::Habitual, Intent::Instrumental, Intent::Relax, Intent::ExitAtIntent};

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw Error(Errc::InvalidConfig, what);
    }
}

CellKey cell_key_from_string(const std::string& text) {
    for (auto c : kAllCells) {
        if (to_string(c) == text) {
            return c;
        }
    }
    throw Error(Errc::InvalidConfig, "unknown cell '" + text + "'");
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t persona_index, Stream stream)
    : engine_(splitmix(splitmix(seed) ^ splitmix(persona_index * 16 + static_cast<std::uint64_t>(stream) + 1))) {}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::exponential(double mean) {
    return -mean * std::log1p(-uniform());
}

std::size_t Rng::pick(const double* weights, std::size_t n) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += weights[i];
        if (u < acc) {
            return i;
        }
    }
    // Rounding left a sliver above the last cumulative weight.
    for (std::size_t i = n; i-- > 0;) {
        if (weights[i] > 0.0) {
            return i;
        }
    }
    return 0;
}

void Persona::validate() const {
    require(!user_id.empty(), "persona without user id");
    require(daily_open_rate >= 0.0 && std::isfinite(daily_open_rate), user_id + ": open rate must be >= 0");
    double intents = 0.0;
    for (double p : intent_mix) {
        require(is_probability(p), user_id + ": intent probabilities must be in [0,1]");
        intents += p;
    }
    require(std::abs(intents - 1.0) <= 1e-9, user_id + ": intent mix must sum to 1");
    double cells = 0.0;
    for (const auto& [cell, p] : cell_mix) {
        require(cell.kind != MentalStateKind::Other, user_id + ": cell mix covers the six grid cells only");
        require(is_probability(p), user_id + ": cell probabilities must be in [0,1]");
        cells += p;
    }
    require(std::abs(cells - 1.0) <= 1e-9, user_id + ": cell mix must sum to 1");
    require(is_probability(base_quit_prob), user_id + ": base quit probability must be in [0,1]");
    for (double a : strategy_affinity) {
        require(a >= 0.0 && std::isfinite(a), user_id + ": affinities must be >= 0");
    }
    require(is_probability(thumb_up_prob) && is_probability(thumb_down_prob) && thumb_up_prob + thumb_down_prob <= 1.0,
            user_id + ": thumb probabilities must be in [0,1] and sum to at most 1");
    require(is_probability(reopen_prob), user_id + ": reopen probability must be in [0,1]");
    require(mean_usage_minutes > 0.0, user_id + ": mean usage must be positive");
    require(!values.empty(), user_id + ": at least one value entry is required");
    require(!blacklist.empty(), user_id + ": blacklist must not be empty");
}

Persona default_persona(std::string user_id) {
    Persona p;
    p.user_id = std::move(user_id);
    for (std::size_t i = 0; i < 6; ++i) {
        p.cell_mix[kAllCells[i]] = 1.0 / 6.0;
    }
    p.values = {
        {GoalCategory::Career, "finish my thesis", "write one page"},
        {GoalCategory::Health, "sleep before midnight", "stretch for five minutes"},
        {GoalCategory::Life, "call family weekly", "text my sister"},
        {GoalCategory::Hobbies, "learn guitar", "practice one chord"},
    };
    return p;
}

Persona Persona::from_json(const json& j) {
    try {
        Persona p = default_persona(j.value("user", std::string("p1")));
        p.daily_open_rate = j.value("daily_open_rate", p.daily_open_rate);
        if (j.contains("intent_mix")) {
            p.intent_mix.fill(0.0);
            for (const auto& [name, v] : j["intent_mix"].items()) {
                p.intent_mix[static_cast<std::size_t>(intent_from_string(name))] = v.get<double>();
            }
        }
        if (j.contains("cell_mix")) {
            p.cell_mix.clear();
            for (const auto& [name, v] : j["cell_mix"].items()) {
                p.cell_mix[cell_key_from_string(name)] = v.get<double>();
            }
        }
        p.base_quit_prob = j.value("base_quit_prob", p.base_quit_prob);
        if (j.contains("strategy_affinity")) {
            for (const auto& [name, v] : j["strategy_affinity"].items()) {
                p.strategy_affinity[static_cast<std::size_t>(canonical_rank(strategy_from_string(name)))] =
                    v.get<double>();
            }
        }
        p.thumb_up_prob = j.value("thumb_up_prob", p.thumb_up_prob);
        p.thumb_down_prob = j.value("thumb_down_prob", p.thumb_down_prob);
        p.mean_usage_minutes = j.value("mean_usage_minutes", p.mean_usage_minutes);
        p.reopen_prob = j.value("reopen_prob", p.reopen_prob);
        if (j.contains("values")) {
            p.values.clear();
            for (const auto& v : j["values"]) {
                p.values.push_back(GoalEntry{goal_category_from_string(v.at("category").get<std::string>()),
                                             v.at("goal").get<std::string>(), v.at("action").get<std::string>()});
            }
        }
        if (j.contains("blacklist")) {
            p.blacklist = j["blacklist"].get<std::set<std::string>>();
        }
        p.location = j.value("location", p.location);
        p.utc_offset = UtcOffset::parse(j.value("utc_offset", std::string("Z")));
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::InvalidConfig) {
            throw;
        }
        throw Error(Errc::InvalidConfig, e.what());
    }
}

json Persona::to_json() const {
    json intents, cells, affinity;
    for (std::size_t i = 0; i < kIntents.size(); ++i) {
        intents[std::string(to_string(kIntents[i]))] = intent_mix[i];
    }
    for (const auto& [cell, p] : cell_mix) {
        cells[to_string(cell)] = p;
    }
    for (auto s : kAllStrategies) {
        affinity[std::string(to_string(s))] = strategy_affinity[static_cast<std::size_t>(canonical_rank(s))];
    }
    json vals = json::array();
    for (const auto& v : values) {
        vals.push_back({{"category", to_string(v.category)}, {"goal", v.goal}, {"action", v.action}});
    }
    return {{"user", user_id},
            {"daily_open_rate", daily_open_rate},
            {"intent_mix", intents},
            {"cell_mix", cells},
            {"base_quit_prob", base_quit_prob},
            {"strategy_affinity", affinity},
            {"thumb_up_prob", thumb_up_prob},
            {"thumb_down_prob", thumb_down_prob},
            {"mean_usage_minutes", mean_usage_minutes},
            {"reopen_prob", reopen_prob},
            {"values", vals},
            {"blacklist", blacklist},
            {"location", location},
            {"utc_offset", utc_offset.to_string()}};
}

void ScenarioConfig::validate() const {
    require(!personas.empty(), "scenario needs at least one persona");
    require(days >= 1, "days must be >= 1");
    require(wake_hour >= 0 && sleep_hour <= 24 && wake_hour < sleep_hour, "waking window must satisfy 0 <= wake < sleep <= 24");
    require(round_interval.count() > 0, "round interval must be positive");
    std::set<std::string> ids;
    for (const auto& p : personas) {
        p.validate();
        require(ids.insert(p.user_id).second, "duplicate persona " + p.user_id);
    }
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
    ScenarioConfig c;
    try {
        c.days = j.value("days", c.days);
        if (j.contains("mode")) {
            c.mode = intervention_mode_from_string(j["mode"].get<std::string>());
        }
        c.seed = j.value("seed", c.seed);
        if (j.contains("start_date")) {
            c.start_date = parse_date(j["start_date"].get<std::string>());
        }
        c.wake_hour = j.value("wake_hour", c.wake_hour);
        c.sleep_hour = j.value("sleep_hour", c.sleep_hour);
        c.round_interval = std::chrono::seconds(j.value("round_interval_s", c.round_interval.count()));
        for (const auto& p : j.at("personas")) {
            c.personas.push_back(Persona::from_json(p));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::InvalidConfig) {
            throw;
        }
        throw Error(Errc::InvalidConfig, e.what());
    }
    c.validate();
    return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot read " + path.string());
    }
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw Error(Errc::InvalidConfig, e.what());
    }
}

json ScenarioConfig::to_json() const {
    json ps = json::array();
    for (const auto& p : personas) {
        ps.push_back(p.to_json());
    }
    return {{"days", days},
            {"mode", to_string(mode)},
            {"seed", seed},
            {"start_date", format_date(start_date)},
            {"wake_hour", wake_hour},
            {"sleep_hour", sleep_hour},
            {"round_interval_s", round_interval.count()},
            {"personas", ps}};
}

double round_quit_probability(const Persona& persona, std::optional<Strategy> strategy) {
    const double affinity =
        strategy ? persona.strategy_affinity[static_cast<std::size_t>(canonical_rank(*strategy))] : 1.0;
    return std::clamp(persona.base_quit_prob * affinity, 0.0, 1.0);
}

PersonaDecision persona_decide(const Persona& persona, const Stage& stage, std::optional<Strategy> strategy,
                               Rng& rng) {
    if (std::holds_alternative<IntentStage>(stage)) {
        return kIntents[rng.pick(persona.intent_mix.data(), persona.intent_mix.size())];
    }
    if (std::holds_alternative<MentalStateStage>(stage)) {
        std::vector<CellKey> cells;
        std::vector<double> weights;
        for (const auto& [cell, p] : persona.cell_mix) {
            cells.push_back(cell);
            weights.push_back(p);
        }
        if (cells.empty()) {
            return CellKey{MentalStateKind::Inertia, Engagement::NotEngaged};
        }
        return cells[rng.pick(weights.data(), weights.size())];
    }
    return rng.uniform() < round_quit_probability(persona, strategy) ? Decision::Quit : Decision::Continue;
}

double expected_persuasion_acceptance(const Persona& persona, InterventionMode mode) {
    if (mode == InterventionMode::Baseline) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& [cell, weight] : persona.cell_mix) {
        double stay = 1.0;
        for (auto s : applicable_strategies(cell)) {
            const auto strategy = mode == InterventionMode::Full ? std::optional<Strategy>(s) : std::nullopt;
            stay *= 1.0 - round_quit_probability(persona, strategy);
        }
        total += weight * (1.0 - stay);
    }
    return total;
}

namespace {

Feeling feeling_for(MentalStateKind kind) {
    switch (kind) {
    case MentalStateKind::Boredom: return Feeling{FeelingKind::Boredom, {}};
    case MentalStateKind::Stress: return Feeling{FeelingKind::Stress, {}};
    default: return Feeling{FeelingKind::None, {}};
    }
}

struct VisitDraws {
    Intent intent{};
    CellKey cell{};
    std::array<double, kMaxRounds> decision{};
    std::array<double, kMaxRounds> feedback{};
    double usage_seconds = 0.0;
    double reopen = 0.0;
    double reopen_seconds = 0.0;
};

class PersonaRun {
public:
    PersonaRun(Engine& engine, const ScenarioConfig& config, const Persona& persona, std::size_t index)
        : engine_(engine),
          config_(config),
          persona_(persona),
          arrivals_(config.seed, index, Stream::Arrivals),
          intents_(config.seed, index, Stream::Intents),
          cells_(config.seed, index, Stream::Cells),
          decisions_(config.seed, index, Stream::Decisions),
          feedback_(config.seed, index, Stream::Feedback),
          durations_(config.seed, index, Stream::Durations) {}

    void run() {
        engine_.initialize_profile(persona_.user_id, persona_.values, persona_.blacklist, persona_.utc_offset);
        const std::vector<std::string> apps(persona_.blacklist.begin(), persona_.blacklist.end());
        Timestamp cursor = local_midnight(config_.start_date, persona_.utc_offset);
        for (int d = 0; d < config_.days; ++d) {
            const auto midnight = local_midnight(config_.start_date + std::chrono::days(d), persona_.utc_offset);
            const auto window_start = midnight + std::chrono::hours(config_.wake_hour);
            const double window = 3600.0 * (config_.sleep_hour - config_.wake_hour);
            const double rate = persona_.daily_open_rate * static_cast<double>(apps.size()) / window;
            if (rate <= 0.0) {
                continue;
            }
            double offset = 0.0;
            while (true) {
                offset += arrivals_.exponential(1.0 / rate);
                if (offset >= window) {
                    break;
                }
                const auto& app = apps[static_cast<std::size_t>(arrivals_.uniform() * static_cast<double>(apps.size()))];
                const auto arrival = window_start + std::chrono::seconds(static_cast<std::int64_t>(offset));
                cursor = visit(std::max(arrival, cursor), app);
            }
        }
    }

private:
    VisitDraws draw() {
        VisitDraws v;
        v.intent = std::get<Intent>(persona_decide(persona_, IntentStage{}, std::nullopt, intents_));
        v.cell = std::get<CellKey>(persona_decide(persona_, MentalStateStage{}, std::nullopt, cells_));
        for (auto& u : v.decision) {
            u = decisions_.uniform();
        }
        for (auto& u : v.feedback) {
            u = feedback_.uniform();
        }
        v.usage_seconds = durations_.exponential(60.0 * persona_.mean_usage_minutes);
        v.reopen = durations_.uniform();
        v.reopen_seconds = durations_.exponential(60.0 * persona_.mean_usage_minutes);
        return v;
    }

    // Returns the earliest time the next visit may start.
    Timestamp visit(Timestamp t, const std::string& app) {
        using std::chrono::seconds;
        const auto v = draw();
        const auto& user = persona_.user_id;
        engine_.on_screen_unlock(user, t);
        auto action = engine_.on_app_open(user, app, t, persona_.location);
        const auto& sid = std::get<ShowIntentDialog>(action).session_id;
        t += seconds(5);
        engine_.submit_intent(sid, v.intent, t);
        bool left = v.intent == Intent::ExitAtIntent;
        if (v.intent == Intent::Habitual && config_.mode != InterventionMode::Baseline) {
            t += seconds(5);
            auto request = engine_.submit_mental_state(sid, v.cell.engagement, feeling_for(v.cell.kind), t);
            for (int k = 1;; ++k) {
                const auto shown = t;
                const auto i = static_cast<std::size_t>(k - 1);
                if (v.feedback[i] < persona_.thumb_up_prob) {
                    engine_.submit_feedback(sid, k, Feedback::Up, shown + seconds(10));
                } else if (v.feedback[i] < persona_.thumb_up_prob + persona_.thumb_down_prob) {
                    engine_.submit_feedback(sid, k, Feedback::Down, shown + seconds(10));
                }
                t = shown + seconds(20);
                if (v.decision[i] < round_quit_probability(persona_, request.strategy())) {
                    engine_.submit_decision(sid, Decision::Quit, t);
                    left = true;
                    break;
                }
                engine_.submit_decision(sid, Decision::Continue, t);
                t = shown + config_.round_interval;
                auto tick = engine_.on_round_tick(sid, t);
                if (auto* next = std::get_if<NextRound>(&tick)) {
                    request = next->request;
                    continue;
                }
                break;
            }
        }
        t += left ? seconds(2) : seconds(1 + static_cast<std::int64_t>(v.usage_seconds));
        engine_.on_app_close(user, app, t);
        if (v.reopen < persona_.reopen_prob) {
            t += seconds(30);
            engine_.on_app_open(user, app, t, persona_.location);
            t += seconds(1 + static_cast<std::int64_t>(v.reopen_seconds));
            engine_.on_app_close(user, app, t);
        }
        t += seconds(1);
        engine_.on_screen_off(user, t);
        return t + seconds(1);
    }

    Engine& engine_;
    const ScenarioConfig& config_;
    const Persona& persona_;
    Rng arrivals_;
    Rng intents_;
    Rng cells_;
    Rng decisions_;
    Rng feedback_;
    Rng durations_;
};

} // namespace

ScenarioResult run_scenario(const ScenarioConfig& config) {
    config.validate();
    EngineConfig ec;
    ec.mode = config.mode;
    ec.round_interval = config.round_interval;
    Engine engine(ec);
    return run_scenario(config, engine);
}

ScenarioResult run_scenario(const ScenarioConfig& config, Engine& engine) {
    config.validate();
    for (std::size_t i = 0; i < config.personas.size(); ++i) {
        PersonaRun(engine, config, config.personas[i], i).run();
    }
    ScenarioResult result;
    result.events = engine.with_log([](const EventLog& log) { return log.events(); });
    result.records = engine.records();
    result.report = build_report(result.records);
    return result;
}

} // namespace nudge::sim
