#include "nudge/analytics.hpp"
#include "nudge/prompt.hpp"
#include "nudge/simulator.hpp"
#include "nudge/strategy.hpp"

#include <benchmark/benchmark.h>

using namespace nudge;

static void BM_NextStrategy(benchmark::State& state) {
    StrategyLedger ledger;
    const CellKey cell{MentalStateKind::Boredom, Engagement::Engaged};
    for (auto _ : state) {
        auto s = ledger.next_strategy("u", cell, {});
        ledger.record_shown("u", cell, *s);
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_NextStrategy);

static void BM_AssemblePrompt(benchmark::State& state) {
    PromptSlots slots;
    slots.app_name = "Douyin";
    slots.current_time = parse_rfc3339("2024-03-05T14:30:00Z");
    slots.utc_offset = UtcOffset::parse("+08:00");
    slots.location_label = "library";
    slots.habitual_minutes_today = 45;
    slots.minutes_since_last_habitual = 12;
    slots.cell = {MentalState::stress(), Engagement::Engaged};
    slots.goals = {{GoalCategory::Career, "pass IELTS", "memorize vocabulary"},
                   {GoalCategory::Health, "sleep before midnight", "neck stretches"}};
    slots.strategy = Strategy::Evoking;
    const auto& templates = PromptTemplates::defaults();
    for (auto _ : state) {
        benchmark::DoNotOptimize(assemble_prompt(slots, templates, PromptOptions{}));
    }
}
BENCHMARK(BM_AssemblePrompt);

static sim::ScenarioConfig scenario(int days) {
    sim::ScenarioConfig c;
    for (int i = 0; i < 3; ++i) {
        c.personas.push_back(sim::default_persona("p" + std::to_string(i + 1)));
    }
    c.days = days;
    c.seed = 7;
    return c;
}

static void BM_Ingest(benchmark::State& state) {
    const auto events = sim::run_scenario(scenario(14)).events;
    for (auto _ : state) {
        EventLog log;
        for (const auto& e : events) {
            log.ingest(e);
        }
        benchmark::DoNotOptimize(log.incremental_report());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(events.size()));
}
BENCHMARK(BM_Ingest)->Unit(benchmark::kMillisecond);

static void BM_RunScenario(benchmark::State& state) {
    const auto c = scenario(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(sim::run_scenario(c));
    }
}
BENCHMARK(BM_RunScenario)->Arg(7)->Arg(28)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
