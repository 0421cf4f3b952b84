#include "fixtures.hpp"
#include "metrics_oracle.hpp"

#include "nudge/error.hpp"
#include "nudge/orchestrator.hpp"

#include <doctest.h>

#include <random>

using namespace nudge;
using fixtures::at;
using std::chrono::seconds;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return Errc::InvalidArgument;
}

const Timestamp t0 = at("2024-03-04T10:00:00Z");

struct Rig {
    Engine engine;
    std::vector<UsageEvent> sunk;

    explicit Rig(InterventionMode mode = InterventionMode::Full) : engine(EngineConfig{.mode = mode}) {
        engine.set_event_sink([this](const UsageEvent& e) { sunk.push_back(e); });
        engine.initialize_profile("u1", fixtures::four_values(), {"Douyin", "Bili", "Weibo"});
    }

    std::string open(const std::string& app = "Douyin", Timestamp t = t0) {
        auto a = engine.on_app_open("u1", app, t, "library");
        REQUIRE(std::holds_alternative<ShowIntentDialog>(a));
        return std::get<ShowIntentDialog>(a).session_id;
    }

    // Open, answer Habitual and (Engaged, Stress) so that all four strategies apply.
    std::string persuading(Timestamp t = t0) {
        const auto sid = open("Douyin", t);
        engine.submit_intent(sid, Intent::Habitual, t);
        engine.submit_mental_state(sid, Engagement::Engaged, Feeling{FeelingKind::Stress, {}}, t);
        return sid;
    }
};

} // namespace

TEST_CASE("profile initialisation") {
    auto p = make_profile("u", fixtures::four_values(), {"A", "B", "C"});
    CHECK(p.values.size() == 4);
    CHECK(p.blacklist.size() == 3);
    CHECK(code_of([] { make_profile("u", fixtures::four_values(), {}); }) == Errc::EmptyBlacklist);
    CHECK(code_of([] { make_profile("u", {{GoalCategory::Life, "", "x"}}, {"A"}); }) == Errc::MalformedValue);
    CHECK(code_of([] { make_profile("u", {{GoalCategory::Life, "g", ""}}, {"A"}); }) == Errc::MalformedValue);

    auto dup = make_profile("u",
                            {{GoalCategory::Health, "sleep early", "stretch"},
                             {GoalCategory::Career, "pass IELTS", "read"},
                             {GoalCategory::Health, "run 5k", "jog"}},
                            {"A"});
    REQUIRE(dup.values.size() == 2);
    CHECK(dup.values[0].category == GoalCategory::Career);
    CHECK(dup.values[1].goal == "run 5k");

    Engine e;
    CHECK(code_of([&] { e.on_app_open("ghost", "Douyin", t0); }) == Errc::NoProfile);
}

TEST_CASE("intent dialog deduplication") {
    Rig r;
    r.engine.on_screen_unlock("u1", t0);
    const auto sid = r.open();
    r.engine.submit_intent(sid, Intent::Instrumental, t0 + seconds(3));
    r.engine.on_app_close("u1", "Douyin", t0 + seconds(60));
    CHECK(std::holds_alternative<NoAction>(r.engine.on_app_open("u1", "Douyin", t0 + seconds(70))));
    CHECK(std::holds_alternative<NoAction>(r.engine.on_app_open("u1", "Notes", t0 + seconds(80))));
    CHECK(std::holds_alternative<ShowIntentDialog>(r.engine.on_app_open("u1", "Bili", t0 + seconds(90))));
    r.engine.on_screen_off("u1", t0 + seconds(100));
    r.engine.on_screen_unlock("u1", t0 + seconds(200));
    CHECK(std::holds_alternative<ShowIntentDialog>(r.engine.on_app_open("u1", "Douyin", t0 + seconds(210))));
}

TEST_CASE("intent routing") {
    Rig r;
    auto sid = r.open();
    CHECK(r.engine.submit_intent(sid, Intent::Habitual, t0) == IntentStep::AskMentalState);
    CHECK(r.engine.session(sid)->phase == SessionPhase::AwaitMentalState);
    CHECK(code_of([&] { r.engine.submit_intent(sid, Intent::Habitual, t0); }) == Errc::WrongState);

    r.engine.on_screen_unlock("u1", t0 + seconds(10));
    sid = r.open("Douyin", t0 + seconds(11));
    CHECK(r.engine.submit_intent(sid, Intent::Relax, t0 + seconds(12)) == IntentStep::Closed);
    CHECK(r.engine.session(sid)->outcome == Outcome::RelaxPass);
    CHECK(r.engine.session(sid)->rounds.empty());

    sid = r.open("Bili", t0 + seconds(13));
    r.engine.submit_intent(sid, Intent::ExitAtIntent, t0 + seconds(14));
    CHECK(r.engine.session(sid)->outcome == Outcome::ExitAtIntent);

    Rig base(InterventionMode::Baseline);
    sid = base.open();
    CHECK(base.engine.submit_intent(sid, Intent::Habitual, t0) == IntentStep::Closed);
    CHECK(base.engine.session(sid)->outcome == Outcome::HabitualPass);
}

TEST_CASE("mental state report") {
    Rig r;
    auto sid = r.open();
    r.engine.submit_intent(sid, Intent::Habitual, t0);
    auto req = r.engine.submit_mental_state(sid, Engagement::Engaged, Feeling::from_string("None"), t0);
    const auto s = *r.engine.session(sid);
    CHECK(s.cell->key() == CellKey{MentalStateKind::Inertia, Engagement::Engaged});
    CHECK(req.strategy() == Strategy::Understanding);
    CHECK(req.request_id == sid + "-r1");
    CHECK(s.phase == SessionPhase::Persuading);
    CHECK(s.current_round() == 1);

    r.engine.on_screen_unlock("u1", t0 + seconds(5));
    sid = r.open("Douyin", t0 + seconds(6));
    r.engine.submit_intent(sid, Intent::Habitual, t0 + seconds(6));
    r.engine.submit_mental_state(sid, Engagement::NotEngaged, Feeling::from_string("Stress"), t0 + seconds(7));
    CHECK(r.engine.session(sid)->round_cap == 3);

    r.engine.on_screen_unlock("u1", t0 + seconds(8));
    sid = r.open("Douyin", t0 + seconds(9));
    r.engine.submit_intent(sid, Intent::Habitual, t0 + seconds(9));
    CHECK(code_of([&] {
              r.engine.submit_mental_state(sid, Engagement::Engaged, Feeling::from_string("Other", ""), t0 + seconds(9));
          }) == Errc::InvalidArgument);
    CHECK(code_of([] { Feeling::from_string("Joy"); }) == Errc::Parse);
}

TEST_CASE("round cadence") {
    Rig r;
    const auto sid = r.persuading();
    CHECK(std::holds_alternative<NotYet>(r.engine.on_round_tick(sid, t0 + seconds(90))));
    auto next = r.engine.on_round_tick(sid, t0 + seconds(120));
    REQUIRE(std::holds_alternative<NextRound>(next));
    CHECK(std::get<NextRound>(next).request.request_id == sid + "-r2");
    // Stale tick for round 1 is ignored.
    CHECK(std::holds_alternative<NotYet>(r.engine.on_round_tick(sid, t0 + seconds(400), 1)));
    CHECK(std::holds_alternative<NextRound>(r.engine.on_round_tick(sid, t0 + seconds(240))));
    CHECK(std::holds_alternative<NextRound>(r.engine.on_round_tick(sid, t0 + seconds(360))));
    CHECK(r.engine.session(sid)->current_round() == 4);
    CHECK(std::holds_alternative<Exhausted>(r.engine.on_round_tick(sid, t0 + seconds(480))));
    CHECK(r.engine.session(sid)->outcome == Outcome::ContinuedToExhaustion);
    CHECK(code_of([&] { r.engine.on_round_tick(sid, t0 + seconds(600)); }) == Errc::WrongState);
}

TEST_CASE("decisions") {
    Rig r;
    auto sid = r.persuading();
    r.engine.submit_decision(sid, Decision::Continue, t0 + seconds(20));
    CHECK(r.engine.session(sid)->phase == SessionPhase::Persuading);
    // Continue does not move the cadence.
    CHECK(std::holds_alternative<NextRound>(r.engine.on_round_tick(sid, t0 + seconds(120))));
    r.engine.submit_decision(sid, Decision::Quit, t0 + seconds(130));
    const auto s = *r.engine.session(sid);
    CHECK(s.outcome == Outcome::QuitAtRound);
    CHECK(r.engine.records().back().quit_round == 2);
    CHECK(code_of([&] { r.engine.submit_decision(sid, Decision::Quit, t0 + seconds(140)); }) == Errc::WrongState);
}

TEST_CASE("leaving the app during persuasion counts as a quit") {
    Rig r;
    auto sid = r.persuading();
    r.engine.on_app_close("u1", "Douyin", t0 + seconds(30));
    CHECK(r.engine.session(sid)->outcome == Outcome::QuitAtRound);
    CHECK_FALSE(r.engine.session(sid)->timeout);
    CHECK(code_of([&] { r.engine.on_app_close("u1", "Douyin", t0 + seconds(31)); }) == Errc::OrphanClose);

    r.engine.on_screen_unlock("u1", t0 + seconds(40));
    sid = r.persuading(t0 + seconds(41));
    r.engine.on_screen_off("u1", t0 + seconds(50));
    CHECK(r.engine.session(sid)->outcome == Outcome::QuitAtRound);
}

TEST_CASE("feedback") {
    Rig r;
    const auto sid = r.persuading();
    r.engine.submit_feedback(sid, 1, Feedback::Up, t0 + seconds(10));
    CHECK(code_of([&] { r.engine.submit_feedback(sid, 3, Feedback::Up, t0 + seconds(11)); }) == Errc::UnknownRound);
    r.engine.submit_decision(sid, Decision::Quit, t0 + seconds(12));
    r.engine.submit_feedback(sid, 1, Feedback::Down, t0 + seconds(13));
    const auto rec = r.engine.records().back();
    CHECK(rec.rounds[0].thumb_up);
    CHECK(rec.rounds[0].thumb_down);
}

TEST_CASE("thumb-down on a scaffolding round drops the binding") {
    Rig r;
    // (Engaged, Stress) shows all four strategies in canonical order on a fresh ledger.
    const auto sid = r.persuading();
    for (int k = 2; k <= 4; ++k) {
        r.engine.on_round_tick(sid, t0 + seconds(120 * (k - 1)));
    }
    const auto s = *r.engine.session(sid);
    REQUIRE(s.rounds[3].strategy == Strategy::ScaffoldingHabits);
    const auto key = *s.rounds[3].habit_key;
    CHECK(key.to_string() == "Stress|library|10");
    CHECK(r.engine.habit_binding("u1", key)->habit == "memorize vocabulary");
    r.engine.submit_feedback(sid, 2, Feedback::Down, t0 + seconds(400));
    CHECK(r.engine.habit_binding("u1", key).has_value());
    r.engine.submit_feedback(sid, 4, Feedback::Down, t0 + seconds(401));
    CHECK_FALSE(r.engine.habit_binding("u1", key).has_value());
}

TEST_CASE("simple mode rounds carry no strategy") {
    Rig r(InterventionMode::Simple);
    const auto sid = r.persuading();
    CHECK_FALSE(r.engine.session(sid)->rounds[0].strategy.has_value());
    CHECK(r.engine.pending(sid)->prompt.full_text.find("Persuasion Strategy") == std::string::npos);
    CHECK(r.engine.ledger().entries().empty());
}

TEST_CASE("the user id never reaches the prompt") {
    Engine e;
    const std::string canary = "canary-user-7f3a9c";
    e.initialize_profile(canary, fixtures::four_values(), {"Douyin"});
    const auto sid = std::get<ShowIntentDialog>(e.on_app_open(canary, "Douyin", t0, "dorm")).session_id;
    e.submit_intent(sid, Intent::Habitual, t0);
    auto req = e.submit_mental_state(sid, Engagement::NotEngaged, Feeling::from_string("Boredom"), t0);
    for (int k = 0; k < 3; ++k) {
        CHECK(req.prompt.full_text.find(canary) == std::string::npos);
        CHECK(req.prompt.full_text.find(sid) == std::string::npos);
        auto next = e.on_round_tick(sid, t0 + seconds(120 * (k + 1)));
        if (!std::holds_alternative<NextRound>(next)) {
            break;
        }
        req = std::get<NextRound>(next).request;
    }
}

TEST_CASE("random operation sequences stay within the state machine") {
    std::mt19937 rng(2024);
    const std::array<Intent, 4> intents{Intent::Habitual, Intent::Instrumental, Intent::Relax, Intent::ExitAtIntent};
    const std::array<const char*, 4> feelings{"Stress", "Boredom", "None", "Other"};
    for (int run = 0; run < 200; ++run) {
        Rig r;
        auto t = t0;
        std::string sid;
        for (int step = 0; step < 60; ++step) {
            t += seconds(rng() % 150);
            const int op = static_cast<int>(rng() % 8);
            if (op == 0 || sid.empty()) {
                r.engine.on_screen_unlock("u1", t);
                auto a = r.engine.on_app_open("u1", "Douyin", t, "lab");
                sid = std::get<ShowIntentDialog>(a).session_id;
                continue;
            }
            const auto before = *r.engine.session(sid);
            const auto phase = before.phase;
            bool legal = true;
            try {
                switch (op) {
                case 1:
                    legal = phase == SessionPhase::AwaitIntent;
                    r.engine.submit_intent(sid, intents[rng() % 4], t);
                    break;
                case 2:
                    legal = phase == SessionPhase::AwaitMentalState;
                    r.engine.submit_mental_state(sid, rng() % 2 ? Engagement::Engaged : Engagement::NotEngaged,
                                                 Feeling::from_string(feelings[rng() % 4], "tired"), t);
                    break;
                case 3:
                case 4:
                    legal = phase == SessionPhase::Persuading;
                    r.engine.on_round_tick(sid, t);
                    break;
                case 5:
                    legal = phase == SessionPhase::Persuading;
                    r.engine.submit_decision(sid, rng() % 3 ? Decision::Continue : Decision::Quit, t);
                    break;
                case 6: {
                    const int k = 1 + static_cast<int>(rng() % 4);
                    legal = k <= before.current_round();
                    r.engine.submit_feedback(sid, k, rng() % 2 ? Feedback::Up : Feedback::Down, t);
                    break;
                }
                case 7:
                    r.engine.expire_sessions(t);
                    break;
                }
                CHECK(legal);
            } catch (const Error& e) {
                CHECK_FALSE(legal);
                CHECK((e.code() == Errc::WrongState || e.code() == Errc::UnknownRound));
                CHECK(*r.engine.session(sid) == before);
            }
            const auto s = *r.engine.session(sid);
            CHECK(s.current_round() <= s.round_cap);
            CHECK(s.round_cap <= 4);
            CHECK(s.shown.size() == static_cast<std::size_t>(s.current_round()));
            if (s.phase == SessionPhase::Closed) {
                CHECK(s.outcome.has_value());
            }
        }
        CHECK(r.engine.report() == oracle::report(r.sunk));
    }
}

TEST_CASE("restore follows the log where the snapshot is behind") {
    Rig r;
    const auto state = r.engine.export_state();
    const auto a = r.persuading();
    r.engine.on_round_tick(a, t0 + seconds(120));
    const auto mid = r.engine.export_state();
    r.engine.submit_decision(a, Decision::Quit, t0 + seconds(130));

    for (const auto& snap : {state, mid}) {
        Engine fresh;
        std::vector<UsageEvent> sunk;
        fresh.set_event_sink([&](const UsageEvent& e) { sunk.push_back(e); });
        fresh.restore(snap, r.sunk);
        CHECK(sunk.empty());
        CHECK(fresh.session(a)->outcome == Outcome::QuitAtRound);
        CHECK_FALSE(fresh.session(a)->timeout);
        CHECK(fresh.ledger() == r.engine.ledger());
        CHECK(fresh.records() == r.engine.records());
    }
}

TEST_CASE("orphaned sessions expire as timeouts") {
    Rig r;
    const auto a = r.open();
    CHECK(r.engine.expire_sessions(t0 + std::chrono::minutes(29)).empty());
    CHECK(r.engine.expire_sessions(t0 + std::chrono::minutes(31)) == std::vector<std::string>{a});
    const auto s = *r.engine.session(a);
    CHECK(s.outcome == Outcome::ExitAtIntent);
    CHECK(s.timeout);
    CHECK(r.engine.report().overall.denominator == 0);

    r.engine.on_screen_unlock("u1", t0 + std::chrono::minutes(40));
    const auto b = r.persuading(t0 + std::chrono::minutes(40));
    r.engine.expire_sessions(t0 + std::chrono::minutes(80));
    CHECK(r.engine.session(b)->outcome == Outcome::QuitAtRound);
    CHECK(r.engine.session(b)->timeout);
}

TEST_CASE("restore rebuilds the engine and closes sessions the snapshot missed") {
    Rig r;
    const auto a = r.persuading();
    r.engine.submit_decision(a, Decision::Quit, t0 + seconds(30));
    const auto state = r.engine.export_state();
    r.engine.on_screen_unlock("u1", t0 + seconds(40));
    const auto b = r.persuading(t0 + seconds(41));
    const auto events = r.sunk;

    Engine fresh;
    std::vector<UsageEvent> sunk;
    fresh.set_event_sink([&](const UsageEvent& e) { sunk.push_back(e); });
    fresh.restore(state, events);
    REQUIRE(sunk.size() == 1);
    CHECK(sunk[0].kind == EventKind::SessionClosed);
    CHECK(sunk[0].session_id == b);
    CHECK(sunk[0].timeout);
    // Only the last closed session per user stays addressable.
    CHECK_FALSE(fresh.session(a).has_value());
    CHECK(fresh.session(b)->timeout);
    CHECK(fresh.records().front().outcome == Outcome::QuitAtRound);
    CHECK_FALSE(fresh.live_session("u1").has_value());

    fresh.on_screen_unlock("u1", t0 + seconds(60));
    const auto c = std::get<ShowIntentDialog>(fresh.on_app_open("u1", "Douyin", t0 + seconds(61))).session_id;
    CHECK(c != a);
    CHECK(c != b);
    CHECK(fresh.report() == oracle::report(fresh.with_log([](const EventLog& l) { return l.events(); })));
}
