#include "fixtures.hpp"

#include "nudge/error.hpp"
#include "nudge/server.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>

using namespace nudge;
using fixtures::at;
using nlohmann::json;
using std::chrono::minutes;
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

// Clock the test moves by hand so the background loop never races ahead.
struct ManualClock {
    std::shared_ptr<std::atomic<std::int64_t>> secs = std::make_shared<std::atomic<std::int64_t>>(t0.time_since_epoch().count());
    Clock fn() const {
        return [s = secs] { return Timestamp(seconds(s->load())); };
    }
    void set(Timestamp t) { secs->store(t.time_since_epoch().count()); }
};

ServerConfig test_config(const std::filesystem::path& dir) {
    ServerConfig c;
    c.port = 0;
    c.data_dir = dir;
    c.scheduler_period = std::chrono::milliseconds(3'600'000);
    c.heartbeat_check_period = seconds(3600);
    c.snapshot_period = seconds(3600);
    return c;
}

struct Harness {
    ManualClock clock;
    std::shared_ptr<EmailNotifier> mail = std::make_shared<EmailNotifier>("ops@example.org");
    ApiServer server;
    httplib::Client http;

    explicit Harness(const std::filesystem::path& dir, ServerConfig cfg = {}, bool use_defaults = true)
        : server(use_defaults ? test_config(dir) : std::move(cfg), nullptr, clock.fn(), mail),
          http("127.0.0.1", server.start()) {
        http.set_read_timeout(10, 0);
    }

    json post(const std::string& path, const json& body, int expect = 200) {
        auto res = http.Post(path, body.dump(), "application/json");
        REQUIRE(res);
        CHECK_MESSAGE(res->status == expect, path << " -> " << res->body);
        return res->body.empty() ? json() : json::parse(res->body);
    }
    json get(const std::string& path, int expect = 200) {
        auto res = http.Get(path);
        REQUIRE(res);
        CHECK_MESSAGE(res->status == expect, path << " -> " << res->body);
        return json::parse(res->body);
    }

    // Returns (event name, data) pairs of an SSE response.
    std::vector<std::pair<std::string, json>> stream(const std::string& path) {
        auto res = http.Get(path);
        REQUIRE(res);
        REQUIRE_MESSAGE(res->status == 200, res->body);
        std::vector<std::pair<std::string, json>> out;
        std::istringstream in(res->body);
        std::string line, name;
        while (std::getline(in, line)) {
            if (line.rfind("event: ", 0) == 0) {
                name = line.substr(7);
            } else if (line.rfind("data: ", 0) == 0) {
                out.emplace_back(name, json::parse(line.substr(6)));
            }
        }
        return out;
    }

    void profile(const std::string& user = "u1") {
        post("/users/" + user + "/profile",
             {{"values",
               {{{"category", "Career"}, {"goal", "pass IELTS"}, {"action", "memorize vocabulary"}},
                {{"category", "Health"}, {"goal", "sleep before midnight"}, {"action", "neck stretches"}}}},
              {"blacklist", {"Douyin", "Bili"}},
              {"utc_offset", "+08:00"}});
    }
};

json event(const std::string& kind, Timestamp ts, const std::string& app = {}) {
    json j = {{"user", "u1"}, {"kind", kind}, {"ts", format_rfc3339(ts)}};
    if (!app.empty()) {
        j["app"] = app;
    }
    return j;
}

// The same visit driven through HTTP and directly against an Engine.
struct Step {
    std::function<void(Harness&, const std::string&)> http;
    std::function<void(Engine&, const std::string&)> direct;
};

} // namespace

TEST_CASE("heartbeat checks") {
    HeartbeatState hb;
    const auto threshold = minutes(10);
    hb.record("u1", t0, true);
    CHECK(check_heartbeats(t0 + minutes(5), hb, threshold).empty());
    auto alerts = check_heartbeats(t0 + minutes(12), hb, threshold);
    REQUIRE(alerts.size() == 1);
    CHECK(alerts[0].reason == "stale");
    CHECK(alerts[0].last_heartbeat == t0);
    CHECK(check_heartbeats(t0 + minutes(10), hb, threshold).empty());

    hb.record("u2", t0 + minutes(1), false);
    alerts = check_heartbeats(t0 + minutes(1), hb, threshold);
    REQUIRE(alerts.size() == 1);
    CHECK(alerts[0].user_id == "u2");
    CHECK(alerts[0].reason == "service_down");
    CHECK(code_of([&] { hb.record("u1", t0 - seconds(1), true); }) == Errc::OutOfOrder);
}

TEST_CASE("file notifier appends json lines") {
    fixtures::TempDir dir("notify");
    FileNotifier n(dir.path() / "alerts.jsonl");
    n.notify({"u1", t0, t0 - minutes(12), true, "stale"});
    n.notify({"u2", t0, t0, false, "service_down"});
    std::ifstream in(dir.path() / "alerts.jsonl");
    std::string line;
    std::vector<json> lines;
    while (std::getline(in, line)) {
        lines.push_back(json::parse(line));
    }
    REQUIRE(lines.size() == 2);
    CHECK(lines[1]["reason"] == "service_down");
}

TEST_CASE("snapshots") {
    Engine e;
    e.initialize_profile("u1", fixtures::four_values(), {"Douyin"}, UtcOffset::parse("+08:00"));
    const auto sid = std::get<ShowIntentDialog>(e.on_app_open("u1", "Douyin", t0, "dorm")).session_id;
    e.submit_intent(sid, Intent::Habitual, t0);
    e.submit_mental_state(sid, Engagement::NotEngaged, Feeling::from_string("None"), t0);
    e.on_round_tick(sid, t0 + seconds(120));
    ServerState state{e.export_state(), {}};
    state.heartbeats.record("u1", t0, true);

    CHECK(snapshot_from_json(snapshot_to_json(state)) == state);
    CHECK(snapshot_from_json(snapshot_to_json(ServerState{})) == ServerState{});

    fixtures::TempDir dir("snap");
    write_snapshot(dir.path() / "s.json", state);
    CHECK(read_snapshot(dir.path() / "s.json") == state);
    CHECK_FALSE(std::filesystem::exists(dir.path() / "s.json.tmp"));

    auto j = snapshot_to_json(state);
    j["schema_version"] = 2;
    CHECK(code_of([&] { snapshot_from_json(j); }) == Errc::SchemaMismatch);
    CHECK(code_of([&] { snapshot_from_json(json{{"schema_version", 1}}); }) == Errc::CorruptSnapshot);
    std::ofstream(dir.path() / "bad.json") << "{\"schema_version\": 1, \"eng";
    CHECK(code_of([&] { read_snapshot(dir.path() / "bad.json"); }) == Errc::CorruptSnapshot);
}

TEST_CASE("server configuration") {
    fixtures::TempDir dir("cfg");
    std::ofstream(dir.path() / "server.json") << R"({"port": 0, "data_dir": "data", "mode": "Simple",
        "heartbeat_threshold_s": 300, "round_interval_s": 60})";
    const auto c = ServerConfig::load(dir.path() / "server.json");
    CHECK(c.data_dir == dir.path() / "data");
    CHECK(c.heartbeat_threshold == seconds(300));
    CHECK(c.engine.round_interval == seconds(60));
    CHECK(c.engine.mode == InterventionMode::Simple);
    CHECK(code_of([] { ServerConfig::from_json(json{{"heartbeat_threshold_s", 0}}); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { ServerConfig::load(dir.path() / "missing.json"); }) == Errc::Io);
    const auto shipped = ServerConfig::load(NUDGE_CONFIG_DIR "/server/server.json");
    CHECK(shipped.port > 0);
}

TEST_CASE("http flow end to end") {
    fixtures::TempDir dir("http");
    Harness h(dir.path());
    CHECK(h.get("/health")["ok"] == true);
    h.profile();

    auto r = h.post("/events", {{"events",
                                 {event("ScreenUnlock", t0), event("AppOpen", t0, "Notes"),
                                  event("AppOpen", t0 + seconds(1), "Douyin")}}});
    CHECK(r["accepted"] == 3);
    CHECK(r["results"][1]["action"] == "None");
    REQUIRE(r["results"][2]["action"] == "ShowIntentDialog");
    const std::string sid = r["results"][2]["session"];

    CHECK(h.post("/sessions/" + sid + "/intent", {{"intent", "Habitual"}, {"ts", "2024-03-04T10:00:05Z"}})["next"] ==
          "AskMentalState");
    auto ms = h.post("/sessions/" + sid + "/mental-state",
                     {{"engagement", "Engaged"}, {"feeling", "Stress"}, {"ts", "2024-03-04T10:00:10Z"}});
    CHECK(ms["strategy"] == "Understanding");

    auto frames = h.stream("/sessions/" + sid + "/persuasion");
    REQUIRE_FALSE(frames.empty());
    CHECK(frames.back().first == "done");
    CHECK(frames.back().second["backend"] == "Fallback");
    CHECK(frames.back().second["round"] == 1);
    std::string text;
    for (const auto& [name, data] : frames) {
        if (name == "chunk") {
            text += data["text"].get<std::string>();
        }
    }
    CHECK(text == frames.back().second["text"]);
    // A reconnect replays the same message.
    CHECK(h.stream("/sessions/" + sid + "/persuasion").back().second["text"] == text);

    CHECK(h.post("/sessions/" + sid + "/tick", {{"ts", "2024-03-04T10:01:00Z"}})["result"] == "NotYet");
    auto tick = h.post("/sessions/" + sid + "/tick", {{"ts", "2024-03-04T10:02:10Z"}});
    CHECK(tick["result"] == "NextRound");
    CHECK(tick["strategy"] == "Comforting");
    CHECK(h.get("/sessions/" + sid)["round"] == 2);

    h.post("/sessions/" + sid + "/feedback", {{"round", 1}, {"feedback", "Up"}, {"ts", "2024-03-04T10:02:20Z"}});
    CHECK(h.post("/sessions/" + sid + "/decision", {{"decision", "Quit"}, {"ts", "2024-03-04T10:02:30Z"}})["closed"] ==
          true);

    auto report = h.get("/reports/u1?period=2024-03-04..2024-03-04");
    CHECK(report["metrics"]["overall_acceptance"]["numerator"] == 1);
    CHECK(report["metrics"]["thumbs_up"]["numerator"] == 1);
    CHECK(report["usage"]["opens"] == 1);
    CHECK(h.get("/reports/all")["metrics"]["persuasion_by_round"]["2"]["numerator"] == 1);

    // Error mapping.
    CHECK(h.get("/sessions/nope", 404)["error"] == "UnknownSession");
    CHECK(h.post("/sessions/" + sid + "/decision", {{"decision", "Quit"}}, 409)["error"] == "WrongState");
    CHECK(h.post("/sessions/" + sid + "/feedback", {{"round", 3}, {"feedback", "Up"}}, 404)["error"] == "UnknownRound");
    CHECK(h.post("/sessions/" + sid + "/intent", {{"intent", "Sometimes"}}, 400)["error"] == "Parse");
    CHECK(h.post("/users/u2/profile", {{"values", json::array()}, {"blacklist", {"A"}}}, 400)["error"] ==
          "MalformedValue");
    auto bad = h.post("/events", json::array({event("AppClose", t0 + minutes(5), "Weibo")}), 409);
    CHECK(bad["error"] == "OrphanClose");
    CHECK(bad["accepted"] == 0);
    CHECK(h.post("/events", json::array({event("AppOpen", t0, "Bili")}), 409)["error"] == "OutOfOrder");
    auto res = h.http.Post("/events", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(h.get("/reports/u1?period=yesterday", 400)["error"] == "InvalidArgument");
    CHECK(h.post("/users/ghost/profile", {{"values", {{{"category", "Life"}, {"goal", "g"}, {"action", "a"}}}}}, 400)
              ["error"] == "EmptyBlacklist");
}

TEST_CASE("habit edits over http") {
    fixtures::TempDir dir("habits");
    Harness h(dir.path());
    h.profile();
    CHECK(h.http.Put("/habits/Inertia%7Cdorm%7C22", json{{"user", "u1"}, {"habit", "drink water"}}.dump(),
                     "application/json")
              ->status == 404);
    h.server.engine().select_habit("u1", {MentalStateKind::Inertia, "dorm", 22});
    auto res = h.http.Put("/habits/Inertia%7Cdorm%7C22", json{{"user", "u1"}, {"habit", "drink water"}}.dump(),
                          "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(h.server.engine().habit_binding("u1", {MentalStateKind::Inertia, "dorm", 22})->habit == "drink water");
}

TEST_CASE("heartbeat endpoint and alerts") {
    fixtures::TempDir dir("hb");
    Harness h(dir.path());
    h.post("/heartbeat", {{"user", "u1"}, {"service_ok", true}, {"ts", format_rfc3339(t0)}});
    CHECK(h.mail->outbox().empty());
    CHECK(h.server.run_heartbeat_check_once(t0 + minutes(5)).empty());
    CHECK(h.server.run_heartbeat_check_once(t0 + minutes(12)).size() == 1);
    // Same silent period: no repeat.
    CHECK(h.server.run_heartbeat_check_once(t0 + minutes(20)).empty());
    CHECK(h.mail->outbox().size() == 1);

    h.post("/heartbeat", {{"user", "u1"}, {"service_ok", false}, {"ts", format_rfc3339(t0 + minutes(21))}});
    REQUIRE(h.mail->outbox().size() == 2);
    CHECK(h.mail->outbox()[1].reason == "service_down");
    CHECK(h.post("/heartbeat", {{"user", "u1"}, {"ts", format_rfc3339(t0)}}, 409)["error"] == "OutOfOrder");
}

TEST_CASE("bearer authentication") {
    fixtures::TempDir dir("auth");
    ::setenv("NUDGE_TEST_TOKEN", "s3cret", 1);
    auto cfg = test_config(dir.path());
    cfg.auth_token_env = "NUDGE_TEST_TOKEN";
    Harness h(dir.path(), cfg, false);
    ::unsetenv("NUDGE_TEST_TOKEN");
    CHECK(h.get("/health")["ok"] == true);
    CHECK(h.get("/reports/all", 401)["error"] == "Unauthorized");
    h.http.set_bearer_token_auth("wrong");
    CHECK(h.get("/reports/all", 401)["error"] == "Unauthorized");
    h.http.set_bearer_token_auth("s3cret");
    CHECK(h.get("/reports/all", 200).contains("metrics"));
}

TEST_CASE("http and in-process drivers produce the same records") {
    fixtures::TempDir dir("equiv");
    Harness h(dir.path());
    h.profile();
    Engine direct;
    direct.initialize_profile("u1",
                              {{GoalCategory::Career, "pass IELTS", "memorize vocabulary"},
                               {GoalCategory::Health, "sleep before midnight", "neck stretches"}},
                              {"Douyin", "Bili"}, UtcOffset::parse("+08:00"));

    auto t = t0;
    auto ts = [&] { return format_rfc3339(t); };
    const char* feelings[] = {"Stress", "Boredom", "None", "Other"};
    const char* intents[] = {"Habitual", "Instrumental", "Relax", "ExitAtIntent", "Habitual", "Habitual"};
    for (int visit = 0; visit < 12; ++visit) {
        const std::string app = visit % 3 ? "Douyin" : "Bili";
        auto r = h.post("/events", json::array({event("ScreenUnlock", t), event("AppOpen", t, app)}));
        direct.on_screen_unlock("u1", t);
        const auto action = direct.on_app_open("u1", app, t);
        const std::string sid = r["results"][1]["session"];
        REQUIRE(std::get<ShowIntentDialog>(action).session_id == sid);

        const std::string intent = intents[visit % 6];
        t += seconds(5);
        h.post("/sessions/" + sid + "/intent", {{"intent", intent}, {"ts", ts()}});
        direct.submit_intent(sid, intent_from_string(intent), t);
        if (intent == "Habitual") {
            t += seconds(5);
            const std::string feeling = feelings[visit % 4];
            const std::string eng = visit % 2 ? "Engaged" : "NotEngaged";
            h.post("/sessions/" + sid + "/mental-state",
                   {{"engagement", eng}, {"feeling", feeling}, {"text", "restless"}, {"ts", ts()}});
            direct.submit_mental_state(sid, engagement_from_string(eng), Feeling::from_string(feeling, "restless"), t);
            for (int k = 1; k <= visit % 4 + 1; ++k) {
                h.stream("/sessions/" + sid + "/persuasion");
                direct.take_pending(sid);
                t += seconds(10);
                h.post("/sessions/" + sid + "/feedback", {{"round", k}, {"feedback", k % 2 ? "Up" : "Down"}, {"ts", ts()}});
                direct.submit_feedback(sid, k, k % 2 ? Feedback::Up : Feedback::Down, t);
                t += seconds(120);
                auto tick = h.post("/sessions/" + sid + "/tick", {{"ts", ts()}});
                auto res = direct.on_round_tick(sid, t);
                CHECK(tick["result"] == (std::holds_alternative<NextRound>(res)   ? "NextRound"
                                         : std::holds_alternative<Exhausted>(res) ? "Exhausted"
                                                                                   : "NotYet"));
                if (tick["result"] != "NextRound") {
                    break;
                }
            }
            if (direct.session(sid)->phase == SessionPhase::Persuading) {
                t += seconds(1);
                h.post("/sessions/" + sid + "/decision", {{"decision", "Quit"}, {"ts", ts()}});
                direct.submit_decision(sid, Decision::Quit, t);
            }
        }
        t += seconds(30);
        h.post("/events", json::array({event("AppClose", t, app), event("ScreenOff", t + seconds(1))}));
        direct.on_app_close("u1", app, t);
        direct.on_screen_off("u1", t + seconds(1));
        t += minutes(20);
    }
    CHECK(h.server.engine().records() == direct.records());
    CHECK(h.server.engine().report() == direct.report());
    CHECK(h.server.engine().ledger() == direct.ledger());
}

TEST_CASE("acknowledged events survive a crash") {
    fixtures::TempDir live("crash-live");
    fixtures::TempDir copy("crash-copy");
    std::string sid;
    {
        Harness h(live.path());
        h.profile();
        auto r = h.post("/events", json::array({event("ScreenUnlock", t0), event("AppOpen", t0, "Douyin")}));
        sid = r["results"][1]["session"];
        h.post("/sessions/" + sid + "/intent", {{"intent", "Habitual"}, {"ts", "2024-03-04T10:00:05Z"}});
        // Copy the data directory while the server is still running: this is
        // what a crash leaves behind (no final snapshot).
        std::filesystem::copy(live.path(), copy.path(), std::filesystem::copy_options::recursive |
                                                            std::filesystem::copy_options::overwrite_existing);
    }
    Harness after(copy.path());
    const auto s = after.server.engine().session(sid);
    REQUIRE(s.has_value());
    CHECK(s->outcome == Outcome::HabitualPass);
    CHECK(s->timeout);
    const auto events = after.server.engine().with_log([](const EventLog& l) { return l.events(); });
    REQUIRE(events.size() == 4);
    CHECK(events[2].kind == EventKind::IntentReport);
    CHECK(events[3].kind == EventKind::SessionClosed);
    // The recovered server continues with fresh session ids.
    auto r = after.post("/events", json::array({event("ScreenUnlock", t0 + minutes(1)),
                                                event("AppOpen", t0 + minutes(1), "Douyin")}));
    CHECK(r["results"][1]["session"] != sid);

    // A clean restart on the same directory keeps everything.
    after.server.stop();
    const auto before = after.server.engine().records();
    Harness again(copy.path());
    CHECK(again.server.engine().records() == before);
}
