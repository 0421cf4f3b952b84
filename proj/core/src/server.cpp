#include "nudge/server.hpp"

#include "nudge/error.hpp"
#include "nudge/log.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>

namespace nudge {

using nlohmann::json;

Timestamp system_now() {
    return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

ServerConfig ServerConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    ServerConfig c;
    try {
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        if (j.contains("data_dir")) c.data_dir = resolve(j["data_dir"].get<std::string>());
        if (j.contains("backend") && !j["backend"].is_null()) {
            const auto& b = j["backend"];
            RemoteBackendConfig rb;
            rb.endpoint = b.at("endpoint").get<std::string>();
            rb.model = b.value("model", rb.model);
            rb.api_key_env = b.value("api_key_env", rb.api_key_env);
            c.backend = rb;
        }
        if (j.contains("template_dir")) c.template_dir = resolve(j["template_dir"].get<std::string>());
        if (j.contains("blocklist")) c.blocklist_path = resolve(j["blocklist"].get<std::string>());
        c.heartbeat_threshold = std::chrono::seconds(j.value("heartbeat_threshold_s", c.heartbeat_threshold.count()));
        c.heartbeat_check_period =
            std::chrono::seconds(j.value("heartbeat_check_period_s", c.heartbeat_check_period.count()));
        c.scheduler_period = std::chrono::milliseconds(j.value("scheduler_period_ms", c.scheduler_period.count()));
        c.snapshot_period = std::chrono::seconds(j.value("snapshot_period_s", c.snapshot_period.count()));
        c.first_chunk_timeout =
            std::chrono::milliseconds(j.value("first_chunk_timeout_ms", c.first_chunk_timeout.count()));
        c.word_cap = j.value("word_cap", c.word_cap);
        c.auth_token_env = j.value("auth_token_env", c.auth_token_env);
        if (j.contains("mode")) c.engine.mode = intervention_mode_from_string(j["mode"].get<std::string>());
        c.engine.round_interval = std::chrono::seconds(j.value("round_interval_s", c.engine.round_interval.count()));
        c.engine.orphan_timeout = std::chrono::seconds(j.value("orphan_timeout_s", c.engine.orphan_timeout.count()));
        c.engine.prompt_cap = j.value("prompt_cap", c.engine.prompt_cap);
        c.engine.prompt.word_cap = c.word_cap;
        c.engine.generation_deadline =
            std::chrono::milliseconds(j.value("generation_deadline_ms", c.engine.generation_deadline.count()));
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, e.what());
    }
    if (c.heartbeat_threshold.count() <= 0) {
        throw Error(Errc::InvalidConfig, "heartbeat threshold must be positive");
    }
    if (c.word_cap == 0 || c.port < 0 || c.port > 65535) {
        throw Error(Errc::InvalidConfig, "word cap must be positive and port in 0..65535");
    }
    return c;
}

ServerConfig ServerConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot read " + path.string());
    }
    try {
        return from_json(json::parse(in), path.parent_path());
    } catch (const json::parse_error& e) {
        throw Error(Errc::InvalidConfig, e.what());
    }
}

namespace {

int status_for(Errc code) {
    switch (code) {
    case Errc::NoProfile:
    case Errc::UnknownSession:
    case Errc::UnknownRound:
    case Errc::UnknownKey: return 404;
    case Errc::WrongState:
    case Errc::OutOfOrder:
    case Errc::OrphanClose: return 409;
    case Errc::Io:
    case Errc::CorruptSnapshot:
    case Errc::SchemaMismatch:
    case Errc::InvalidConfig: return 500;
    default: return 400;
    }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, {{"error", code}, {"message", message}}, status);
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) {
        return json::object();
    }
    return json::parse(req.body);
}

std::string sse(std::string_view event, const json& data) {
    return "event: " + std::string(event) + "\ndata: " + data.dump() + "\n\n";
}

json message_json(const PersuasionMessage& m, int round) {
    return {{"text", m.text},
            {"round", round},
            {"strategy", m.strategy ? json(to_string(*m.strategy)) : json(nullptr)},
            {"backend", to_string(m.backend)},
            {"first_chunk_ms", m.first_chunk_latency.count()}};
}

json action_json(const OpenAction& a) {
    if (const auto* show = std::get_if<ShowIntentDialog>(&a)) {
        return {{"action", "ShowIntentDialog"}, {"session", show->session_id}};
    }
    return {{"action", "None"}};
}

json session_view(const InterventionSession& s) {
    json j = {{"session", s.session_id},
              {"user", s.user_id},
              {"app", s.app},
              {"phase", to_string(s.phase)},
              {"round", s.current_round()},
              {"round_cap", s.round_cap},
              {"outcome", s.outcome ? json(to_string(*s.outcome)) : json(nullptr)},
              {"timeout", s.timeout},
              {"pending", s.pending.has_value()}};
    if (!s.rounds.empty()) {
        const auto& r = s.rounds.back();
        j["strategy"] = r.strategy ? json(to_string(*r.strategy)) : json(nullptr);
        j["shown_at"] = format_rfc3339(r.shown_at);
        if (r.habit_key) {
            j["habit_key"] = r.habit_key->to_string();
            j["habit"] = r.habit;
        }
    }
    return j;
}

// "all" (default), "YYYY-MM-DD..YYYY-MM-DD", or "<N>d" ending on today's date.
std::optional<std::pair<std::chrono::sys_days, std::chrono::sys_days>> parse_period(const std::string& period,
                                                                                      std::chrono::sys_days today) {
    if (period.empty() || period == "all") {
        return std::nullopt;
    }
    if (auto dots = period.find(".."); dots != std::string::npos) {
        auto first = parse_date(period.substr(0, dots));
        auto last = parse_date(period.substr(dots + 2));
        if (last < first) {
            throw Error(Errc::InvalidArgument, "period ends before it starts");
        }
        return std::pair{first, last};
    }
    if (period.size() > 1 && period.back() == 'd') {
        char* end = nullptr;
        long n = std::strtol(period.c_str(), &end, 10);
        if (end == period.c_str() + period.size() - 1 && n >= 1) {
            return std::pair{today - std::chrono::days(n - 1), today};
        }
    }
    throw Error(Errc::InvalidArgument, "bad period '" + period + "'");
}

} // namespace

ApiServer::ApiServer(ServerConfig config, std::shared_ptr<GenerationBackend> remote, Clock clock,
                     std::shared_ptr<Notifier> notifier)
    : config_(std::move(config)), clock_(std::move(clock)), notifier_(std::move(notifier)) {
    std::filesystem::create_directories(config_.data_dir);
    if (!notifier_) {
        notifier_ = std::make_shared<FileNotifier>(config_.data_dir / "alerts.jsonl");
    }
    if (!remote && config_.backend) {
        remote = std::make_shared<RemoteChatBackend>(*config_.backend);
    }
    GatewayOptions gopts;
    gopts.first_chunk_timeout = config_.first_chunk_timeout;
    gopts.constraints.word_cap = config_.word_cap;
    if (config_.blocklist_path) {
        gopts.constraints.blocklist = OutputConstraints::load_blocklist(*config_.blocklist_path);
    }
    gateway_ = std::make_unique<Gateway>(std::move(remote), gopts);
    templates_ = std::make_shared<TemplateStore>(config_.template_dir);
    config_.engine.prompt.word_cap = config_.word_cap;
    engine_ = std::make_unique<Engine>(config_.engine, templates_);
    if (!config_.auth_token_env.empty()) {
        if (const char* t = std::getenv(config_.auth_token_env.c_str()); t != nullptr) {
            auth_token_ = t;
        }
    }
    recover();
    writer_ = std::make_unique<JsonlWriter>(config_.data_dir / "events.jsonl");
    engine_->set_event_sink([this](const UsageEvent& e) { writer_->append(e); });
    http_ = std::make_unique<httplib::Server>();
    install_routes();
}

ApiServer::~ApiServer() {
    stop();
}

void ApiServer::recover() {
    const auto events_path = config_.data_dir / "events.jsonl";
    const auto snapshot_path = config_.data_dir / "snapshot.json";
    std::vector<UsageEvent> events;
    if (std::filesystem::exists(events_path)) {
        events = read_jsonl(events_path);
    }
    ServerState state;
    if (std::filesystem::exists(snapshot_path)) {
        state = read_snapshot(snapshot_path);
    }
    // Closing events for sessions the snapshot missed go straight to the file.
    JsonlWriter append(events_path);
    engine_->set_event_sink([&append](const UsageEvent& e) { append.append(e); });
    engine_->restore(std::move(state.engine), events);
    heartbeats_ = std::move(state.heartbeats);
    if (!events.empty()) {
        log::info("recovered " + std::to_string(events.size()) + " events");
    }
}

ServerState ApiServer::state() const {
    ServerState s;
    s.engine = engine_->export_state();
    std::lock_guard lock(hb_mu_);
    s.heartbeats = heartbeats_;
    return s;
}

void ApiServer::snapshot() {
    write_snapshot(config_.data_dir / "snapshot.json", state());
}

void ApiServer::run_scheduler_once(Timestamp now) {
    for (const auto& [sid, result] : engine_->tick_all(now)) {
        if (std::holds_alternative<Exhausted>(result)) {
            log::debug("session " + sid + " exhausted");
        }
    }
    engine_->expire_sessions(now);
}

std::vector<AlertEvent> ApiServer::run_heartbeat_check_once(Timestamp now) {
    std::vector<AlertEvent> fresh;
    {
        std::lock_guard lock(hb_mu_);
        for (auto& a : check_heartbeats(now, heartbeats_, config_.heartbeat_threshold)) {
            // One alert per silent period or down report.
            auto it = alerted_.find(a.user_id);
            if (it != alerted_.end() && it->second == a.last_heartbeat) {
                continue;
            }
            alerted_[a.user_id] = a.last_heartbeat;
            fresh.push_back(std::move(a));
        }
    }
    for (const auto& a : fresh) {
        try {
            notifier_->notify(a);
        } catch (const std::exception& e) {
            log::error(std::string("alert delivery failed: ") + e.what());
        }
    }
    return fresh;
}

void ApiServer::background_loop() {
    auto next_hb = std::chrono::steady_clock::now() + config_.heartbeat_check_period;
    auto next_snap = std::chrono::steady_clock::now() + config_.snapshot_period;
    std::unique_lock lock(bg_mu_);
    while (!stopping_) {
        bg_cv_.wait_for(lock, config_.scheduler_period, [this] { return stopping_; });
        if (stopping_) {
            break;
        }
        lock.unlock();
        try {
            const auto now = clock_();
            run_scheduler_once(now);
            const auto mono = std::chrono::steady_clock::now();
            if (mono >= next_hb) {
                run_heartbeat_check_once(now);
                next_hb = mono + config_.heartbeat_check_period;
            }
            if (mono >= next_snap) {
                snapshot();
                next_snap = mono + config_.snapshot_period;
            }
        } catch (const std::exception& e) {
            log::error(std::string("background task: ") + e.what());
        }
        lock.lock();
    }
}

int ApiServer::start() {
    if (config_.port == 0) {
        port_ = http_->bind_to_any_port(config_.host);
    } else if (http_->bind_to_port(config_.host, config_.port)) {
        port_ = config_.port;
    } else {
        port_ = -1;
    }
    if (port_ <= 0) {
        throw Error(Errc::Io, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    background_thread_ = std::thread([this] { background_loop(); });
    http_->wait_until_ready();
    log::info("listening on " + config_.host + ":" + std::to_string(port_));
    return port_;
}

void ApiServer::wait() {
    if (http_thread_.joinable()) {
        http_thread_.join();
    }
}

void ApiServer::stop() {
    {
        std::lock_guard lock(bg_mu_);
        if (stopping_) {
            return;
        }
        stopping_ = true;
    }
    bg_cv_.notify_all();
    if (http_) {
        http_->stop();
    }
    if (http_thread_.joinable()) {
        http_thread_.join();
    }
    if (background_thread_.joinable()) {
        background_thread_.join();
    }
    try {
        snapshot();
    } catch (const std::exception& e) {
        log::error(std::string("final snapshot failed: ") + e.what());
    }
}

void ApiServer::install_routes() {
    auto& svr = *http_;

    svr.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (auth_token_.empty() || req.path == "/health") {
            return httplib::Server::HandlerResponse::Unhandled;
        }
        if (req.get_header_value("Authorization") != "Bearer " + auth_token_) {
            send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, status_for(e.code()), to_string(e.code()), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "Parse", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "Internal", e.what());
        }
    });

    auto when = [this](const json& body) {
        return body.contains("ts") ? parse_rfc3339(body["ts"].get<std::string>()) : clock_();
    };

    svr.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, {{"ok", true}}); });

    svr.Post(R"(/users/([^/]+)/profile)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        std::vector<GoalEntry> values;
        for (const auto& v : body.at("values")) {
            values.push_back(GoalEntry{goal_category_from_string(v.at("category").get<std::string>()),
                                       v.value("goal", ""), v.value("action", "")});
        }
        auto blacklist = body.value("blacklist", std::set<std::string>{});
        auto offset = UtcOffset::parse(body.value("utc_offset", "Z"));
        auto p = engine_->initialize_profile(req.matches[1], values, std::move(blacklist), offset);
        snapshot();
        json vals = json::array();
        for (const auto& v : p.values) {
            vals.push_back({{"category", to_string(v.category)}, {"goal", v.goal}, {"action", v.action}});
        }
        send_json(res, {{"user", p.user_id},
                        {"values", vals},
                        {"blacklist", p.blacklist},
                        {"utc_offset", p.utc_offset.to_string()}});
    });

    svr.Post("/events", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const json& list = body.is_array() ? body : body.at("events");
        json results = json::array();
        for (const auto& item : list) {
            try {
                results.push_back(action_json(engine_->handle_client_event(event_from_json(item))));
            } catch (const Error& e) {
                send_json(res,
                          {{"error", to_string(e.code())},
                           {"message", e.what()},
                           {"accepted", results.size()},
                           {"results", results}},
                          status_for(e.code()));
                return;
            }
        }
        send_json(res, {{"accepted", results.size()}, {"results", results}});
    });

    svr.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto s = engine_->session(req.matches[1]);
        if (!s) {
            throw Error(Errc::UnknownSession, "no session '" + std::string(req.matches[1]) + "'");
        }
        send_json(res, session_view(*s));
    });

    svr.Post(R"(/sessions/([^/]+)/intent)", [this, when](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        auto step = engine_->submit_intent(req.matches[1], intent_from_string(body.at("intent").get<std::string>()),
                                           when(body));
        send_json(res, {{"next", step == IntentStep::AskMentalState ? "AskMentalState" : "Closed"}});
    });

    svr.Post(R"(/sessions/([^/]+)/mental-state)", [this, when](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        auto engagement = engagement_from_string(body.at("engagement").get<std::string>());
        auto feeling = Feeling::from_string(body.at("feeling").get<std::string>(), body.value("text", ""));
        auto request = engine_->submit_mental_state(req.matches[1], engagement, feeling, when(body));
        send_json(res, {{"request_id", request.request_id},
                        {"round", 1},
                        {"strategy", request.strategy() ? json(to_string(*request.strategy())) : json(nullptr)}});
    });

    svr.Post(R"(/sessions/([^/]+)/tick)", [this, when](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        std::optional<int> target;
        if (body.contains("round")) {
            target = body["round"].get<int>();
        }
        auto result = engine_->on_round_tick(req.matches[1], when(body), target);
        json out;
        if (const auto* next = std::get_if<NextRound>(&result)) {
            out = {{"result", "NextRound"},
                   {"request_id", next->request.request_id},
                   {"strategy", next->request.strategy() ? json(to_string(*next->request.strategy())) : json(nullptr)}};
        } else if (std::holds_alternative<Exhausted>(result)) {
            out = {{"result", "Exhausted"}};
        } else {
            out = {{"result", "NotYet"}};
        }
        send_json(res, out);
    });

    svr.Get(R"(/sessions/([^/]+)/persuasion)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string sid = req.matches[1];
        auto s = engine_->session(sid);
        if (!s) {
            throw Error(Errc::UnknownSession, "no session '" + sid + "'");
        }
        const int round = s->current_round();
        std::optional<PersuasionMessage> cached;
        {
            std::lock_guard lock(cache_mu_);
            if (auto it = delivered_.find(sid); it != delivered_.end() && it->second.first == round) {
                cached = it->second.second;
            }
        }
        std::optional<GenerationRequest> request;
        if (!cached) {
            request = engine_->take_pending(sid);
            if (!request) {
                throw Error(Errc::WrongState, "no persuasion pending for session " + sid);
            }
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, sid, round, cached, request](std::size_t, httplib::DataSink& sink) {
                auto write = [&sink](const std::string& frame) {
                    if (sink.is_writable()) {
                        sink.write(frame.data(), frame.size());
                    }
                };
                PersuasionMessage message;
                if (cached) {
                    message = *cached;
                    write(sse("chunk", {{"text", message.text}}));
                } else {
                    message = gateway_->generate_stream(*request, [&](const StreamEvent& ev) {
                        if (ev.kind == StreamEventKind::Reset) {
                            write(sse("reset", json::object()));
                        } else {
                            write(sse("chunk", {{"text", ev.text}}));
                        }
                    });
                    std::lock_guard lock(cache_mu_);
                    delivered_[sid] = {round, message};
                }
                write(sse("done", message_json(message, round)));
                sink.done();
                return true;
            });
    });

    svr.Post(R"(/sessions/([^/]+)/decision)", [this, when](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const std::string sid = req.matches[1];
        engine_->submit_decision(sid, decision_from_string(body.at("decision").get<std::string>()), when(body));
        auto s = engine_->session(sid);
        send_json(res, {{"closed", s && s->phase == SessionPhase::Closed}});
    });

    svr.Post(R"(/sessions/([^/]+)/feedback)", [this, when](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        engine_->submit_feedback(req.matches[1], body.at("round").get<int>(),
                                 feedback_from_string(body.at("feedback").get<std::string>()), when(body));
        send_json(res, {{"ok", true}});
    });

    svr.Put(R"(/habits/(.+))", [this, when](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        auto key = HabitKey::parse(req.matches[1].str());
        engine_->edit_habit(body.at("user").get<std::string>(), key, body.at("habit").get<std::string>(), when(body));
        send_json(res, {{"key", key.to_string()}, {"habit", body["habit"]}, {"source", "UserEdit"}});
    });

    svr.Get(R"(/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string user = req.matches[1];
        const bool all = user == "all";
        auto profile = all ? std::nullopt : engine_->profile(user);
        const UtcOffset offset = profile ? profile->utc_offset : UtcOffset{};
        const auto today = local_date(clock_(), offset);
        const auto period = parse_period(req.get_param_value("period"), today);
        std::vector<InterventionRecord> selected;
        for (auto& r : engine_->records()) {
            if (!all && r.user_id != user) {
                continue;
            }
            if (period) {
                auto d = local_date(r.start, offset);
                if (d < period->first || d > period->second) {
                    continue;
                }
            }
            selected.push_back(std::move(r));
        }
        json out = {{"user", user}, {"period", req.get_param_value("period").empty() ? "all" : req.get_param_value("period")}};
        out["metrics"] = build_report(selected).to_json();
        if (!all && period) {
            out["usage"] = engine_->with_log([&](const EventLog& log) {
                                      return usage_summary(log, user, period->first, period->second, offset,
                                                           profile ? &profile->blacklist : nullptr);
                                  }).to_json();
        }
        send_json(res, out);
    });

    svr.Post("/heartbeat", [this, when](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto user = body.at("user").get<std::string>();
        const bool ok = body.value("service_ok", true);
        const auto ts = when(body);
        {
            std::lock_guard lock(hb_mu_);
            auto it = heartbeats_.entries().find(user);
            if (it != heartbeats_.entries().end() && ts < it->second.last) {
                throw Error(Errc::OutOfOrder, "heartbeat precedes the previous one for " + user);
            }
        }
        engine_->on_heartbeat(user, ok, ts);
        {
            std::lock_guard lock(hb_mu_);
            heartbeats_.record(user, ts, ok);
        }
        std::vector<AlertEvent> sent;
        if (!ok) {
            sent = run_heartbeat_check_once(ts);
        }
        send_json(res, {{"ok", true}, {"alerts", sent.size()}});
    });
}

} // namespace nudge
