#include "nudge/orchestrator.hpp"

#include "nudge/error.hpp"
#include "nudge/log.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

namespace nudge {

namespace {

UsageEvent make_event(const std::string& user, Timestamp ts, EventKind kind) {
    UsageEvent e;
    e.user_id = user;
    e.ts = ts;
    e.kind = kind;
    return e;
}

} // namespace

std::string_view to_string(InterventionMode mode) {
    switch (mode) {
    case InterventionMode::Baseline: return "Baseline";
    case InterventionMode::Simple: return "Simple";
    case InterventionMode::Full: return "Full";
    }
    return "?";
}

InterventionMode intervention_mode_from_string(std::string_view text) {
    for (auto m : {InterventionMode::Baseline, InterventionMode::Simple, InterventionMode::Full}) {
        if (to_string(m) == text) {
            return m;
        }
    }
    throw Error(Errc::Parse, "unknown mode '" + std::string(text) + "'");
}

std::string_view to_string(SessionPhase phase) {
    switch (phase) {
    case SessionPhase::AwaitIntent: return "AwaitIntent";
    case SessionPhase::AwaitMentalState: return "AwaitMentalState";
    case SessionPhase::Persuading: return "Persuading";
    case SessionPhase::Closed: return "Closed";
    }
    return "?";
}

UserProfile make_profile(std::string user_id, const std::vector<GoalEntry>& values, std::set<std::string> blacklist,
                         UtcOffset offset) {
    if (user_id.empty()) {
        throw Error(Errc::InvalidArgument, "empty user id");
    }
    if (blacklist.empty() || blacklist.contains("")) {
        throw Error(Errc::EmptyBlacklist, "blacklist must name at least one app");
    }
    std::map<GoalCategory, GoalEntry> by_category;
    for (const auto& v : values) {
        if (v.goal.empty() || v.action.empty()) {
            throw Error(Errc::MalformedValue, std::string(to_string(v.category)) + " entry needs a goal and an action");
        }
        by_category[v.category] = v;
    }
    if (by_category.empty()) {
        throw Error(Errc::MalformedValue, "at least one value entry is required");
    }
    UserProfile p;
    p.user_id = std::move(user_id);
    for (auto& [_, v] : by_category) {
        p.values.push_back(std::move(v));
    }
    p.blacklist = std::move(blacklist);
    p.utc_offset = offset;
    return p;
}

Feeling Feeling::from_string(std::string_view kind, std::string text) {
    Feeling f;
    if (kind == "Stress") {
        f.kind = FeelingKind::Stress;
    } else if (kind == "Boredom") {
        f.kind = FeelingKind::Boredom;
    } else if (kind == "None" || kind == "Inertia") {
        f.kind = FeelingKind::None;
    } else if (kind == "Other") {
        f.kind = FeelingKind::Other;
        f.text = std::move(text);
    } else {
        throw Error(Errc::Parse, "unknown feeling '" + std::string(kind) + "'");
    }
    return f;
}

MentalState to_mental_state(const Feeling& feeling) {
    switch (feeling.kind) {
    case FeelingKind::Stress: return MentalState::stress();
    case FeelingKind::Boredom: return MentalState::boredom();
    case FeelingKind::None: return MentalState::inertia();
    case FeelingKind::Other: break;
    }
    if (feeling.text.empty()) {
        throw Error(Errc::InvalidArgument, "Other feeling requires text");
    }
    return MentalState::other(feeling.text);
}

Engine::Engine(EngineConfig config, std::shared_ptr<TemplateStore> templates)
    : config_(config), templates_(std::move(templates)) {
    if (config_.round_interval.count() <= 0 || config_.orphan_timeout.count() <= 0) {
        throw Error(Errc::InvalidConfig, "round interval and orphan timeout must be positive");
    }
}

void Engine::set_event_sink(EventSink sink) {
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
}

std::shared_ptr<const PromptTemplates> Engine::templates() const {
    if (templates_) {
        return templates_->current();
    }
    static const auto defaults = std::make_shared<const PromptTemplates>(PromptTemplates::defaults());
    return defaults;
}

void Engine::emit(UsageEvent e) {
    log_.ingest(e);
    if (sink_) {
        sink_(e);
    }
}

void Engine::require_in_order(const std::string& user, Timestamp now) const {
    auto last = log_.last_timestamp(user);
    if (last && now < *last) {
        throw Error(Errc::OutOfOrder, "operation at " + format_rfc3339(now) + " precedes " + format_rfc3339(*last) +
                                          " for user " + user);
    }
}

InterventionSession& Engine::find_session(const std::string& session_id) {
    auto it = state_.sessions.find(session_id);
    if (it == state_.sessions.end()) {
        throw Error(Errc::UnknownSession, "no session '" + session_id + "'");
    }
    return it->second;
}

const UserProfile& Engine::find_profile(const std::string& user) const {
    auto it = state_.profiles.find(user);
    if (it == state_.profiles.end()) {
        throw Error(Errc::NoProfile, "user " + user + " has no profile");
    }
    return it->second;
}

UserProfile Engine::initialize_profile(const std::string& user, const std::vector<GoalEntry>& values,
                                       std::set<std::string> blacklist, UtcOffset offset) {
    auto p = make_profile(user, values, std::move(blacklist), offset);
    std::lock_guard lock(mu_);
    state_.profiles[user] = p;
    return p;
}

OpenAction Engine::handle_client_event(const UsageEvent& e) {
    switch (e.kind) {
    case EventKind::ScreenUnlock: on_screen_unlock(e.user_id, e.ts); return NoAction{};
    case EventKind::ScreenOff: on_screen_off(e.user_id, e.ts); return NoAction{};
    case EventKind::AppOpen: return on_app_open(e.user_id, e.app, e.ts, e.location);
    case EventKind::AppClose: on_app_close(e.user_id, e.app, e.ts); return NoAction{};
    case EventKind::Heartbeat: on_heartbeat(e.user_id, e.service_ok.value_or(true), e.ts); return NoAction{};
    default: break;
    }
    throw Error(Errc::InvalidArgument, std::string(to_string(e.kind)) + " is not a client event");
}

void Engine::close_session(InterventionSession& s, Outcome outcome, bool timeout, Timestamp now) {
    auto e = make_event(s.user_id, now, EventKind::SessionClosed);
    e.session_id = s.session_id;
    e.app = s.app;
    e.outcome = outcome;
    e.round = outcome == Outcome::QuitAtRound ? s.current_round() : 0;
    e.timeout = timeout;
    emit(std::move(e));
    s.phase = SessionPhase::Closed;
    s.outcome = outcome;
    s.timeout = timeout;
    s.pending.reset();
    s.last_activity = now;
    live_by_user_.erase(s.user_id);
    auto& last = last_closed_by_user_[s.user_id];
    if (!last.empty() && last != s.session_id) {
        state_.sessions.erase(last);
    }
    last = s.session_id;
}

// Leaving mid-persuasion counts as quitting at the current round; leaving
// before answering the dialogs is recorded as unanswered.
void Engine::abandon(InterventionSession& s, Timestamp now) {
    switch (s.phase) {
    case SessionPhase::Persuading: close_session(s, Outcome::QuitAtRound, false, now); break;
    case SessionPhase::AwaitIntent: close_session(s, Outcome::ExitAtIntent, true, now); break;
    case SessionPhase::AwaitMentalState: close_session(s, Outcome::HabitualPass, true, now); break;
    case SessionPhase::Closed: break;
    }
}

void Engine::on_screen_unlock(const std::string& user, Timestamp now) {
    std::lock_guard lock(mu_);
    require_in_order(user, now);
    if (auto live = live_by_user_.find(user); live != live_by_user_.end()) {
        abandon(state_.sessions.at(live->second), now);
    }
    emit(make_event(user, now, EventKind::ScreenUnlock));
    state_.unlocks[user] = UnlockSession{now, {}};
}

void Engine::on_screen_off(const std::string& user, Timestamp now) {
    std::lock_guard lock(mu_);
    require_in_order(user, now);
    if (auto live = live_by_user_.find(user); live != live_by_user_.end()) {
        abandon(state_.sessions.at(live->second), now);
    }
    emit(make_event(user, now, EventKind::ScreenOff));
    state_.unlocks.erase(user);
}

OpenAction Engine::on_app_open(const std::string& user, const std::string& app, Timestamp now,
                               const std::string& location) {
    std::lock_guard lock(mu_);
    if (app.empty()) {
        throw Error(Errc::InvalidArgument, "AppOpen without app");
    }
    const auto& profile = find_profile(user);
    require_in_order(user, now);
    if (auto live = live_by_user_.find(user); live != live_by_user_.end()) {
        abandon(state_.sessions.at(live->second), now);
    }
    auto e = make_event(user, now, EventKind::AppOpen);
    e.app = app;
    e.location = location;
    auto& unlock = state_.unlocks.try_emplace(user, UnlockSession{now, {}}).first->second;
    if (!profile.blacklist.contains(app) || unlock.prompted_apps.contains(app)) {
        emit(std::move(e));
        return NoAction{};
    }
    char id[32];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(state_.next_session_seq));
    e.session_id = id;
    emit(std::move(e));
    ++state_.next_session_seq;
    InterventionSession s;
    s.session_id = id;
    s.user_id = user;
    s.app = app;
    s.location = location;
    s.opened_at = now;
    s.last_activity = now;
    state_.sessions.emplace(s.session_id, s);
    live_by_user_[user] = s.session_id;
    unlock.prompted_apps.insert(app);
    return ShowIntentDialog{s.session_id};
}

void Engine::on_app_close(const std::string& user, const std::string& app, Timestamp now) {
    std::lock_guard lock(mu_);
    require_in_order(user, now);
    const auto& ivs = log_.intervals(user);
    bool open = false;
    for (auto it = ivs.rbegin(); it != ivs.rend(); ++it) {
        if (it->app == app && !it->close) {
            open = true;
            break;
        }
    }
    if (!open) {
        throw Error(Errc::OrphanClose, "close of " + app + " without a matching open");
    }
    if (auto live = live_by_user_.find(user); live != live_by_user_.end()) {
        auto& s = state_.sessions.at(live->second);
        if (s.app == app) {
            abandon(s, now);
        }
    }
    auto e = make_event(user, now, EventKind::AppClose);
    e.app = app;
    emit(std::move(e));
}

void Engine::on_heartbeat(const std::string& user, bool service_ok, Timestamp now) {
    std::lock_guard lock(mu_);
    require_in_order(user, now);
    auto e = make_event(user, now, EventKind::Heartbeat);
    e.service_ok = service_ok;
    emit(std::move(e));
}

IntentStep Engine::submit_intent(const std::string& session_id, Intent intent, Timestamp now) {
    std::lock_guard lock(mu_);
    auto& s = find_session(session_id);
    if (s.phase != SessionPhase::AwaitIntent) {
        throw Error(Errc::WrongState, "session " + session_id + " is " + std::string(to_string(s.phase)));
    }
    require_in_order(s.user_id, now);
    auto e = make_event(s.user_id, now, EventKind::IntentReport);
    e.session_id = s.session_id;
    e.app = s.app;
    e.intent = intent;
    emit(std::move(e));
    s.last_activity = now;
    switch (intent) {
    case Intent::Habitual:
        if (config_.mode == InterventionMode::Baseline) {
            close_session(s, Outcome::HabitualPass, false, now);
            return IntentStep::Closed;
        }
        s.phase = SessionPhase::AwaitMentalState;
        return IntentStep::AskMentalState;
    case Intent::Instrumental: close_session(s, Outcome::InstrumentalPass, false, now); break;
    case Intent::Relax: close_session(s, Outcome::RelaxPass, false, now); break;
    case Intent::ExitAtIntent: close_session(s, Outcome::ExitAtIntent, false, now); break;
    }
    return IntentStep::Closed;
}

GenerationRequest Engine::submit_mental_state(const std::string& session_id, Engagement engagement,
                                              const Feeling& feeling, Timestamp now) {
    std::lock_guard lock(mu_);
    auto& s = find_session(session_id);
    if (s.phase != SessionPhase::AwaitMentalState) {
        throw Error(Errc::WrongState, "session " + session_id + " is " + std::string(to_string(s.phase)));
    }
    MentalStateCell cell{to_mental_state(feeling), engagement};
    require_in_order(s.user_id, now);
    auto e = make_event(s.user_id, now, EventKind::MentalStateReport);
    e.session_id = s.session_id;
    e.app = s.app;
    e.cell = cell;
    emit(std::move(e));
    s.cell = cell;
    s.round_cap = static_cast<int>(applicable_set(cell.key()).size());
    return start_round(s, now);
}

GenerationRequest Engine::start_round(InterventionSession& s, Timestamp now) {
    const auto& profile = find_profile(s.user_id);
    const auto key = s.cell->key();
    const int k = s.current_round() + 1;
    RoundState round;
    round.number = k;
    round.shown_at = now;

    PromptSlots slots;
    slots.app_name = s.app;
    slots.current_time = now;
    slots.utc_offset = profile.utc_offset;
    slots.location_label = s.location;
    auto stats = compute_context_stats(log_, s.user_id, now, profile.utc_offset);
    slots.habitual_minutes_today = stats.habitual_minutes_today;
    slots.minutes_since_last_habitual = stats.minutes_since_last_habitual;
    slots.cell = *s.cell;
    slots.goals = profile.values;

    PromptOptions options = config_.prompt;
    if (config_.mode == InterventionMode::Full) {
        auto strategy = state_.ledger.next_strategy(s.user_id, key, s.shown);
        if (!strategy) {
            throw Error(Errc::WrongState, "no strategy left for session " + s.session_id);
        }
        round.strategy = strategy;
        slots.strategy = strategy;
        if (*strategy == Strategy::ScaffoldingHabits) {
            HabitKey hk{s.cell->state.kind(), s.location, local_hour(now, profile.utc_offset)};
            round.habit = state_.habits.select(profile, hk);
            round.habit_key = hk;
            slots.habit = round.habit;
        }
        options.mode = PromptMode::Full;
    } else {
        options.mode = PromptMode::Simple;
    }

    GenerationRequest req;
    req.prompt = assemble_prompt(slots, *templates(), options);
    for (const auto& v : validate_filled(req.prompt, config_.prompt_cap)) {
        log::warn("prompt for " + s.session_id + ": " + std::string(to_string(v.kind)) + " " + v.detail);
    }
    req.slots = std::move(slots);
    req.request_id = s.session_id + "-r" + std::to_string(k);
    req.deadline = config_.generation_deadline;

    auto e = make_event(s.user_id, now, EventKind::PersuasionShown);
    e.session_id = s.session_id;
    e.app = s.app;
    e.round = k;
    e.strategy = round.strategy;
    emit(std::move(e));

    if (round.strategy) {
        state_.ledger.record_shown(s.user_id, key, *round.strategy);
        s.shown.insert(*round.strategy);
    }
    s.rounds.push_back(std::move(round));
    s.phase = SessionPhase::Persuading;
    s.pending = req;
    s.last_activity = now;
    return req;
}

TickResult Engine::tick_locked(InterventionSession& s, Timestamp now, std::optional<int> target_round) {
    if (s.phase != SessionPhase::Persuading) {
        throw Error(Errc::WrongState, "session " + s.session_id + " is " + std::string(to_string(s.phase)));
    }
    if (target_round && *target_round != s.current_round()) {
        return NotYet{};
    }
    if (now - s.rounds.back().shown_at < config_.round_interval) {
        return NotYet{};
    }
    require_in_order(s.user_id, now);
    if (s.current_round() < s.round_cap) {
        return NextRound{start_round(s, now)};
    }
    close_session(s, Outcome::ContinuedToExhaustion, false, now);
    return Exhausted{};
}

TickResult Engine::on_round_tick(const std::string& session_id, Timestamp now, std::optional<int> target_round) {
    std::lock_guard lock(mu_);
    return tick_locked(find_session(session_id), now, target_round);
}

void Engine::submit_decision(const std::string& session_id, Decision decision, Timestamp now) {
    std::lock_guard lock(mu_);
    auto& s = find_session(session_id);
    if (s.phase != SessionPhase::Persuading) {
        throw Error(Errc::WrongState, "session " + session_id + " is " + std::string(to_string(s.phase)));
    }
    require_in_order(s.user_id, now);
    auto e = make_event(s.user_id, now, EventKind::Decision);
    e.session_id = s.session_id;
    e.app = s.app;
    e.round = s.current_round();
    e.decision = decision;
    emit(std::move(e));
    s.last_activity = now;
    if (decision == Decision::Quit) {
        close_session(s, Outcome::QuitAtRound, false, now);
    }
}

void Engine::submit_feedback(const std::string& session_id, int round, Feedback feedback, Timestamp now) {
    std::lock_guard lock(mu_);
    auto& s = find_session(session_id);
    if (round < 1 || round > s.current_round()) {
        throw Error(Errc::UnknownRound, "round " + std::to_string(round) + " was not shown in " + session_id);
    }
    require_in_order(s.user_id, now);
    auto e = make_event(s.user_id, now, EventKind::Feedback);
    e.session_id = s.session_id;
    e.app = s.app;
    e.round = round;
    e.feedback = feedback;
    emit(std::move(e));
    const auto& r = s.rounds[static_cast<std::size_t>(round - 1)];
    if (feedback == Feedback::Down && r.strategy == Strategy::ScaffoldingHabits && r.habit_key) {
        state_.habits.remove(s.user_id, *r.habit_key);
    }
}

std::string Engine::select_habit(const std::string& user, const HabitKey& key) {
    std::lock_guard lock(mu_);
    return state_.habits.select(find_profile(user), key);
}

void Engine::edit_habit(const std::string& user, const HabitKey& key, std::string habit, Timestamp now) {
    std::lock_guard lock(mu_);
    if (!state_.habits.find(user, key)) {
        throw Error(Errc::UnknownKey, "no habit bound to " + key.to_string());
    }
    if (habit.empty()) {
        throw Error(Errc::MalformedValue, "habit must not be empty");
    }
    require_in_order(user, now);
    auto e = make_event(user, now, EventKind::HabitEdit);
    e.habit_key = key.to_string();
    e.habit = habit;
    emit(std::move(e));
    state_.habits.edit(user, key, std::move(habit));
}

std::vector<std::string> Engine::expire_sessions(Timestamp now) {
    std::lock_guard lock(mu_);
    std::vector<std::string> expired;
    for (auto& [user, sid] : std::map<std::string, std::string>(live_by_user_)) {
        auto& s = state_.sessions.at(sid);
        if (now - s.last_activity <= config_.orphan_timeout) {
            continue;
        }
        auto last = log_.last_timestamp(user);
        const Timestamp at = last && *last > now ? *last : now;
        switch (s.phase) {
        case SessionPhase::Persuading: close_session(s, Outcome::QuitAtRound, true, at); break;
        case SessionPhase::AwaitIntent: close_session(s, Outcome::ExitAtIntent, true, at); break;
        case SessionPhase::AwaitMentalState: close_session(s, Outcome::HabitualPass, true, at); break;
        case SessionPhase::Closed: continue;
        }
        expired.push_back(sid);
    }
    return expired;
}

std::vector<std::pair<std::string, TickResult>> Engine::tick_all(Timestamp now) {
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::string, TickResult>> out;
    for (const auto& [user, sid] : std::map<std::string, std::string>(live_by_user_)) {
        auto& s = state_.sessions.at(sid);
        if (s.phase != SessionPhase::Persuading) {
            continue;
        }
        auto last = log_.last_timestamp(user);
        if (last && now < *last) {
            continue;
        }
        auto r = tick_locked(s, now, std::nullopt);
        if (!std::holds_alternative<NotYet>(r)) {
            out.emplace_back(sid, std::move(r));
        }
    }
    return out;
}

std::optional<GenerationRequest> Engine::take_pending(const std::string& session_id) {
    std::lock_guard lock(mu_);
    auto& s = find_session(session_id);
    auto req = std::move(s.pending);
    s.pending.reset();
    return req;
}

std::optional<GenerationRequest> Engine::pending(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    auto it = state_.sessions.find(session_id);
    if (it == state_.sessions.end()) {
        throw Error(Errc::UnknownSession, "no session '" + session_id + "'");
    }
    return it->second.pending;
}

std::optional<InterventionSession> Engine::session(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    auto it = state_.sessions.find(session_id);
    if (it == state_.sessions.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::string> Engine::live_session(const std::string& user) const {
    std::lock_guard lock(mu_);
    auto it = live_by_user_.find(user);
    if (it == live_by_user_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<UnlockSession> Engine::unlock(const std::string& user) const {
    std::lock_guard lock(mu_);
    auto it = state_.unlocks.find(user);
    if (it == state_.unlocks.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<UserProfile> Engine::profile(const std::string& user) const {
    std::lock_guard lock(mu_);
    auto it = state_.profiles.find(user);
    if (it == state_.profiles.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<HabitBinding> Engine::habit_binding(const std::string& user, const HabitKey& key) const {
    std::lock_guard lock(mu_);
    return state_.habits.find(user, key);
}

StrategyLedger Engine::ledger() const {
    std::lock_guard lock(mu_);
    return state_.ledger;
}

MetricsReport Engine::report() const {
    std::lock_guard lock(mu_);
    return log_.incremental_report();
}

std::vector<InterventionRecord> Engine::records() const {
    std::lock_guard lock(mu_);
    return log_.records();
}

EngineState Engine::export_state() const {
    std::lock_guard lock(mu_);
    return state_;
}

namespace {

std::uint64_t session_seq(const std::string& sid) {
    return sid.size() > 1 && sid[0] == 's' ? std::strtoull(sid.c_str() + 1, nullptr, 10) : 0;
}

} // namespace

void Engine::restore(EngineState state, const std::vector<UsageEvent>& events) {
    EventLog log;
    for (const auto& e : events) {
        log.ingest(e);
    }
    for (const auto& [sid, s] : state.sessions) {
        if (s.phase != SessionPhase::Closed && log.find_record(sid) == nullptr && !events.empty()) {
            throw Error(Errc::CorruptSnapshot, "live session " + sid + " is missing from the log");
        }
    }

    // Counters only grow, so the larger of snapshot and log is the later one.
    std::map<StrategyLedger::Key, StrategyLedger::Counts> shown;
    for (const auto& e : log.events()) {
        if (e.kind != EventKind::PersuasionShown || !e.strategy) {
            continue;
        }
        const auto* r = log.find_record(e.session_id);
        if (r != nullptr && r->cell) {
            ++shown[{e.user_id, r->cell->key()}][static_cast<std::size_t>(canonical_rank(*e.strategy))];
        }
    }
    for (const auto& [key, counts] : shown) {
        auto merged = state.ledger.counts(key.first, key.second);
        for (std::size_t i = 0; i < merged.size(); ++i) {
            merged[i] = std::max(merged[i], counts[i]);
        }
        state.ledger.set_counts(key.first, key.second, merged);
    }

    std::lock_guard lock(mu_);
    state_ = std::move(state);
    log_ = std::move(log);
    live_by_user_.clear();
    last_closed_by_user_.clear();

    // The log is authoritative for anything that happened after the snapshot.
    std::vector<std::string> stale;
    const auto snapshot_seq = state_.next_session_seq;
    for (const auto& r : log_.records()) {
        const auto seq = session_seq(r.session_id);
        state_.next_session_seq = std::max(state_.next_session_seq, seq + 1);
        auto it = state_.sessions.find(r.session_id);
        const bool known = it != state_.sessions.end();
        if (!known && r.closed() && seq < snapshot_seq) {
            continue; // closed and evicted before the snapshot
        }
        if (known && it->second.current_round() == static_cast<int>(r.rounds.size()) &&
            it->second.outcome == r.outcome) {
            continue;
        }
        InterventionSession s = known ? it->second : InterventionSession{};
        s.session_id = r.session_id;
        s.user_id = r.user_id;
        s.app = r.app;
        s.opened_at = r.start;
        s.last_activity = *log_.last_timestamp(r.user_id);
        s.cell = r.cell;
        s.rounds.resize(r.rounds.size());
        for (std::size_t i = 0; i < r.rounds.size(); ++i) {
            s.rounds[i].number = r.rounds[i].number;
            s.rounds[i].strategy = r.rounds[i].strategy;
            if (r.rounds[i].strategy) {
                s.shown.insert(*r.rounds[i].strategy);
            }
        }
        s.pending.reset();
        if (r.closed()) {
            s.phase = SessionPhase::Closed;
            s.outcome = r.outcome;
            s.timeout = r.timeout;
        } else {
            s.phase = !r.rounds.empty() ? SessionPhase::Persuading
                      : r.intent         ? SessionPhase::AwaitMentalState
                                         : SessionPhase::AwaitIntent;
            s.outcome.reset();
            stale.push_back(r.session_id);
        }
        state_.sessions[r.session_id] = std::move(s);
    }

    // A user has one live session at a time, so sessions close in id order.
    std::map<std::string, std::uint64_t> last_closed_seq;
    for (const auto& [sid, s] : state_.sessions) {
        if (s.phase != SessionPhase::Closed) {
            if (!live_by_user_.emplace(s.user_id, sid).second) {
                throw Error(Errc::CorruptSnapshot, "two live sessions for user " + s.user_id);
            }
            continue;
        }
        const auto seq = session_seq(sid);
        auto [it, inserted] = last_closed_seq.try_emplace(s.user_id, seq);
        if (inserted || seq >= it->second) {
            it->second = seq;
            last_closed_by_user_[s.user_id] = sid;
        }
    }
    for (auto it = state_.sessions.begin(); it != state_.sessions.end();) {
        const auto& s = it->second;
        const bool keep = s.phase != SessionPhase::Closed || last_closed_by_user_[s.user_id] == it->first;
        it = keep ? std::next(it) : state_.sessions.erase(it);
    }

    // Sessions the snapshot did not see through can no longer be answered.
    for (const auto& sid : stale) {
        auto& s = state_.sessions.at(sid);
        const auto now = *log_.last_timestamp(s.user_id);
        switch (s.phase) {
        case SessionPhase::Persuading: close_session(s, Outcome::QuitAtRound, true, now); break;
        case SessionPhase::AwaitMentalState: close_session(s, Outcome::HabitualPass, true, now); break;
        default: close_session(s, Outcome::ExitAtIntent, true, now); break;
        }
    }
}

} // namespace nudge
