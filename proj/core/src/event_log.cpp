#include "nudge/analytics.hpp"
#include "nudge/error.hpp"

#include <algorithm>

namespace nudge {

bool InterventionRecord::any_up() const {
    return std::any_of(rounds.begin(), rounds.end(), [](const RoundRecord& r) { return r.thumb_up; });
}

bool InterventionRecord::any_down() const {
    return std::any_of(rounds.begin(), rounds.end(), [](const RoundRecord& r) { return r.thumb_down; });
}

namespace {

bool needs_session(EventKind kind) {
    switch (kind) {
    case EventKind::IntentReport:
    case EventKind::MentalStateReport:
    case EventKind::PersuasionShown:
    case EventKind::Decision:
    case EventKind::Feedback:
    case EventKind::SessionClosed:
        return true;
    default:
        return false;
    }
}

} // namespace

std::size_t EventLog::count(EventKind kind) const {
    return kind_counts_[static_cast<std::size_t>(kind)];
}

std::vector<InterventionRecord> EventLog::records() const {
    return records_;
}

const InterventionRecord* EventLog::find_record(const std::string& session_id) const {
    const auto it = record_index_.find(session_id);
    return it == record_index_.end() ? nullptr : &records_[it->second];
}

const std::vector<UsageInterval>& EventLog::intervals(const std::string& user) const {
    static const std::vector<UsageInterval> empty;
    const auto it = users_.find(user);
    return it == users_.end() ? empty : it->second.intervals;
}

std::optional<Timestamp> EventLog::last_timestamp(const std::string& user) const {
    const auto it = users_.find(user);
    if (it == users_.end() || !it->second.any) {
        return std::nullopt;
    }
    return it->second.last_ts;
}

std::int64_t EventLog::max_interval_seconds(const std::string& user) const {
    const auto it = users_.find(user);
    return it == users_.end() ? 0 : it->second.max_interval_seconds;
}

std::vector<std::string> EventLog::users() const {
    std::vector<std::string> out;
    out.reserve(users_.size());
    for (const auto& [id, _] : users_) {
        out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void EventLog::validate(const UsageEvent& e) const {
    if (e.user_id.empty()) {
        throw Error(Errc::InvalidArgument, "event without user");
    }
    const auto uit = users_.find(e.user_id);
    if (uit != users_.end() && uit->second.any && e.ts < uit->second.last_ts) {
        throw Error(Errc::OutOfOrder, "event at " + format_rfc3339(e.ts) + " precedes " +
                                          format_rfc3339(uit->second.last_ts) + " for user " + e.user_id);
    }
    switch (e.kind) {
    case EventKind::AppOpen:
    case EventKind::AppClose:
        if (e.app.empty()) {
            throw Error(Errc::InvalidArgument, std::string(to_string(e.kind)) + " without app");
        }
        if (e.kind == EventKind::AppClose &&
            (uit == users_.end() || !uit->second.open_by_app.contains(e.app))) {
            throw Error(Errc::OrphanClose, "close of " + e.app + " without a matching open");
        }
        if (e.kind == EventKind::AppOpen && !e.session_id.empty() && record_index_.contains(e.session_id)) {
            throw Error(Errc::InvalidArgument, "duplicate session " + e.session_id);
        }
        return;
    default:
        break;
    }
    if (!needs_session(e.kind)) {
        return;
    }
    const InterventionRecord* r = find_record(e.session_id);
    if (r == nullptr || r->user_id != e.user_id) {
        throw Error(Errc::UnknownSession, "no session '" + e.session_id + "' for user " + e.user_id);
    }
    if (r->closed() && e.kind != EventKind::Feedback) {
        throw Error(Errc::WrongState, std::string(to_string(e.kind)) + " after session " + e.session_id + " closed");
    }
    const auto rounds = static_cast<int>(r->rounds.size());
    switch (e.kind) {
    case EventKind::IntentReport:
        if (!e.intent) {
            throw Error(Errc::InvalidArgument, "IntentReport without intent");
        }
        if (r->intent) {
            throw Error(Errc::WrongState, "intent already reported for " + e.session_id);
        }
        break;
    case EventKind::MentalStateReport:
        if (!e.cell) {
            throw Error(Errc::InvalidArgument, "MentalStateReport without cell");
        }
        break;
    case EventKind::PersuasionShown:
        if (e.round != rounds + 1 || e.round > kMaxRounds) {
            throw Error(Errc::InvalidArgument, "round " + std::to_string(e.round) + " out of sequence");
        }
        break;
    case EventKind::Decision:
    case EventKind::Feedback:
        if (e.round < 1 || e.round > rounds) {
            throw Error(Errc::UnknownRound, "round " + std::to_string(e.round) + " was not shown in " + e.session_id);
        }
        if ((e.kind == EventKind::Decision && !e.decision) || (e.kind == EventKind::Feedback && !e.feedback)) {
            throw Error(Errc::InvalidArgument, std::string(to_string(e.kind)) + " without value");
        }
        break;
    case EventKind::SessionClosed:
        if (!e.outcome) {
            throw Error(Errc::InvalidArgument, "SessionClosed without outcome");
        }
        if (*e.outcome == Outcome::QuitAtRound && (e.round < 1 || e.round > rounds)) {
            throw Error(Errc::UnknownRound, "quit at round " + std::to_string(e.round) + " not shown");
        }
        break;
    default:
        break;
    }
}

void EventLog::close_interval(UserState& u, std::size_t index, Timestamp at) {
    auto& iv = u.intervals[index];
    iv.close = at;
    u.max_interval_seconds = std::max<std::int64_t>(u.max_interval_seconds, (at - iv.open).count());
    u.open_by_app.erase(iv.app);
}

void EventLog::apply(const UsageEvent& e) {
    UserState& u = users_[e.user_id];
    u.last_ts = e.ts;
    u.any = true;

    InterventionRecord* r = nullptr;
    if (needs_session(e.kind)) {
        r = &records_[record_index_.at(e.session_id)];
    }

    switch (e.kind) {
    case EventKind::ScreenUnlock:
    case EventKind::ScreenOff:
        u.unlock_intents.clear();
        break;
    case EventKind::AppOpen: {
        if (const auto it = u.open_by_app.find(e.app); it != u.open_by_app.end()) {
            close_interval(u, it->second, e.ts);
        }
        UsageInterval iv;
        iv.app = e.app;
        iv.open = e.ts;
        if (const auto it = u.unlock_intents.find(e.app);
            it != u.unlock_intents.end() && it->second != Intent::ExitAtIntent) {
            iv.intent = it->second;
        }
        u.open_by_app[e.app] = u.intervals.size();
        u.intervals.push_back(std::move(iv));
        if (!e.session_id.empty()) {
            InterventionRecord rec;
            rec.user_id = e.user_id;
            rec.session_id = e.session_id;
            rec.app = e.app;
            rec.start = e.ts;
            record_index_.emplace(e.session_id, records_.size());
            records_.push_back(std::move(rec));
        }
        break;
    }
    case EventKind::AppClose:
        close_interval(u, u.open_by_app.at(e.app), e.ts);
        break;
    case EventKind::IntentReport: {
        r->intent = e.intent;
        if (const auto it = u.open_by_app.find(r->app); it != u.open_by_app.end()) {
            u.intervals[it->second].intent = e.intent;
            u.intervals[it->second].reported = true;
        }
        u.unlock_intents[r->app] = *e.intent;
        break;
    }
    case EventKind::MentalStateReport:
        r->cell = e.cell;
        break;
    case EventKind::PersuasionShown: {
        RoundRecord round;
        round.number = e.round;
        round.strategy = e.strategy;
        r->rounds.push_back(round);
        break;
    }
    case EventKind::Decision:
        r->rounds[static_cast<std::size_t>(e.round - 1)].decision = e.decision;
        break;
    case EventKind::Feedback: {
        const bool had_up = r->any_up();
        const bool had_down = r->any_down();
        auto& round = r->rounds[static_cast<std::size_t>(e.round - 1)];
        (*e.feedback == Feedback::Up ? round.thumb_up : round.thumb_down) = true;
        if (r->eligible()) {
            if (!had_up && r->any_up()) {
                ++counters_.thumbs_up;
            }
            if (!had_down && r->any_down()) {
                ++counters_.thumbs_down;
            }
        }
        break;
    }
    case EventKind::SessionClosed:
        r->outcome = e.outcome;
        r->quit_round = *e.outcome == Outcome::QuitAtRound ? e.round : 0;
        r->timeout = e.timeout;
        if (r->eligible()) {
            count_closed(*r);
        }
        break;
    case EventKind::HabitEdit:
    case EventKind::Heartbeat:
        break;
    }
}

void EventLog::count_closed(const InterventionRecord& r) {
    auto& c = counters_;
    c.outcome_counts[std::string(to_string(*r.outcome))] += 1;
    const bool exit_at_intent = *r.outcome == Outcome::ExitAtIntent;
    const bool quit = *r.outcome == Outcome::QuitAtRound;
    if (exit_at_intent || r.intent == Intent::Habitual) {
        ++c.overall_visits;
        if (exit_at_intent || quit) {
            ++c.overall_quits;
        }
    }
    if (!r.reached_persuasion()) {
        return;
    }
    ++c.persuaded;
    if (quit) {
        ++c.persuaded_quits;
        ++c.round_quits[static_cast<std::size_t>(r.quit_round)];
    }
    for (const auto& round : r.rounds) {
        ++c.round_reached[static_cast<std::size_t>(round.number)];
        const bool quit_here = quit && round.number == r.quit_round;
        const auto bump = [&](std::map<std::string, Ratio>& table, const std::string& key) {
            auto& ratio = table[key];
            ++ratio.denominator;
            if (quit_here) {
                ++ratio.numerator;
            }
        };
        if (round.strategy) {
            bump(c.strategy, std::string(to_string(*round.strategy)));
        }
        if (r.cell) {
            bump(c.cell, to_string(r.cell->key()));
            bump(c.engagement, std::string(to_string(r.cell->engagement)));
        }
    }
    if (r.any_up()) {
        ++c.thumbs_up;
    }
    if (r.any_down()) {
        ++c.thumbs_down;
    }
}

void EventLog::ingest(const UsageEvent& event) {
    validate(event);
    events_.push_back(event);
    ++kind_counts_[static_cast<std::size_t>(event.kind)];
    apply(events_.back());
}

MetricsReport MetricCounters::to_report() const {
    MetricsReport rep;
    rep.outcome_counts = outcome_counts;
    rep.overall = {overall_quits, overall_visits};
    rep.persuasion = {persuaded_quits, persuaded};
    for (int k = 1; k <= kMaxRounds; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        if (round_reached[idx] > 0) {
            rep.by_round[std::to_string(k)] = {round_quits[idx], round_reached[idx]};
        }
    }
    rep.by_strategy = strategy;
    rep.by_cell = cell;
    rep.by_engagement = engagement;
    rep.thumbs_up = {thumbs_up, persuaded};
    rep.thumbs_down = {thumbs_down, persuaded};
    return rep;
}

ContextStats compute_context_stats(const EventLog& log, const std::string& user, Timestamp now, UtcOffset offset) {
    using std::chrono::seconds;
    const auto& intervals = log.intervals(user);
    const Timestamp day_start = local_midnight(now, offset);
    // Intervals are stored in open order, so anything that could overlap today
    // opened no earlier than day_start minus the longest interval seen.
    const Timestamp horizon = day_start - seconds(log.max_interval_seconds(user));

    std::int64_t total_seconds = 0;
    std::optional<Timestamp> last_open;
    for (auto it = intervals.rbegin(); it != intervals.rend() && it->open >= horizon; ++it) {
        if (it->intent != Intent::Habitual || !it->close || *it->close > now) {
            continue;
        }
        const Timestamp from = std::max(it->open, day_start);
        const Timestamp to = std::min(*it->close, now);
        if (to > from) {
            total_seconds += (to - from).count();
        }
        if (it->open >= day_start && (!last_open || it->open > *last_open)) {
            last_open = it->open;
        }
    }
    ContextStats stats;
    stats.habitual_minutes_today = total_seconds / 60;
    if (last_open) {
        stats.minutes_since_last_habitual = (now - *last_open).count() / 60;
    }
    return stats;
}

DailyUsageSummary usage_summary(const EventLog& log, const std::string& user, std::chrono::sys_days first_day,
                                std::chrono::sys_days last_day, UtcOffset offset,
                                const std::set<std::string>* blacklist) {
    if (last_day < first_day) {
        throw Error(Errc::OutOfRange, "period ends before it starts");
    }
    const Timestamp from = local_midnight(first_day, offset);
    const Timestamp to = local_midnight(last_day + std::chrono::days(1), offset);

    DailyUsageSummary s;
    s.days = (last_day - first_day).count() + 1;
    for (const auto& iv : log.intervals(user)) {
        if (blacklist != nullptr && !blacklist->contains(iv.app)) {
            continue;
        }
        if (iv.open >= from && iv.open < to) {
            ++s.opens;
            if (iv.intent) {
                ++s.categorized_opens;
                if (*iv.intent == Intent::Habitual) {
                    ++s.habitual_opens;
                }
            }
        }
        if (iv.close) {
            const Timestamp a = std::max(iv.open, from);
            const Timestamp b = std::min(*iv.close, to);
            if (b > a) {
                s.usage_seconds += (b - a).count();
            }
        }
    }
    s.opens_per_day = static_cast<double>(s.opens) / static_cast<double>(s.days);
    s.usage_hours_per_day = static_cast<double>(s.usage_seconds) / 3600.0 / static_cast<double>(s.days);
    if (s.categorized_opens > 0) {
        s.habitual_proportion = static_cast<double>(s.habitual_opens) / static_cast<double>(s.categorized_opens);
    }
    return s;
}

nlohmann::json DailyUsageSummary::to_json() const {
    nlohmann::json j{
        {"days", days},
        {"opens", opens},
        {"categorized_opens", categorized_opens},
        {"habitual_opens", habitual_opens},
        {"usage_seconds", usage_seconds},
        {"opens_per_day", opens_per_day},
        {"usage_hours_per_day", usage_hours_per_day},
    };
    j["habitual_proportion"] = habitual_proportion ? nlohmann::json(*habitual_proportion) : nlohmann::json(nullptr);
    return j;
}

} // namespace nudge
