#include "nudge/error.hpp"
#include "nudge/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>

namespace nudge {

std::vector<std::string> OutputConstraints::default_blocklist() {
    // Seed list; deployments extend it through the configured blocklist file.
    return {
        "fuck", "shit", "bitch", "bastard", "damn you", "idiot", "stupid", "loser", "pathetic",
        "worthless", "shame on you", "buy now", "discount", "promo code", "coupon", "sponsored",
        "limited offer", "subscribe to", "free trial", "click here",
    };
}

std::vector<std::string> OutputConstraints::load_blocklist(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot read blocklist " + path.string());
    }
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        out.push_back(line);
    }
    return out;
}

std::string_view to_string(OutputViolationKind kind) {
    switch (kind) {
    case OutputViolationKind::Empty: return "Empty";
    case OutputViolationKind::TooLong: return "TooLong";
    case OutputViolationKind::Blocklist: return "Blocklist";
    case OutputViolationKind::MultiParagraph: return "MultiParagraph";
    }
    return "?";
}

std::string_view to_string(BackendKind kind) {
    return kind == BackendKind::Remote ? "Remote" : "Fallback";
}

std::size_t count_words(std::string_view text) {
    std::size_t words = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) {
            ++words;
        }
        in_word = !space;
    }
    return words;
}

namespace {

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Phrase match on word boundaries, so "loser" does not hit "closer".
bool contains_phrase(std::string_view haystack, std::string_view phrase) {
    const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (auto pos = haystack.find(phrase); pos != std::string_view::npos; pos = haystack.find(phrase, pos + 1)) {
        const auto end = pos + phrase.size();
        const bool left = pos == 0 || !is_word(haystack[pos - 1]) || !is_word(phrase.front());
        const bool right = end == haystack.size() || !is_word(haystack[end]) || !is_word(phrase.back());
        if (left && right) {
            return true;
        }
    }
    return false;
}

} // namespace

std::vector<OutputViolation> validate_output(std::string_view text, const OutputConstraints& constraints) {
    std::vector<OutputViolation> out;
    if (count_words(text) == 0) {
        out.push_back({OutputViolationKind::Empty, "message is empty"});
        return out;
    }
    const auto words = count_words(text);
    if (words > constraints.word_cap) {
        out.push_back({OutputViolationKind::TooLong,
                       std::to_string(words) + " words > " + std::to_string(constraints.word_cap)});
    }
    const std::string haystack = lower(text);
    for (const auto& phrase : constraints.blocklist) {
        if (!phrase.empty() && contains_phrase(haystack, lower(phrase))) {
            out.push_back({OutputViolationKind::Blocklist, phrase});
        }
    }
    static const std::regex blank_line(R"(\n[ \t\r]*\n)");
    std::string trimmed(text);
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) {
        trimmed.pop_back();
    }
    if (std::regex_search(trimmed, blank_line)) {
        out.push_back({OutputViolationKind::MultiParagraph, "message spans more than one paragraph"});
    }
    return out;
}

std::vector<std::string> split_chunks(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = pos;
        while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) {
            ++end;
        }
        while (end < text.size() && std::isspace(static_cast<unsigned char>(text[end]))) {
            ++end;
        }
        out.emplace_back(text.substr(pos, end - pos));
        pos = end;
    }
    return out;
}

namespace {

constexpr const char* kGenericSafe =
    "Hi, this looks like a moment of habit rather than need. How about putting the phone down and "
    "giving your attention to something that matters to you? You can always come back later.";

const char* filled_template(std::optional<Strategy> strategy) {
    if (!strategy) {
        return "Hi, you have spent {habitual_minutes} minutes on habitual phone use today. How about closing "
               "{app_name} now and doing something that matters to you? Your time is worth it.";
    }
    switch (*strategy) {
    case Strategy::Understanding:
        return "Hi, it sounds like opening {app_name} just now came from habit, and that is completely normal. "
               "Everyone has moments like this. You have already spent {habitual_minutes} minutes on habitual "
               "phone use today, so how about putting the phone down and giving yourself a real break?";
    case Strategy::Comforting:
        return "Hey, whatever you are feeling right now is okay, and it will pass. You are more capable than "
               "this moment suggests. Put {app_name} aside, take a slow breath and give the next small step a "
               "try. You might be pleasantly surprised by how it goes.";
    case Strategy::Evoking:
        return "Hi! I know {app_name} is tempting, but remember your goal: {goal}. Every minute you put back "
               "into it brings you closer. Keep going, you are one step nearer to getting there!";
    case Strategy::ScaffoldingHabits:
        return "Hi, why not swap this moment on {app_name} for something better: {habit}? It is a small step "
               "toward your goals and a habit you will be glad to have built.";
    }
    return kGenericSafe;
}

const char* safe_template(std::optional<Strategy> strategy) {
    if (!strategy) {
        return kGenericSafe;
    }
    switch (*strategy) {
    case Strategy::Understanding:
        return "Hi, reaching for the phone out of habit is completely normal, and everyone does it. How about "
               "putting it down for now and giving yourself a real break?";
    case Strategy::Comforting:
        return "Hey, whatever you are feeling right now is okay, and it will pass. Take a slow breath, put the "
               "phone aside and give the next small step a try.";
    case Strategy::Evoking:
        return "Hi! Remember the goals you set for yourself. Every minute you put back into them brings you "
               "closer, so keep going!";
    case Strategy::ScaffoldingHabits:
        return "Hi, why not swap this moment on the phone for the habit you chose for yourself? It is a small "
               "step toward your goals.";
    }
    return kGenericSafe;
}

} // namespace

std::string fallback_text(const GenerationRequest& request, const OutputConstraints& constraints) {
    const auto& slots = request.slots;
    const std::map<std::string, std::string, std::less<>> vars{
        {"app_name", slots.app_name.empty() ? std::string("this app") : slots.app_name},
        {"habitual_minutes", std::to_string(slots.habitual_minutes_today)},
        {"goal", slots.goals.empty() ? std::string("the goals you set") : slots.goals.front().goal},
        {"habit", slots.habit.value_or("a short walk")},
    };
    const auto strategy = request.strategy();
    std::string text = render_template(filled_template(strategy), vars);
    if (validate_output(text, constraints).empty()) {
        return text;
    }
    text = safe_template(strategy);
    if (validate_output(text, constraints).empty()) {
        return text;
    }
    // A configured blocklist or word cap can reject even the canned wording;
    // the shortest message that can still be delivered is the last resort.
    return "Time for a break.";
}

PersuasionMessage fallback_generate(const GenerationRequest& request, const OutputConstraints& constraints) {
    PersuasionMessage m;
    m.text = fallback_text(request, constraints);
    m.strategy = request.strategy();
    m.backend = BackendKind::Fallback;
    m.complete = true;
    return m;
}

void FallbackBackend::stream(const GenerationRequest& request, const StreamDeadlines&,
                             const ChunkCallback& on_chunk) {
    for (const auto& chunk : split_chunks(fallback_text(request, constraints_))) {
        if (!on_chunk(chunk)) {
            return;
        }
    }
}

} // namespace nudge
