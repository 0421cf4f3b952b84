#include "nudge/error.hpp"
#include "nudge/log.hpp"
#include "nudge/prompt.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace nudge {

namespace {

struct BuiltIn {
    const char* stem;
    const char* text;
};

// Default wording. The shipped core/templates/ directory holds the same text.
constexpr BuiltIn kBuiltIns[] = {
    {"background",
     "<Background>\n"
     "You are a supportive digital wellbeing companion. The user has just opened {app_name} out of habit "
     "rather than for a specific purpose. Write one short message that helps the user put the phone down "
     "and return to something meaningful."},
    {"user_data",
     "<User Data>\n"
     "Current time: {current_time}\n"
     "Location: {location}\n"
     "Habitual phone use today: {habitual_minutes} minutes\n"
     "Time since the last habitual phone check: {since_last}"},
    {"mental_state",
     "<User Mental State>\n"
     "{mental_state}"},
    {"goals",
     "<User Goals>\n"
     "{goals}"},
    {"notes",
     "<Notes>\n"
     "- Keep the message under {word_cap} words.\n"
     "- Address the user directly in the second person.\n"
     "- Be warm and respectful. Never shame, blame or threaten the user.\n"
     "- Do not mention products, brands, promotions or any other commercial content.\n"
     "- Use only the information given above and do not invent personal details."},
    {"output_format",
     "<Output Format>\n"
     "Plain text in a single paragraph. No lists, no headings, no emojis and no quotation marks around the "
     "message."},
    {"strategy.understanding",
     "<Persuasion Strategy: Understanding>\n"
     "Show that you understand how the user feels right now. Acknowledge that the feeling is normal and "
     "that everyone goes through moments like this, then gently invite the user to step away from {app_name}."},
    {"strategy.comforting",
     "<Persuasion Strategy: Comforting>\n"
     "Comfort the user about the negative feeling they reported. Use encouragement, light humor or "
     "reassurance to make the situation feel manageable, and help the user see meaning in returning to "
     "what matters."},
    {"strategy.evoking",
     "<Persuasion Strategy: Evoking>\n"
     "Remind the user of one goal from <User Goals> that fits the current activity. Connect finishing the "
     "current activity with reaching that goal so that putting the phone down feels worthwhile."},
    {"strategy.scaffolding_habits",
     "<Persuasion Strategy: Scaffolding Habits>\n"
     "Suggest that the user replace this moment of phone use with the following habit: {habit}. Explain "
     "briefly how doing it now supports the user's goals and wellbeing."},
    {"strategy.simple",
     "<Persuasion>\n"
     "Using the user data above, write a persuasive message that encourages the user to stop using "
     "{app_name} now."},
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::Io, "cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    // Editors like to append a final newline; templates never end with one.
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) {
        text.pop_back();
    }
    return text;
}

} // namespace

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    for (const auto& b : kBuiltIns) {
        t.sections_.emplace(b.stem, b.text);
    }
    return t;
}

std::vector<std::string> PromptTemplates::known_stems() {
    std::vector<std::string> out;
    for (const auto& b : kBuiltIns) {
        out.emplace_back(b.stem);
    }
    return out;
}

std::string PromptTemplates::strategy_stem(Strategy strategy) {
    switch (strategy) {
    case Strategy::Understanding: return "strategy.understanding";
    case Strategy::Comforting: return "strategy.comforting";
    case Strategy::Evoking: return "strategy.evoking";
    case Strategy::ScaffoldingHabits: return "strategy.scaffolding_habits";
    }
    return "strategy.understanding";
}

PromptTemplates PromptTemplates::load_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error(Errc::Io, "template directory not found: " + dir.string());
    }
    PromptTemplates t = defaults();
    for (const auto& stem : known_stems()) {
        const auto path = dir / (stem + ".txt");
        if (std::filesystem::exists(path)) {
            t.sections_[stem] = read_file(path);
        }
    }
    return t;
}

void PromptTemplates::write_dir(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [stem, text] : sections_) {
        std::ofstream out(dir / (stem + ".txt"), std::ios::binary | std::ios::trunc);
        out << text << '\n';
        if (!out) {
            throw Error(Errc::Io, "cannot write template " + stem);
        }
    }
}

const std::string& PromptTemplates::get(std::string_view stem) const {
    const auto it = sections_.find(stem);
    if (it == sections_.end()) {
        throw Error(Errc::MissingSlot, "no template named '" + std::string(stem) + "'");
    }
    return it->second;
}

void PromptTemplates::set(std::string_view stem, std::string text) {
    sections_[std::string(stem)] = std::move(text);
}

TemplateStore::TemplateStore(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
    reload();
}

std::filesystem::file_time_type TemplateStore::newest_mtime() const {
    std::filesystem::file_time_type newest{};
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(*dir_, ec)) {
        const auto t = entry.last_write_time(ec);
        if (!ec && t > newest) {
            newest = t;
        }
    }
    return newest;
}

void TemplateStore::reload() {
    std::lock_guard lock(mu_);
    if (!dir_) {
        templates_ = std::make_shared<const PromptTemplates>(PromptTemplates::defaults());
        return;
    }
    loaded_mtime_ = newest_mtime();
    templates_ = std::make_shared<const PromptTemplates>(PromptTemplates::load_dir(*dir_));
    last_check_ = std::chrono::steady_clock::now();
}

std::shared_ptr<const PromptTemplates> TemplateStore::current() {
    {
        std::lock_guard lock(mu_);
        if (!dir_) {
            return templates_;
        }
        const auto now = std::chrono::steady_clock::now();
        if (now - last_check_ < std::chrono::seconds(1)) {
            return templates_;
        }
        last_check_ = now;
        if (newest_mtime() == loaded_mtime_) {
            return templates_;
        }
    }
    try {
        reload();
        log::info("prompt templates reloaded from " + dir_->string());
    } catch (const std::exception& e) {
        log::warn(std::string("template reload failed, keeping previous set: ") + e.what());
    }
    std::lock_guard lock(mu_);
    return templates_;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& vars) {
    std::string out;
    out.reserve(tmpl.size() + 64);
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        out.append(tmpl.substr(pos, open - pos));
        auto end = open + 1;
        while (end < tmpl.size() && (std::islower(static_cast<unsigned char>(tmpl[end])) || tmpl[end] == '_')) {
            ++end;
        }
        if (end < tmpl.size() && tmpl[end] == '}' && end > open + 1) {
            const auto name = tmpl.substr(open + 1, end - open - 1);
            const auto it = vars.find(name);
            if (it == vars.end()) {
                throw Error(Errc::MissingSlot, "no value for template slot {" + std::string(name) + "}");
            }
            out.append(it->second);
            pos = end + 1;
        } else {
            out.push_back('{');
            pos = open + 1;
        }
    }
    return out;
}

} // namespace nudge
