#include "nudge/error.hpp"
#include "nudge/gateway.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>

namespace nudge {

namespace {

struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(Errc::InvalidConfig, "backend endpoint needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

std::string build_chat_request_body(const std::string& model, const std::string& prompt_text) {
    nlohmann::json body{
        {"model", model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt_text}}})},
        {"stream", true},
    };
    return body.dump();
}

std::vector<std::string> SseDecoder::feed(std::string_view bytes) {
    std::vector<std::string> events;
    buffer_.append(bytes);
    std::size_t start = 0;
    while (true) {
        const auto nl = buffer_.find('\n', start);
        if (nl == std::string::npos) {
            break;
        }
        std::string_view line(buffer_.data() + start, nl - start);
        start = nl + 1;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            if (has_data_) {
                events.push_back(std::move(data_));
                data_.clear();
                has_data_ = false;
            }
            continue;
        }
        if (line.front() == ':') {
            continue; // comment / keep-alive
        }
        const auto colon = line.find(':');
        const auto field = line.substr(0, colon);
        std::string_view value = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 1);
        if (!value.empty() && value.front() == ' ') {
            value.remove_prefix(1);
        }
        if (field == "data") {
            if (has_data_) {
                data_.push_back('\n');
            }
            data_.append(value);
            has_data_ = true;
        }
    }
    buffer_.erase(0, start);
    return events;
}

std::string parse_chat_delta(std::string_view data) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(data);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Parse, std::string("malformed stream chunk: ") + e.what());
    }
    if (j.contains("error")) {
        throw Error(Errc::Parse, "backend reported an error: " + j["error"].dump());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
        return {};
    }
    const auto& choice = j["choices"][0];
    if (!choice.contains("delta") || !choice["delta"].contains("content") || !choice["delta"]["content"].is_string()) {
        return {};
    }
    return choice["delta"]["content"].get<std::string>();
}

RemoteChatBackend::RemoteChatBackend(RemoteBackendConfig config) : config_(std::move(config)) {
    auto parts = split_url(config_.endpoint);
    origin_ = std::move(parts.origin);
    path_ = std::move(parts.path);
}

void RemoteChatBackend::stream(const GenerationRequest& request, const StreamDeadlines& deadlines,
                               const ChunkCallback& on_chunk) {
    using clock = std::chrono::steady_clock;
    const auto now = clock::now();
    const auto first_budget = std::max(deadlines.first_chunk - now, clock::duration(std::chrono::milliseconds(1)));

    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(first_budget));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(first_budget));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(first_budget));
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
        client.set_bearer_token_auth(key);
    }

    httplib::Request req;
    req.method = "POST";
    req.path = path_;
    req.body = build_chat_request_body(config_.model, request.prompt.full_text);
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", "text/event-stream");

    SseDecoder decoder;
    bool got_text = false;
    bool done = false;
    bool aborted = false;
    std::string failure;

    req.response_handler = [&](const httplib::Response& res) {
        if (res.status != 200) {
            failure = "HTTP status " + std::to_string(res.status);
            return false;
        }
        return true;
    };
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        const auto t = clock::now();
        if (t > deadlines.total || (!got_text && t > deadlines.first_chunk)) {
            failure = "deadline exceeded";
            return false;
        }
        for (const auto& payload : decoder.feed(std::string_view(data, len))) {
            if (payload == "[DONE]") {
                done = true;
                return true;
            }
            std::string text;
            try {
                text = parse_chat_delta(payload);
            } catch (const Error& e) {
                failure = e.what();
                return false;
            }
            if (text.empty()) {
                continue;
            }
            got_text = true;
            if (!on_chunk(text)) {
                aborted = true;
                return false;
            }
        }
        return true;
    };

    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    const bool ok = client.send(req, res, err);
    if (aborted) {
        return;
    }
    if (!failure.empty()) {
        throw Error(Errc::Io, "request " + request.request_id + ": " + failure);
    }
    if (!ok) {
        throw Error(Errc::Io, "request " + request.request_id + ": " + httplib::to_string(err));
    }
    if (!done) {
        throw Error(Errc::Io, "request " + request.request_id + ": stream ended before [DONE]");
    }
}

} // namespace nudge
