#pragma once

#include "nudge/prompt.hpp"
#include "nudge/strategy.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nudge {

struct OutputConstraints {
    std::size_t word_cap = kDefaultWordCap;
    std::vector<std::string> blocklist = default_blocklist();

    static std::vector<std::string> default_blocklist();
    // One phrase per line; blank lines and lines starting with '#' are ignored.
    static std::vector<std::string> load_blocklist(const std::filesystem::path& path);
};

enum class OutputViolationKind : std::uint8_t { Empty, TooLong, Blocklist, MultiParagraph };

struct OutputViolation {
    OutputViolationKind kind;
    std::string detail;
};

std::string_view to_string(OutputViolationKind kind);

// Blocklist matching is case-insensitive substring search.
std::vector<OutputViolation> validate_output(std::string_view text, const OutputConstraints& constraints);

std::size_t count_words(std::string_view text);

enum class BackendKind : std::uint8_t { Remote, Fallback };
std::string_view to_string(BackendKind kind);

struct GenerationRequest {
    AssembledPrompt prompt;
    PromptSlots slots; // the fallback fills its canned text from these
    std::string request_id;
    std::chrono::milliseconds deadline{10'000};

    std::optional<Strategy> strategy() const { return slots.strategy; }

    friend bool operator==(const GenerationRequest&, const GenerationRequest&) = default;
};

struct PersuasionMessage {
    std::string text;
    std::optional<Strategy> strategy;
    BackendKind backend = BackendKind::Fallback;
    std::chrono::milliseconds first_chunk_latency{0};
    bool complete = false;
};

// Reset tells the consumer to discard everything streamed so far; it is sent
// when a partially streamed remote answer is abandoned for the fallback.
enum class StreamEventKind : std::uint8_t { Chunk, Reset };

struct StreamEvent {
    StreamEventKind kind = StreamEventKind::Chunk;
    std::string text;
};

using StreamSink = std::function<void(const StreamEvent&)>;
using ChunkCallback = std::function<bool(std::string_view)>;

struct StreamDeadlines {
    std::chrono::steady_clock::time_point first_chunk;
    std::chrono::steady_clock::time_point total;
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;

    virtual BackendKind kind() const = 0;

    // Emits text chunks in order. Returning false from on_chunk aborts the
    // stream. Throws on transport or protocol failure and on a missed deadline.
    virtual void stream(const GenerationRequest& request, const StreamDeadlines& deadlines,
                        const ChunkCallback& on_chunk) = 0;
};

// Deterministic canned text per strategy, filled from the request's slots.
std::string fallback_text(const GenerationRequest& request, const OutputConstraints& constraints);
PersuasionMessage fallback_generate(const GenerationRequest& request, const OutputConstraints& constraints);

// Word-sized pieces whose concatenation is exactly text.
std::vector<std::string> split_chunks(std::string_view text);

class FallbackBackend final : public GenerationBackend {
public:
    explicit FallbackBackend(OutputConstraints constraints = {}) : constraints_(std::move(constraints)) {}

    BackendKind kind() const override { return BackendKind::Fallback; }
    void stream(const GenerationRequest& request, const StreamDeadlines& deadlines,
                const ChunkCallback& on_chunk) override;

private:
    OutputConstraints constraints_;
};

struct RemoteBackendConfig {
    std::string endpoint; // e.g. https://api.example.com/v1/chat/completions
    std::string model = "gpt-3.5-turbo";
    std::string api_key_env = "NUDGE_API_KEY";
};

// Chat-completion client speaking the streaming JSON + server-sent-events
// dialect: POST {model, messages:[{role:"user", content}], stream:true}.
class RemoteChatBackend final : public GenerationBackend {
public:
    explicit RemoteChatBackend(RemoteBackendConfig config);

    BackendKind kind() const override { return BackendKind::Remote; }
    void stream(const GenerationRequest& request, const StreamDeadlines& deadlines,
                const ChunkCallback& on_chunk) override;

private:
    RemoteBackendConfig config_;
    std::string origin_; // scheme://host[:port]
    std::string path_;
};

std::string build_chat_request_body(const std::string& model, const std::string& prompt_text);

// Incremental server-sent-events decoder. Returns the data payload of each
// event completed by the bytes fed so far.
class SseDecoder {
public:
    std::vector<std::string> feed(std::string_view bytes);

private:
    std::string buffer_;
    std::string data_;
    bool has_data_ = false;
};

// Extracts choices[0].delta.content from one streamed chunk; empty when the
// chunk carries no text. Throws Parse on malformed JSON or an error object.
std::string parse_chat_delta(std::string_view data);

struct GatewayOptions {
    std::chrono::milliseconds first_chunk_timeout{1'500};
    OutputConstraints constraints;
};

// Streams a persuasion message. Remote failures, missed deadlines and invalid
// remote output are absorbed by completing with the fallback.
class Gateway {
public:
    explicit Gateway(std::shared_ptr<GenerationBackend> remote = nullptr, GatewayOptions options = {});

    PersuasionMessage generate_stream(const GenerationRequest& request, const StreamSink& sink) const;
    PersuasionMessage generate(const GenerationRequest& request) const { return generate_stream(request, {}); }

    const GatewayOptions& options() const { return options_; }

private:
    std::shared_ptr<GenerationBackend> remote_;
    GatewayOptions options_;
};

} // namespace nudge
