#include "nudge/gateway.hpp"

#include "nudge/log.hpp"

namespace nudge {

Gateway::Gateway(std::shared_ptr<GenerationBackend> remote, GatewayOptions options)
    : remote_(std::move(remote)), options_(std::move(options)) {}

PersuasionMessage Gateway::generate_stream(const GenerationRequest& request, const StreamSink& sink) const {
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();
    const auto elapsed = [&] { return std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - started); };
    const auto emit = [&](StreamEventKind kind, std::string_view text) {
        if (sink) {
            sink(StreamEvent{kind, std::string(text)});
        }
    };

    if (remote_) {
        const StreamDeadlines deadlines{started + options_.first_chunk_timeout, started + request.deadline};
        std::string text;
        std::optional<std::chrono::milliseconds> first_latency;
        bool streamed_any = false;
        try {
            remote_->stream(request, deadlines, [&](std::string_view chunk) {
                if (chunk.empty()) {
                    return true;
                }
                if (!first_latency) {
                    first_latency = elapsed();
                }
                text.append(chunk);
                streamed_any = true;
                emit(StreamEventKind::Chunk, chunk);
                return true;
            });
            const auto violations = validate_output(text, options_.constraints);
            if (violations.empty()) {
                PersuasionMessage m;
                m.text = std::move(text);
                m.strategy = request.strategy();
                m.backend = remote_->kind();
                m.first_chunk_latency = first_latency.value_or(elapsed());
                m.complete = true;
                return m;
            }
            std::string summary;
            for (const auto& v : violations) {
                summary += std::string(summary.empty() ? "" : ", ") + std::string(to_string(v.kind));
            }
            log::warn("request " + request.request_id + ": remote output rejected (" + summary + ")");
        } catch (const std::exception& e) {
            log::warn("request " + request.request_id + ": remote generation failed: " + e.what());
        }
        if (streamed_any) {
            emit(StreamEventKind::Reset, {});
        }
    }

    PersuasionMessage m = fallback_generate(request, options_.constraints);
    bool first = true;
    for (const auto& chunk : split_chunks(m.text)) {
        if (first) {
            m.first_chunk_latency = elapsed();
            first = false;
        }
        emit(StreamEventKind::Chunk, chunk);
    }
    return m;
}

} // namespace nudge
