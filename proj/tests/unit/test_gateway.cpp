#include "chat_stub.hpp"
#include "fixtures.hpp"

#include "nudge/error.hpp"
#include "nudge/gateway.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

using namespace nudge;
using namespace std::chrono_literals;

namespace {

GenerationRequest request_for(std::optional<Strategy> strategy,
                              MentalStateCell cell = {MentalState::stress(), Engagement::Engaged}) {
    GenerationRequest r;
    r.slots = fixtures::slots_for(std::move(cell), strategy);
    const PromptOptions options{strategy ? PromptMode::Full : PromptMode::Simple, kDefaultWordCap};
    r.prompt = assemble_prompt(r.slots, PromptTemplates::defaults(), options);
    r.request_id = "s000001-r1";
    return r;
}

std::string words(std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        out += i ? " word" : "word";
    }
    return out;
}

// Replays fixed chunks, then optionally fails.
class ScriptedBackend final : public GenerationBackend {
public:
    ScriptedBackend(std::vector<std::string> chunks, bool fail_after) : chunks_(std::move(chunks)), fail_(fail_after) {}
    BackendKind kind() const override { return BackendKind::Remote; }
    void stream(const GenerationRequest&, const StreamDeadlines&, const ChunkCallback& on_chunk) override {
        for (const auto& c : chunks_) {
            on_chunk(c);
        }
        if (fail_) {
            throw Error(Errc::Io, "connection reset");
        }
    }

private:
    std::vector<std::string> chunks_;
    bool fail_;
};

// Says nothing until the first-chunk deadline passes.
class SilentBackend final : public GenerationBackend {
public:
    BackendKind kind() const override { return BackendKind::Remote; }
    void stream(const GenerationRequest&, const StreamDeadlines& d, const ChunkCallback&) override {
        std::this_thread::sleep_until(d.first_chunk);
        throw Error(Errc::Io, "deadline exceeded");
    }
};

struct Collected {
    std::vector<StreamEvent> events;
    StreamSink sink() {
        return [this](const StreamEvent& e) { events.push_back(e); };
    }
    // Text after the last reset.
    std::string text() const {
        std::string out;
        for (const auto& e : events) {
            if (e.kind == StreamEventKind::Reset) {
                out.clear();
            } else {
                out += e.text;
            }
        }
        return out;
    }
    bool has_reset() const {
        return std::any_of(events.begin(), events.end(), [](const auto& e) { return e.kind == StreamEventKind::Reset; });
    }
};

} // namespace

TEST_CASE("validate_output") {
    const OutputConstraints c;
    CHECK(validate_output(words(40), c).empty());
    auto v = validate_output("Take a break, and use promo code SAVE10.", c);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == OutputViolationKind::Blocklist);
    v = validate_output(words(300), c);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == OutputViolationKind::TooLong);
    CHECK(validate_output("   ", c).at(0).kind == OutputViolationKind::Empty);
    CHECK(validate_output("One.\n\nTwo.", c).at(0).kind == OutputViolationKind::MultiParagraph);
    CHECK(validate_output("One.\nTwo.\n", c).empty());
    CHECK(validate_output("CLICK HERE", c).at(0).kind == OutputViolationKind::Blocklist);
    CHECK(validate_output("You are getting closer.", c).empty());
}

TEST_CASE("blocklist file loading") {
    fixtures::TempDir dir("blocklist");
    std::ofstream(dir.path() / "block.txt") << "# comment\n\nspam phrase  \nother\n";
    CHECK(OutputConstraints::load_blocklist(dir.path() / "block.txt") == std::vector<std::string>{"spam phrase", "other"});
    CHECK_THROWS_AS(OutputConstraints::load_blocklist(dir.path() / "missing.txt"), Error);
}

TEST_CASE("fallback text") {
    const OutputConstraints c;
    CHECK(fallback_text(request_for(Strategy::Evoking), c).find("pass IELTS") != std::string::npos);
    CHECK(fallback_text(request_for(Strategy::ScaffoldingHabits), c).find("neck stretches") != std::string::npos);
    CHECK(fallback_text(request_for(Strategy::Understanding), c) == fallback_text(request_for(Strategy::Understanding), c));
    for (auto s : kAllStrategies) {
        CHECK(validate_output(fallback_text(request_for(s), c), c).empty());
    }
    CHECK(validate_output(fallback_text(request_for(std::nullopt), c), c).empty());

    OutputConstraints tight;
    tight.word_cap = 12;
    for (auto s : kAllStrategies) {
        CHECK(validate_output(fallback_text(request_for(s), tight), tight).empty());
    }
    tight.word_cap = 4;
    CHECK(fallback_text(request_for(Strategy::Evoking), tight) == "Time for a break.");
}

TEST_CASE("split_chunks concatenates back to the input") {
    for (std::string text : {"", "one", "Hi, keep going", "  lead and trail  ", "a\nb\tc"}) {
        std::string joined;
        for (const auto& c : split_chunks(text)) {
            CHECK_FALSE(c.empty());
            joined += c;
        }
        CHECK(joined == text);
    }
}

TEST_CASE("gateway concatenates remote chunks") {
    Gateway g(std::make_shared<ScriptedBackend>(std::vector<std::string>{"Hi", ", keep", " going"}, false));
    Collected got;
    auto m = g.generate_stream(request_for(Strategy::Comforting), got.sink());
    CHECK(m.text == "Hi, keep going");
    CHECK(m.backend == BackendKind::Remote);
    CHECK(m.strategy == Strategy::Comforting);
    CHECK(m.complete);
    CHECK(got.text() == m.text);
    CHECK(got.events.size() == 3);
}

TEST_CASE("gateway fails over to the fallback") {
    const auto req = request_for(Strategy::Evoking);
    const auto expected = fallback_text(req, OutputConstraints{});

    SUBCASE("no remote configured") {
        Collected got;
        auto m = Gateway().generate_stream(req, got.sink());
        CHECK(m.backend == BackendKind::Fallback);
        CHECK(m.text == expected);
        CHECK(got.text() == m.text);
        CHECK_FALSE(got.has_reset());
    }
    SUBCASE("remote fails before any text") {
        Gateway g(std::make_shared<ScriptedBackend>(std::vector<std::string>{}, true));
        Collected got;
        auto m = g.generate_stream(req, got.sink());
        CHECK(m.backend == BackendKind::Fallback);
        CHECK(m.text == expected);
        CHECK_FALSE(got.has_reset());
    }
    SUBCASE("remote fails mid-stream") {
        Gateway g(std::make_shared<ScriptedBackend>(std::vector<std::string>{"Hi", " there"}, true));
        Collected got;
        auto m = g.generate_stream(req, got.sink());
        CHECK(m.backend == BackendKind::Fallback);
        CHECK(got.has_reset());
        CHECK(got.text() == m.text);
    }
    SUBCASE("remote output rejected by validation") {
        Gateway g(std::make_shared<ScriptedBackend>(std::vector<std::string>{"Use promo code X"}, false));
        auto m = g.generate(req);
        CHECK(m.backend == BackendKind::Fallback);
        CHECK(m.text == expected);
    }
    SUBCASE("silent remote") {
        GatewayOptions o;
        o.first_chunk_timeout = 300ms;
        Gateway g(std::make_shared<SilentBackend>(), o);
        const auto start = std::chrono::steady_clock::now();
        auto m = g.generate(req);
        CHECK(m.backend == BackendKind::Fallback);
        CHECK(std::chrono::steady_clock::now() - start < 2s);
        CHECK(m.first_chunk_latency >= 300ms);
        CHECK(m.first_chunk_latency < 2s);
    }
}

TEST_CASE("fallback backend streams the canned text") {
    FallbackBackend b;
    std::string joined;
    const auto req = request_for(Strategy::Understanding);
    b.stream(req, {}, [&](std::string_view c) {
        joined += c;
        return true;
    });
    CHECK(joined == fallback_text(req, OutputConstraints{}));
}

TEST_CASE("sse decoder") {
    SseDecoder d;
    CHECK(d.feed("data: a").empty());
    CHECK(d.feed("bc\n").empty());
    CHECK(d.feed("\n") == std::vector<std::string>{"abc"});
    CHECK(d.feed(": keep-alive\n\ndata: x\r\ndata: y\r\n\r\ndata: z\n\n") == std::vector<std::string>{"x\ny", "z"});
    CHECK(d.feed("event: ping\n\n").empty());
}

TEST_CASE("chat delta parsing") {
    CHECK(parse_chat_delta(R"({"choices":[{"delta":{"content":"Hi"}}]})") == "Hi");
    CHECK(parse_chat_delta(R"({"choices":[{"delta":{"role":"assistant"}}]})").empty());
    CHECK(parse_chat_delta(R"({"choices":[]})").empty());
    CHECK_THROWS_AS(parse_chat_delta("{nope"), Error);
    CHECK_THROWS_AS(parse_chat_delta(R"({"error":{"message":"x"}})"), Error);
}

TEST_CASE("request body") {
    auto body = nlohmann::json::parse(build_chat_request_body("m1", "prompt text"));
    CHECK(body["model"] == "m1");
    CHECK(body["stream"] == true);
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"] == "prompt text");
}

TEST_CASE("remote chat backend against a local stub") {
    fixtures::ChatStub stub;
    const auto req = request_for(Strategy::Understanding);
    auto gateway_for = [&](const std::string& mode) {
        RemoteBackendConfig cfg;
        cfg.endpoint = stub.endpoint(mode);
        cfg.model = "stub-model";
        cfg.api_key_env = "NUDGE_TEST_STUB_KEY";
        return Gateway(std::make_shared<RemoteChatBackend>(cfg));
    };

    SUBCASE("streamed answer") {
        ::setenv("NUDGE_TEST_STUB_KEY", "sekret", 1);
        Collected got;
        auto m = gateway_for("ok").generate_stream(req, got.sink());
        ::unsetenv("NUDGE_TEST_STUB_KEY");
        CHECK(m.backend == BackendKind::Remote);
        CHECK(m.text == "Hi, keep going");
        CHECK(got.text() == m.text);
        CHECK(stub.last_auth() == "Bearer sekret");
        auto body = nlohmann::json::parse(stub.last_body());
        CHECK(body["model"] == "stub-model");
        CHECK(body["messages"][0]["content"] == req.prompt.full_text);
    }
    for (const char* mode : {"status500", "nodone", "error", "garbage"}) {
        SUBCASE(mode) {
            Collected got;
            auto m = gateway_for(mode).generate_stream(req, got.sink());
            CHECK(m.backend == BackendKind::Fallback);
            CHECK(m.text == fallback_text(req, OutputConstraints{}));
            CHECK(got.text() == m.text);
        }
    }
    SUBCASE("slow first chunk") {
        const auto start = std::chrono::steady_clock::now();
        auto m = gateway_for("slow").generate(req);
        CHECK(m.backend == BackendKind::Fallback);
        CHECK(std::chrono::steady_clock::now() - start < 2s);
    }
    SUBCASE("unreachable endpoint") {
        RemoteBackendConfig cfg;
        cfg.endpoint = "http://127.0.0.1:1/v1/chat";
        auto m = Gateway(std::make_shared<RemoteChatBackend>(cfg)).generate(req);
        CHECK(m.backend == BackendKind::Fallback);
    }
    CHECK_THROWS_AS(RemoteChatBackend(RemoteBackendConfig{"no-scheme/path", "m", "K"}), Error);
}
