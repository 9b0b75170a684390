#include "classbench/digest.hpp"
#include "classbench/error.hpp"
#include "classbench/modelgate.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

namespace classbench {

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "base_url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = url.substr(0, path_start);
    if (path_start != std::string::npos) e.prefix = url.substr(path_start);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    return e;
}

// POSTs JSON and maps transport and status failures onto the gateway's
// error vocabulary.
nlohmann::json post_json(const HttpSettings& s, const std::string& path, const std::string& body) {
    const auto ep = split_url(s.base_url);
    httplib::Client cli(ep.origin);
    const auto secs = static_cast<time_t>(s.timeout.count());
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!s.api_key.empty()) headers.emplace("Authorization", "Bearer " + s.api_key);
    auto res = cli.Post(ep.prefix + path, headers, body, "application/json");
    if (!res) throw Error(ErrorCode::BackendUnavailable, ep.origin + ": " + httplib::to_string(res.error()));
    const int st = res->status;
    if (st == 401 || st == 403) throw Error(ErrorCode::AuthError, "HTTP " + std::to_string(st));
    if (st == 413) throw Error(ErrorCode::PayloadTooLarge, "HTTP 413");
    if (st == 408 || st == 429 || st >= 500) throw Error(ErrorCode::BackendUnavailable, "HTTP " + std::to_string(st));
    if (st < 200 || st >= 300) {
        throw Error(ErrorCode::ProviderFailure, "HTTP " + std::to_string(st) + ": " + res->body.substr(0, 200));
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ProviderFailure, std::string("response is not JSON: ") + e.what());
    }
}

}  // namespace

std::string HttpChatBackend::request_body(const ChatRequest& request) const {
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system_text.empty()) messages.push_back({{"role", "system"}, {"content", request.system_text}});
    nlohmann::json parts = nlohmann::json::array();
    if (!request.user_text.empty()) parts.push_back({{"type", "text"}, {"text", request.user_text}});
    for (const auto& img : request.images) {
        parts.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:" + img.media_type + ";base64," + base64_encode(img.bytes)}}}});
    }
    messages.push_back({{"role", "user"}, {"content", parts}});

    nlohmann::json body{{"model", settings_.model},
                        {"messages", messages},
                        {"temperature", request.decode.temperature},
                        {"max_tokens", request.decode.max_tokens}};
    if (!request.decode.structure_hint.empty()) {
        body["response_format"] = {
            {"type", "json_schema"},
            {"json_schema",
             {{"name", "answer"}, {"strict", true}, {"schema", nlohmann::json::parse(request.decode.structure_hint)}}}};
    }
    return body.dump();
}

ChatResponse HttpChatBackend::complete(const ChatRequest& request) {
    const auto j = post_json(settings_, "/chat/completions", request_body(request));
    ChatResponse out;
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        out.text = content.is_null() ? std::string() : content.get<std::string>();
        if (j.contains("usage")) {
            out.prompt_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
            out.completion_tokens = j["usage"].value("completion_tokens", std::size_t{0});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ProviderFailure, std::string("unexpected chat response shape: ") + e.what());
    }
    return out;
}

HttpEmbedder::HttpEmbedder(std::string encoder_id, HttpSettings settings)
    : id_(std::move(encoder_id)), settings_(std::move(settings)) {}

std::vector<Embedding> HttpEmbedder::embed(std::span<const std::string> texts) {
    const nlohmann::json body{{"model", settings_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    // Embedding calls do not pass through the chat gateway, so they carry
    // their own short retry loop.
    nlohmann::json j;
    for (int attempt = 0;; ++attempt) {
        try {
            j = post_json(settings_, "/embeddings", body.dump());
            break;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BackendUnavailable || attempt >= 3) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(500 << attempt));
        }
    }
    std::vector<Embedding> out;
    try {
        const auto& data = j.at("data");
        out.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& item = data[i];
            const auto idx = item.value("index", i);
            if (idx >= out.size()) throw Error(ErrorCode::ProviderFailure, "embedding index out of range");
            out[idx] = item.at("embedding").get<Embedding>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ProviderFailure, std::string("unexpected embedding response shape: ") + e.what());
    }
    if (out.size() != texts.size()) throw Error(ErrorCode::ProviderFailure, "embedding count mismatch");
    const std::size_t dim = out.front().size();
    for (const auto& v : out) {
        if (v.size() != dim) throw Error(ErrorCode::DimensionMismatch, "ragged embedding response");
    }
    return out;
}

}  // namespace classbench
