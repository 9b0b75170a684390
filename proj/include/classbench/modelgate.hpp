#pragma once

#include "classbench/embedding.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace classbench {

struct ImagePayload {
    std::string bytes;
    std::string media_type = "image/jpeg";

    std::string digest() const;
};

struct DecodeParams {
    double temperature = 0.0;
    int max_tokens = 4096;
    std::string structure_hint;  // JSON schema text, empty = none
};

struct ChatRequest {
    std::string backend_id;
    std::string system_text;
    std::string user_text;
    std::vector<ImagePayload> images;
    DecodeParams decode;
    // Mixed into the cache key but never sent; lets repeated MC trials with
    // identical prompts occupy distinct cache entries.
    std::string cache_salt;
};

// SHA-256 over length-prefixed (backend, decode params, texts, image
// digests, salt). Doubles are rendered with %.17g so the key is the same on
// every platform.
std::string cache_key(const ChatRequest& request);

struct ChatResponse {
    std::string text;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

// Implementations signal transient trouble with BackendUnavailable (which
// the gateway retries) and permanent trouble with AuthError or
// PayloadTooLarge (which it does not).
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct HttpSettings {
    std::string base_url;  // e.g. https://api.openai.com/v1
    std::string model;
    std::string api_key;   // resolved from the configured env var
    std::chrono::seconds timeout{60};
};

/// Chat-completions wire shape: one system message, one user message with
/// a text part followed by image parts as base64 data URLs.
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(HttpSettings settings) : settings_(std::move(settings)) {}
    ChatResponse complete(const ChatRequest& request) override;

    // Request body as sent; exposed for tests.
    std::string request_body(const ChatRequest& request) const;

private:
    HttpSettings settings_;
};

/// Deterministic stand-in for a vision model. The script maps an image
/// digest to the class name the "model" sees in that image. For a batch
/// prompt it answers with a keyed JSON object in image order; for a
/// multiple-choice prompt it picks the letter whose option matches the
/// scripted name. Unscripted images are left out of the answer.
class ScriptedChatBackend final : public ChatBackend {
public:
    explicit ScriptedChatBackend(std::map<std::string, std::string> answers) : answers_(std::move(answers)) {}
    // `digest<TAB>answer` lines; '#' starts a comment line.
    static std::map<std::string, std::string> load_answers(const std::filesystem::path& path);

    ChatResponse complete(const ChatRequest& request) override;
    std::size_t calls() const { return calls_; }

private:
    std::map<std::string, std::string> answers_;
    std::size_t calls_ = 0;
    std::mutex mu_;
};

class FunctionChatBackend final : public ChatBackend {
public:
    using Fn = std::function<ChatResponse(const ChatRequest&)>;
    explicit FunctionChatBackend(Fn fn) : fn_(std::move(fn)) {}
    ChatResponse complete(const ChatRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

/// Content-addressed store of chat responses, one JSON file per key under
/// `<dir>/<k0k1>/<key>.json`. Files are written via rename so a crash never
/// leaves a partial entry, and an existing entry is never rewritten.
class ChatCache {
public:
    explicit ChatCache(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& key) const;
    // Returns false if the key was already present (nothing written).
    bool put(const std::string& key, const std::string& backend_id, const std::string& response);
    std::size_t writes() const { return writes_; }

private:
    std::filesystem::path path_for(const std::string& key) const;

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::size_t writes_ = 0;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{500};
    double multiplier = 2.0;
};

struct CallLogEntry {
    std::string key;
    std::string backend_id;
    bool cache_hit = false;
    int attempts = 0;
    double latency_ms = 0.0;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    std::string response_digest;
    // Set when a fresh response disagrees with an entry already cached for
    // the same key (temperature-0 drift).
    bool diverged = false;
};

struct BackendLimits {
    std::size_t max_in_flight = 4;
    double requests_per_second = 0.0;  // 0 = no token bucket
};

class ModelGateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    // No cache directory = caching disabled.
    explicit ModelGateway(std::optional<std::filesystem::path> cache_dir = std::nullopt, RetryPolicy retry = {});
    ~ModelGateway();
    ModelGateway(const ModelGateway&) = delete;
    ModelGateway& operator=(const ModelGateway&) = delete;

    void add_backend(const std::string& id, std::shared_ptr<ChatBackend> backend, BackendLimits limits = {});
    bool has_backend(const std::string& id) const;

    // use_cache=false skips both lookup and store (the --no-cache mode).
    std::string chat(const ChatRequest& request, bool use_cache = true);

    std::vector<CallLogEntry> call_log() const;
    std::size_t remote_calls() const;

    // Tests replace the backoff sleep to keep runs fast.
    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

private:
    struct Slot;

    Slot& slot(const std::string& id);

    std::unique_ptr<ChatCache> cache_;
    RetryPolicy retry_;
    Sleeper sleeper_;
    mutable std::mutex mu_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
    std::vector<CallLogEntry> log_;
    std::size_t remote_calls_ = 0;
};

/// Append-only binary record file of (encoder_id, text) -> vector. Each
/// record is u32 id length, id, u32 text length, text, u32 dim, dim
/// little-endian float32. A truncated trailing record (crash mid-write) is
/// ignored on open.
class EmbeddingCache {
public:
    explicit EmbeddingCache(std::filesystem::path file);

    std::optional<Embedding> get(const std::string& encoder_id, const std::string& text) const;
    void put(const std::string& encoder_id, const std::string& text, const Embedding& vector);
    std::size_t size() const;

private:
    std::filesystem::path file_;
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, Embedding> entries_;
};

/// Wraps an Embedder with de-duplication and the optional on-disk cache.
/// Only distinct uncached texts reach the provider, in one call.
class CachingEmbedder final : public Embedder {
public:
    CachingEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<EmbeddingCache> cache = nullptr);

    const std::string& encoder_id() const override { return inner_->encoder_id(); }
    std::vector<Embedding> embed(std::span<const std::string> texts) override;

    std::size_t provider_calls() const { return provider_calls_; }
    std::size_t provider_texts() const { return provider_texts_; }

private:
    std::shared_ptr<Embedder> inner_;
    std::shared_ptr<EmbeddingCache> cache_;
    std::mutex mu_;
    std::size_t provider_calls_ = 0;
    std::size_t provider_texts_ = 0;
};

// Text -> vector table, loaded from `text<TAB>v1,v2,...` lines. Unknown
// texts are a ProviderFailure.
class ScriptedEmbedder final : public Embedder {
public:
    ScriptedEmbedder(std::string encoder_id, std::map<std::string, Embedding> table);
    static ScriptedEmbedder load(std::string encoder_id, const std::filesystem::path& path);

    const std::string& encoder_id() const override { return id_; }
    std::vector<Embedding> embed(std::span<const std::string> texts) override;

private:
    std::string id_;
    std::map<std::string, Embedding> table_;
};

// Basis vector e_i for the i-th vocabulary entry; anything else maps to the
// extra last axis. Dimension is |vocabulary| + 1.
class OneHotEmbedder final : public Embedder {
public:
    OneHotEmbedder(std::string encoder_id, std::vector<std::string> vocabulary);

    const std::string& encoder_id() const override { return id_; }
    std::vector<Embedding> embed(std::span<const std::string> texts) override;

private:
    std::string id_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Offline lexical encoder: signed feature hashing of words and character
// trigrams. Deterministic across platforms; good enough to map "laptop" near
// "laptop computer" in demos and tests.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::string encoder_id, std::size_t dimension = 256);

    const std::string& encoder_id() const override { return id_; }
    std::vector<Embedding> embed(std::span<const std::string> texts) override;

private:
    std::string id_;
    std::size_t dim_;
};

// Embeddings wire shape: {"model", "input": [...]} -> {"data": [{"embedding": [...]}]}.
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(std::string encoder_id, HttpSettings settings);

    const std::string& encoder_id() const override { return id_; }
    std::vector<Embedding> embed(std::span<const std::string> texts) override;

private:
    std::string id_;
    HttpSettings settings_;
};

enum class BackendKind { Chat, Embed };

struct BackendConfig {
    std::string id;
    BackendKind kind = BackendKind::Chat;
    std::string provider;  // http | scripted | function | onehot | hashing
    std::string base_url;
    std::string model;
    std::string api_key_env;
    std::filesystem::path file;  // scripted answers / vocabulary
    std::size_t dimension = 256;
    BackendLimits limits;
    std::chrono::seconds timeout{60};
};

// `[[backend]]` tables from a TOML file; relative `file` paths resolve
// against the config's directory.
std::vector<BackendConfig> load_backend_configs(const std::filesystem::path& path);
std::vector<BackendConfig> parse_backend_configs(std::string_view toml_text, const std::filesystem::path& base_dir);

std::shared_ptr<ChatBackend> make_chat_backend(const BackendConfig& config);
std::shared_ptr<Embedder> make_embedder(const BackendConfig& config);

}  // namespace classbench
