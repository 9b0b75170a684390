#include "classbench/modelgate.hpp"

#include "classbench/digest.hpp"
#include "classbench/error.hpp"
#include "classbench/rng.hpp"
#include "classbench/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

namespace classbench {

namespace fs = std::filesystem;

std::string ImagePayload::digest() const { return sha256_hex(bytes); }

std::string cache_key(const ChatRequest& request) {
    char temp[64];
    std::snprintf(temp, sizeof temp, "%.17g", request.decode.temperature);
    FieldHasher h;
    h.feed("chat/v1")
        .feed(request.backend_id)
        .feed(temp)
        .feed(std::to_string(request.decode.max_tokens))
        .feed(request.decode.structure_hint)
        .feed(request.system_text)
        .feed(request.user_text)
        .feed(std::to_string(request.images.size()));
    for (const auto& img : request.images) h.feed(img.media_type).feed(img.digest());
    h.feed(request.cache_salt);
    return h.hex();
}

// ---------------------------------------------------------------------------
// Scripted chat backend

std::map<std::string, std::string> ScriptedChatBackend::load_answers(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::map<std::string, std::string> answers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected digest<TAB>answer");
        }
        answers[std::string(text::trim(line.substr(0, tab)))] = line.substr(tab + 1);
    }
    return answers;
}

ChatResponse ScriptedChatBackend::complete(const ChatRequest& request) {
    {
        std::lock_guard lock(mu_);
        ++calls_;
    }
    // Multiple-choice prompts list their options as "A. name" lines.
    static const std::regex option_re(R"(^([A-Z])\. (.+)$)");
    std::vector<std::pair<char, std::string>> options;
    for (const auto* part : {&request.system_text, &request.user_text}) {
        std::istringstream in(*part);
        std::string line;
        while (std::getline(in, line)) {
            std::smatch m;
            if (std::regex_match(line, m, option_re)) options.emplace_back(m[1].str()[0], m[2].str());
        }
    }

    ChatResponse out;
    if (options.size() >= 2 && request.images.size() == 1) {
        const auto it = answers_.find(request.images.front().digest());
        if (it == answers_.end()) {
            out.text = "I don't know";
        } else {
            out.text = it->second;
            const auto want = text::normalize_name(it->second);
            for (const auto& [letter, name] : options) {
                if (text::normalize_name(name) == want) out.text = std::string(1, letter);
            }
        }
    } else {
        nlohmann::json j = nlohmann::json::object();
        for (std::size_t i = 0; i < request.images.size(); ++i) {
            const auto it = answers_.find(request.images[i].digest());
            if (it != answers_.end()) j[std::to_string(i + 1)] = it->second;
        }
        out.text = j.dump();
    }
    out.prompt_tokens = (request.system_text.size() + request.user_text.size()) / 4;
    out.completion_tokens = out.text.size() / 4;
    return out;
}

// ---------------------------------------------------------------------------
// Chat cache

ChatCache::ChatCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ChatCache::path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ChatCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(in);
        return j.at("response").get<std::string>();
    } catch (const std::exception&) {
        return std::nullopt;  // unreadable entry behaves as a miss
    }
}

bool ChatCache::put(const std::string& key, const std::string& backend_id, const std::string& response) {
    std::lock_guard lock(mu_);
    const auto target = path_for(key);
    if (fs::exists(target)) return false;
    fs::create_directories(target.parent_path());
    const auto tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
        out << nlohmann::json{{"key", key}, {"backend_id", backend_id}, {"response", response}}.dump();
        if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp);
    }
    fs::rename(tmp, target);
    ++writes_;
    return true;
}

// ---------------------------------------------------------------------------
// Gateway

struct ModelGateway::Slot {
    std::shared_ptr<ChatBackend> backend;
    BackendLimits limits;
    std::mutex mu;
    std::condition_variable cv;
    std::size_t in_flight = 0;
    std::chrono::steady_clock::time_point next_token{};
};

namespace {

// Holds one of the backend's in-flight permits and spends a rate token.
template <typename Slot>
class Permit {
public:
    explicit Permit(Slot& slot) : slot_(slot) {
        std::unique_lock lock(slot_.mu);
        const std::size_t cap = std::max<std::size_t>(1, slot_.limits.max_in_flight);
        slot_.cv.wait(lock, [&] { return slot_.in_flight < cap; });
        ++slot_.in_flight;
        if (slot_.limits.requests_per_second > 0.0) {
            const auto now = std::chrono::steady_clock::now();
            const auto start = std::max(now, slot_.next_token);
            slot_.next_token = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                           std::chrono::duration<double>(1.0 / slot_.limits.requests_per_second));
            lock.unlock();
            std::this_thread::sleep_until(start);
        }
    }
    ~Permit() {
        {
            std::lock_guard lock(slot_.mu);
            --slot_.in_flight;
        }
        slot_.cv.notify_one();
    }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

private:
    Slot& slot_;
};

}  // namespace

ModelGateway::ModelGateway(std::optional<fs::path> cache_dir, RetryPolicy retry)
    : retry_(retry), sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (cache_dir) cache_ = std::make_unique<ChatCache>(*cache_dir);
}

ModelGateway::~ModelGateway() = default;

void ModelGateway::add_backend(const std::string& id, std::shared_ptr<ChatBackend> backend, BackendLimits limits) {
    auto s = std::make_unique<Slot>();
    s->backend = std::move(backend);
    s->limits = limits;
    std::lock_guard lock(mu_);
    slots_[id] = std::move(s);
}

bool ModelGateway::has_backend(const std::string& id) const {
    std::lock_guard lock(mu_);
    return slots_.count(id) != 0;
}

ModelGateway::Slot& ModelGateway::slot(const std::string& id) {
    std::lock_guard lock(mu_);
    const auto it = slots_.find(id);
    if (it == slots_.end()) throw Error(ErrorCode::UnknownBackend, "no backend '" + id + "'");
    return *it->second;
}

std::string ModelGateway::chat(const ChatRequest& request, bool use_cache) {
    Slot& s = slot(request.backend_id);
    CallLogEntry entry;
    entry.key = cache_key(request);
    entry.backend_id = request.backend_id;
    const auto t0 = std::chrono::steady_clock::now();
    auto record = [&](const std::string& text) {
        entry.response_digest = sha256_hex(text);
        entry.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard lock(mu_);
        log_.push_back(entry);
    };

    if (use_cache && cache_) {
        if (auto hit = cache_->get(entry.key)) {
            entry.cache_hit = true;
            record(*hit);
            return *hit;
        }
    }

    ChatResponse response;
    {
        Permit<Slot> permit(s);
        for (int attempt = 0;; ++attempt) {
            entry.attempts = attempt + 1;
            {
                std::lock_guard lock(mu_);
                ++remote_calls_;
            }
            std::string failure;
            try {
                response = s.backend->complete(request);
                break;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::BackendUnavailable) throw;
                failure = e.what();
            } catch (const std::exception& e) {
                failure = e.what();
            }
            if (attempt >= retry_.max_retries) {
                throw Error(ErrorCode::BackendUnavailable, request.backend_id + " failed after " +
                                                               std::to_string(attempt + 1) + " attempts: " + failure);
            }
            const double delay = static_cast<double>(retry_.base_delay.count()) * std::pow(retry_.multiplier, attempt);
            sleeper_(std::chrono::milliseconds(static_cast<long long>(delay)));
        }
    }
    entry.prompt_tokens = response.prompt_tokens;
    entry.completion_tokens = response.completion_tokens;

    if (use_cache && cache_ && !cache_->put(entry.key, request.backend_id, response.text)) {
        // Someone stored this key while we were waiting on the backend.
        const auto existing = cache_->get(entry.key);
        entry.diverged = existing && *existing != response.text;
    }
    record(response.text);
    return response.text;
}

std::vector<CallLogEntry> ModelGateway::call_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::size_t ModelGateway::remote_calls() const {
    std::lock_guard lock(mu_);
    return remote_calls_;
}

// ---------------------------------------------------------------------------
// Embedding cache

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

bool read_string(std::istream& in, std::string& s) {
    std::uint32_t n = 0;
    if (!read_u32(in, n)) return false;
    s.resize(n);
    return n == 0 || static_cast<bool>(in.read(s.data(), n));
}

std::uint32_t float_bits(float f) {
    std::uint32_t u;
    static_assert(sizeof u == sizeof f);
    std::memcpy(&u, &f, sizeof u);
    return u;
}

float bits_float(std::uint32_t u) {
    float f;
    std::memcpy(&f, &u, sizeof f);
    return f;
}

}  // namespace

EmbeddingCache::EmbeddingCache(fs::path file) : file_(std::move(file)) {
    if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
    std::ifstream in(file_, std::ios::binary);
    if (!in) return;
    std::uintmax_t good_end = 0;
    while (true) {
        std::string id, txt;
        std::uint32_t dim = 0;
        if (!read_string(in, id) || !read_string(in, txt) || !read_u32(in, dim)) break;
        Embedding v(dim);
        bool ok = true;
        for (auto& x : v) {
            std::uint32_t u;
            if (!read_u32(in, u)) {
                ok = false;
                break;
            }
            x = bits_float(u);
        }
        if (!ok) break;
        entries_[{id, txt}] = std::move(v);
        good_end = static_cast<std::uintmax_t>(in.tellg());
    }
    in.close();
    // Drop a torn tail so later appends start on a record boundary.
    if (fs::file_size(file_) != good_end) fs::resize_file(file_, good_end);
}

std::optional<Embedding> EmbeddingCache::get(const std::string& encoder_id, const std::string& text) const {
    std::lock_guard lock(mu_);
    const auto it = entries_.find({encoder_id, text});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingCache::put(const std::string& encoder_id, const std::string& text, const Embedding& vector) {
    std::lock_guard lock(mu_);
    if (entries_.count({encoder_id, text})) return;
    std::ofstream out(file_, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + file_.string());
    std::ostringstream rec;
    write_u32(rec, static_cast<std::uint32_t>(encoder_id.size()));
    rec << encoder_id;
    write_u32(rec, static_cast<std::uint32_t>(text.size()));
    rec << text;
    write_u32(rec, static_cast<std::uint32_t>(vector.size()));
    for (float x : vector) write_u32(rec, float_bits(x));
    const auto bytes = rec.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "short write to " + file_.string());
    entries_[{encoder_id, text}] = vector;
}

std::size_t EmbeddingCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

// ---------------------------------------------------------------------------
// Embedders

CachingEmbedder::CachingEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<EmbeddingCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::vector<Embedding> CachingEmbedder::embed(std::span<const std::string> texts) {
    if (texts.empty()) throw Error(ErrorCode::EmptyText, "nothing to embed");
    std::lock_guard lock(mu_);
    const auto& id = inner_->encoder_id();
    std::vector<Embedding> out(texts.size());
    std::vector<std::string> pending;
    std::unordered_map<std::string, std::vector<std::size_t>> waiting;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (auto hit = waiting.find(texts[i]); hit != waiting.end()) {
            hit->second.push_back(i);
            continue;
        }
        if (cache_) {
            if (auto v = cache_->get(id, texts[i])) {
                out[i] = std::move(*v);
                continue;
            }
        }
        waiting[texts[i]].push_back(i);
        pending.push_back(texts[i]);
    }
    if (!pending.empty()) {
        ++provider_calls_;
        provider_texts_ += pending.size();
        std::vector<Embedding> fresh;
        try {
            fresh = inner_->embed(pending);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(ErrorCode::BackendUnavailable, e.what());
        }
        if (fresh.size() != pending.size()) {
            throw Error(ErrorCode::ProviderFailure, "provider returned " + std::to_string(fresh.size()) +
                                                        " vectors for " + std::to_string(pending.size()) + " texts");
        }
        for (std::size_t p = 0; p < pending.size(); ++p) {
            for (std::size_t i : waiting[pending[p]]) out[i] = fresh[p];
        }
        const std::size_t dim = fresh.front().size();
        for (std::size_t p = 0; p < pending.size(); ++p) {
            if (fresh[p].size() != dim || dim == 0) throw Error(ErrorCode::DimensionMismatch, "provider returned ragged vectors");
            if (cache_) cache_->put(id, pending[p], fresh[p]);
        }
    }
    const std::size_t dim = out.front().size();
    for (const auto& v : out) {
        if (v.size() != dim) throw Error(ErrorCode::DimensionMismatch, "cached and fresh vectors differ in dimension");
    }
    return out;
}

ScriptedEmbedder::ScriptedEmbedder(std::string encoder_id, std::map<std::string, Embedding> table)
    : id_(std::move(encoder_id)), table_(std::move(table)) {}

ScriptedEmbedder ScriptedEmbedder::load(std::string encoder_id, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::map<std::string, Embedding> table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty() || line.front() == '#') continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no));
        Embedding v;
        for (const auto& f : text::split(line.substr(tab + 1), ',')) {
            try {
                v.push_back(std::stof(f));
            } catch (const std::exception&) {
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad number '" + f + "'");
            }
        }
        table[line.substr(0, tab)] = std::move(v);
    }
    return ScriptedEmbedder(std::move(encoder_id), std::move(table));
}

std::vector<Embedding> ScriptedEmbedder::embed(std::span<const std::string> texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        const auto it = table_.find(t);
        if (it == table_.end()) throw Error(ErrorCode::ProviderFailure, "no scripted vector for '" + t + "'");
        out.push_back(it->second);
    }
    return out;
}

OneHotEmbedder::OneHotEmbedder(std::string encoder_id, std::vector<std::string> vocabulary)
    : id_(std::move(encoder_id)), vocab_(std::move(vocabulary)) {
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], i);
}

std::vector<Embedding> OneHotEmbedder::embed(std::span<const std::string> texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        Embedding v(vocab_.size() + 1, 0.0f);
        const auto it = index_.find(t);
        v[it == index_.end() ? vocab_.size() : it->second] = 1.0f;
        out.push_back(std::move(v));
    }
    return out;
}

HashingEmbedder::HashingEmbedder(std::string encoder_id, std::size_t dimension)
    : id_(std::move(encoder_id)), dim_(dimension) {
    if (dim_ == 0) throw Error(ErrorCode::InvalidConfig, "hashing embedder needs a positive dimension");
}

std::vector<Embedding> HashingEmbedder::embed(std::span<const std::string> texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        Embedding v(dim_, 0.0f);
        auto add = [&](std::string_view feature, float weight) {
            const std::uint64_t h = splitmix64(hash_text(feature));
            v[h % dim_] += (h >> 63) ? -weight : weight;
        };
        for (const auto& w : text::words(t)) {
            add("w:" + w, 1.0f);
            const std::string padded = "#" + w + "#";
            for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add("c:" + padded.substr(i, 3), 0.5f);
        }
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Factories

std::shared_ptr<ChatBackend> make_chat_backend(const BackendConfig& config) {
    if (config.kind != BackendKind::Chat) throw Error(ErrorCode::InvalidConfig, config.id + " is not a chat backend");
    if (config.provider == "scripted") {
        return std::make_shared<ScriptedChatBackend>(ScriptedChatBackend::load_answers(config.file));
    }
    if (config.provider == "http") {
        HttpSettings s{config.base_url, config.model, "", config.timeout};
        if (!config.api_key_env.empty()) {
            const char* key = std::getenv(config.api_key_env.c_str());
            if (!key) throw Error(ErrorCode::AuthError, "environment variable " + config.api_key_env + " is not set");
            s.api_key = key;
        }
        return std::make_shared<HttpChatBackend>(std::move(s));
    }
    throw Error(ErrorCode::InvalidConfig, "unknown chat provider '" + config.provider + "'");
}

std::shared_ptr<Embedder> make_embedder(const BackendConfig& config) {
    if (config.kind != BackendKind::Embed) throw Error(ErrorCode::InvalidConfig, config.id + " is not an embedding backend");
    if (config.provider == "hashing") return std::make_shared<HashingEmbedder>(config.id, config.dimension);
    if (config.provider == "scripted") return std::make_shared<ScriptedEmbedder>(ScriptedEmbedder::load(config.id, config.file));
    if (config.provider == "onehot") {
        std::ifstream in(config.file);
        if (!in) throw Error(ErrorCode::IoError, "cannot open " + config.file.string());
        std::vector<std::string> vocab;
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            vocab.push_back(line);
        }
        return std::make_shared<OneHotEmbedder>(config.id, std::move(vocab));
    }
    if (config.provider == "http") {
        HttpSettings s{config.base_url, config.model, "", config.timeout};
        if (!config.api_key_env.empty()) {
            const char* key = std::getenv(config.api_key_env.c_str());
            if (!key) throw Error(ErrorCode::AuthError, "environment variable " + config.api_key_env + " is not set");
            s.api_key = key;
        }
        return std::make_shared<HttpEmbedder>(config.id, std::move(s));
    }
    throw Error(ErrorCode::InvalidConfig, "unknown embedding provider '" + config.provider + "'");
}

}  // namespace classbench
