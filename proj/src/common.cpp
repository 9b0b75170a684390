#include "classbench/digest.hpp"
#include "classbench/error.hpp"
#include "classbench/rng.hpp"
#include "classbench/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>
#include <cstdio>

namespace classbench {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::DuplicateName: return "DuplicateName";
        case ErrorCode::DanglingEquivalencePair: return "DanglingEquivalencePair";
        case ErrorCode::UnknownImage: return "UnknownImage";
        case ErrorCode::UnknownClass: return "UnknownClass";
        case ErrorCode::MissingImGT: return "MissingImGT";
        case ErrorCode::EmptySubset: return "EmptySubset";
        case ErrorCode::MissingPrediction: return "MissingPrediction";
        case ErrorCode::TooFewTrials: return "TooFewTrials";
        case ErrorCode::KeyMismatch: return "KeyMismatch";
        case ErrorCode::DegenerateInput: return "DegenerateInput";
        case ErrorCode::ProviderFailure: return "ProviderFailure";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyTemplateSet: return "EmptyTemplateSet";
        case ErrorCode::BadTemplate: return "BadTemplate";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::EncoderMismatch: return "EncoderMismatch";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::DuplicateOption: return "DuplicateOption";
        case ErrorCode::BadIndex: return "BadIndex";
        case ErrorCode::UnparseableResponse: return "UnparseableResponse";
        case ErrorCode::InsufficientClasses: return "InsufficientClasses";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::UnknownBackend: return "UnknownBackend";
        case ErrorCode::AuthError: return "AuthError";
        case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
        case ErrorCode::UnknownRun: return "UnknownRun";
        case ErrorCode::ConfigDrift: return "ConfigDrift";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::UnscoredRun: return "UnscoredRun";
        case ErrorCode::EmptySelection: return "EmptySelection";
        case ErrorCode::SessionComplete: return "SessionComplete";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::OutOfOrderSubmission: return "OutOfOrderSubmission";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

namespace text {

std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string normalize_name(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : trim(s)) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isspace(uc)) {
            pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(uc)));
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        const auto uc = static_cast<unsigned char>(c);
        if (c == '\'') continue;
        if (std::isspace(uc) || (std::ispunct(uc) && c != '\'')) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
            continue;
        }
        cur.push_back(static_cast<char>(std::tolower(uc)));
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

}  // namespace text

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_text(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) {
    return splitmix64(splitmix64(parent) ^ (salt + 0x632be59bd9b4e019ULL));
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view salt) {
    return derive_seed(parent, hash_text(salt));
}

std::uint64_t Rng::below(std::uint64_t bound) {
    // Rejection sampling on the top of the range keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

struct FieldHasher::State {
    EVP_MD_CTX* ctx = nullptr;
};

FieldHasher::FieldHasher() : state_(std::make_unique<State>()) {
    state_->ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(state_->ctx, EVP_sha256(), nullptr);
}

FieldHasher::~FieldHasher() {
    if (state_ && state_->ctx) EVP_MD_CTX_free(state_->ctx);
}

FieldHasher& FieldHasher::feed(std::string_view field) {
    std::array<unsigned char, 8> len{};
    std::uint64_t n = field.size();
    for (auto& b : len) {
        b = static_cast<unsigned char>(n & 0xff);
        n >>= 8;
    }
    EVP_DigestUpdate(state_->ctx, len.data(), len.size());
    EVP_DigestUpdate(state_->ctx, field.data(), field.size());
    return *this;
}

namespace {
std::string to_hex(const unsigned char* data, unsigned int n) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(n * 2);
    for (unsigned int i = 0; i < n; ++i) {
        out.push_back(kHex[data[i] >> 4]);
        out.push_back(kHex[data[i] & 0xf]);
    }
    return out;
}
}  // namespace

std::string FieldHasher::hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int n = 0;
    EVP_DigestFinal_ex(state_->ctx, md.data(), &n);
    return to_hex(md.data(), n);
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int n = 0;
    EVP_Digest(bytes.data(), bytes.size(), md.data(), &n, EVP_sha256(), nullptr);
    return to_hex(md.data(), n);
}

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

}  // namespace classbench
