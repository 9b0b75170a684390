#include "classbench/mapper.hpp"

#include "classbench/error.hpp"
#include "classbench/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace classbench {

namespace {

constexpr std::string_view kPlaceholder = "{}";

std::vector<Embedding> call_provider(Embedder& embed, std::span<const std::string> texts) {
    std::vector<Embedding> out;
    try {
        out = embed.embed(texts);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ProviderFailure, e.what());
    }
    if (out.size() != texts.size()) {
        throw Error(ErrorCode::ProviderFailure, "provider returned " + std::to_string(out.size()) +
                                                    " vectors for " + std::to_string(texts.size()) + " texts");
    }
    return out;
}

std::size_t count_placeholders(std::string_view t) {
    std::size_t n = 0;
    for (auto pos = t.find(kPlaceholder); pos != std::string_view::npos; pos = t.find(kPlaceholder, pos + 2)) ++n;
    return n;
}

bool is_sub_multiset(std::vector<std::string> small, std::vector<std::string> big) {
    std::sort(small.begin(), small.end());
    std::sort(big.begin(), big.end());
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

bool contains_word_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > hay.size()) return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

ClassEmbeddingIndex::ClassEmbeddingIndex(std::vector<UnitVector> class_vectors, std::vector<std::string> templates,
                                         std::string encoder_id)
    : vectors_(std::move(class_vectors)), templates_(std::move(templates)), encoder_id_(std::move(encoder_id)) {}

std::vector<std::string> default_templates() {
    return {
        "itap of a {}.",           "a bad photo of the {}.", "a origami {}.",           "a photo of the large {}.",
        "a {} in a video game.", "art of the {}.",        "a photo of the small {}.",
    };
}

std::vector<std::string> load_templates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        out.push_back(line);
    }
    return out;
}

std::string instantiate_template(std::string_view tmpl, std::string_view name) {
    const auto pos = tmpl.find(kPlaceholder);
    if (pos == std::string_view::npos || count_placeholders(tmpl) != 1) {
        throw Error(ErrorCode::BadTemplate, "template needs exactly one {} placeholder: " + std::string(tmpl));
    }
    std::string out(tmpl.substr(0, pos));
    out += name;
    out += tmpl.substr(pos + kPlaceholder.size());
    return out;
}

UnitVector normalize(const Embedding& v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    const double norm = std::sqrt(sq);
    if (!(norm > 1e-12)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
    UnitVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]) / norm;
    return out;
}

double dot(const UnitVector& a, const UnitVector& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "dot of unequal dimensions");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

ClassEmbeddingIndex build_index(const ClassCatalog& catalog, const std::vector<std::string>& templates,
                                Embedder& embed, const IndexOptions& options) {
    if (templates.empty()) throw Error(ErrorCode::EmptyTemplateSet, "no templates given");
    for (const auto& t : templates) {
        if (count_placeholders(t) != 1) {
            throw Error(ErrorCode::BadTemplate, "template needs exactly one {} placeholder: " + t);
        }
    }
    // One provider call for the whole catalog, class-major order.
    std::vector<std::string> prompts;
    prompts.reserve(catalog.size() * templates.size());
    for (const auto& e : catalog.entries()) {
        for (const auto& t : templates) prompts.push_back(instantiate_template(t, e.canonical_name));
    }
    const auto vecs = call_provider(embed, prompts);
    const std::size_t dim = vecs.empty() ? 0 : vecs.front().size();
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "provider returned empty vectors");

    std::vector<UnitVector> class_vectors;
    class_vectors.reserve(catalog.size());
    for (std::size_t c = 0; c < catalog.size(); ++c) {
        std::vector<double> sum(dim, 0.0);
        for (std::size_t t = 0; t < templates.size(); ++t) {
            const auto& v = vecs[c * templates.size() + t];
            if (v.size() != dim) throw Error(ErrorCode::DimensionMismatch, "inconsistent embedding dimension");
            if (options.normalize_each_template) {
                const auto u = normalize(v);
                for (std::size_t i = 0; i < dim; ++i) sum[i] += u[i];
            } else {
                for (std::size_t i = 0; i < dim; ++i) sum[i] += static_cast<double>(v[i]);
            }
        }
        double sq = 0.0;
        for (double x : sum) sq += x * x;
        const double norm = std::sqrt(sq);
        if (!(norm > 1e-12)) {
            throw Error(ErrorCode::ZeroVector,
                        "template embeddings cancel for class '" + catalog.name(ClassId(c)) + "'");
        }
        for (double& x : sum) x /= norm;
        class_vectors.push_back(std::move(sum));
    }
    return ClassEmbeddingIndex(std::move(class_vectors), templates, embed.encoder_id());
}

bool detect_oop(std::string_view raw_text, const ClassCatalog& catalog) {
    return !catalog.find_by_name(raw_text).has_value();
}

std::string_view to_string(OopKind kind) {
    switch (kind) {
        case OopKind::Partial: return "Partial";
        case OopKind::In: return "IN";
        case OopKind::Abstain: return "Abstain";
        case OopKind::Wrong: return "Wrong";
    }
    return "?";
}

std::optional<OopKind> parse_oop_kind(std::string_view s) {
    for (OopKind k : {OopKind::Partial, OopKind::In, OopKind::Abstain, OopKind::Wrong}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::vector<std::string> default_abstain_phrases() {
    return {"i don't know", "cannot determine", "unsure", "not sure", "unable to identify"};
}

std::vector<std::string> load_abstain_phrases(const std::filesystem::path& path) {
    return load_templates(path);  // same line-oriented format, no placeholder check
}

OopKind classify_oop(std::string_view raw_text, const ClassCatalog& catalog,
                     const std::vector<std::string>& reference_names,
                     const std::vector<std::string>& abstain_phrases) {
    const auto raw_words = text::words(raw_text);
    if (!raw_words.empty()) {
        for (const auto& e : catalog.entries()) {
            if (is_sub_multiset(raw_words, text::words(e.canonical_name))) return OopKind::Partial;
        }
    }
    const auto norm = text::normalize_name(raw_text);
    if (!norm.empty()) {
        for (const auto& ref : reference_names) {
            if (text::normalize_name(ref) == norm) return OopKind::In;
        }
    }
    for (const auto& phrase : abstain_phrases) {
        if (contains_word_run(raw_words, text::words(phrase))) return OopKind::Abstain;
    }
    return OopKind::Wrong;
}

NearestClass nearest_class(const UnitVector& query, const ClassEmbeddingIndex& index) {
    if (index.size() == 0) throw Error(ErrorCode::InsufficientClasses, "empty index");
    if (query.size() != index.dimension()) throw Error(ErrorCode::DimensionMismatch, "query dimension differs from index");
    NearestClass best{ClassId(0), dot(query, index.vector(ClassId(0)))};
    for (std::uint32_t c = 1; c < index.size(); ++c) {
        const double s = dot(query, index.vectors()[c]);
        if (s > best.similarity) best = {ClassId(c), s};  // strict: lowest id wins ties
    }
    best.similarity = std::clamp(best.similarity, -1.0, 1.0);
    return best;
}

NearestClass map_output(std::string_view raw_text, const ClassEmbeddingIndex& index, Embedder& embed) {
    if (embed.encoder_id() != index.encoder_id()) {
        throw Error(ErrorCode::EncoderMismatch, "index built with '" + index.encoder_id() + "', provider is '" +
                                                    embed.encoder_id() + "'");
    }
    const std::string query = text::normalize_name(raw_text);
    if (query.empty()) throw Error(ErrorCode::EmptyText, "nothing to map");
    const std::string texts[] = {query};
    const auto vecs = call_provider(embed, texts);
    return nearest_class(normalize(vecs.front()), index);
}

MappedPrediction resolve(std::string_view raw_text, const ResolveContext& ctx) {
    MappedPrediction out;
    out.raw_text = std::string(raw_text);
    if (const auto exact = ctx.catalog.find_by_name(raw_text)) {
        out.mapped_class = exact;
        return out;
    }
    out.oop = true;
    out.oop_kind = classify_oop(raw_text, ctx.catalog, ctx.reference_names, ctx.abstain_phrases);
    const auto nearest = map_output(raw_text, ctx.index, ctx.embed);
    out.mapped_class = nearest.class_id;
    out.similarity = nearest.similarity;
    return out;
}

}  // namespace classbench
