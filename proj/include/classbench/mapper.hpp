#pragma once

#include "classbench/embedding.hpp"
#include "classbench/labelspace.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace classbench {

using UnitVector = std::vector<double>;

struct IndexOptions {
    // Unit-normalize each template embedding before averaging. When false
    // the raw vectors are averaged and only the mean is normalized.
    bool normalize_each_template = true;
};

/// Template-ensembled class-name embeddings, one unit vector per catalog
/// class, in ClassId order.
class ClassEmbeddingIndex {
public:
    ClassEmbeddingIndex() = default;
    ClassEmbeddingIndex(std::vector<UnitVector> class_vectors, std::vector<std::string> templates,
                        std::string encoder_id);

    std::size_t size() const { return vectors_.size(); }
    std::size_t dimension() const { return vectors_.empty() ? 0 : vectors_.front().size(); }
    const UnitVector& vector(ClassId id) const { return vectors_.at(id.value); }
    const std::vector<UnitVector>& vectors() const { return vectors_; }
    const std::vector<std::string>& templates() const { return templates_; }
    const std::string& encoder_id() const { return encoder_id_; }

private:
    std::vector<UnitVector> vectors_;
    std::vector<std::string> templates_;
    std::string encoder_id_;
};

// CLIP-style seven-template ensemble.
std::vector<std::string> default_templates();
std::vector<std::string> load_templates(const std::filesystem::path& path);
std::string instantiate_template(std::string_view tmpl, std::string_view name);

UnitVector normalize(const Embedding& v);
double dot(const UnitVector& a, const UnitVector& b);

ClassEmbeddingIndex build_index(const ClassCatalog& catalog, const std::vector<std::string>& templates,
                                Embedder& embed, const IndexOptions& options = {});

bool detect_oop(std::string_view raw_text, const ClassCatalog& catalog);

enum class OopKind { Partial, In, Abstain, Wrong };

std::string_view to_string(OopKind kind);
std::optional<OopKind> parse_oop_kind(std::string_view s);

std::vector<std::string> default_abstain_phrases();
std::vector<std::string> load_abstain_phrases(const std::filesystem::path& path);

// Taxonomy for an output that already failed detect_oop.
OopKind classify_oop(std::string_view raw_text, const ClassCatalog& catalog,
                     const std::vector<std::string>& reference_names,
                     const std::vector<std::string>& abstain_phrases = default_abstain_phrases());

struct NearestClass {
    ClassId class_id;
    double similarity = 0.0;
};

// The text is embedded as-is after name normalization (no templates).
NearestClass map_output(std::string_view raw_text, const ClassEmbeddingIndex& index, Embedder& embed);
NearestClass nearest_class(const UnitVector& query, const ClassEmbeddingIndex& index);

struct MappedPrediction {
    std::string raw_text;
    bool oop = false;
    std::optional<OopKind> oop_kind;
    std::optional<ClassId> mapped_class;
    std::optional<double> similarity;
};

struct ResolveContext {
    const ClassCatalog& catalog;
    const ClassEmbeddingIndex& index;
    Embedder& embed;
    const std::vector<std::string>& reference_names;
    const std::vector<std::string>& abstain_phrases;
};

MappedPrediction resolve(std::string_view raw_text, const ResolveContext& ctx);

}  // namespace classbench
