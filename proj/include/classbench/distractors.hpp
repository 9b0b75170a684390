#pragma once

#include "classbench/labelspace.hpp"
#include "classbench/mapper.hpp"
#include "classbench/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace classbench {

/// Dense n x n confusion counts; row = true class, column = predicted.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t n) : n_(n), counts_(n * n, 0.0) {}

    std::size_t size() const { return n_; }
    double at(ClassId truth, ClassId predicted) const;
    void set(ClassId truth, ClassId predicted, double count);
    void add(ClassId truth, ClassId predicted, double count);

private:
    std::size_t n_ = 0;
    std::vector<double> counts_;
};

// Header line `n`, then sparse `true<TAB>pred<TAB>count` lines.
ConfusionMatrix parse_confusion(std::istream& in);
ConfusionMatrix load_confusion(const std::filesystem::path& path, std::size_t expected_size);

std::vector<ClassId> sample_random(const LabelSet& correct, std::size_t catalog_size, std::size_t k,
                                   const LabelSet& exclusion, Rng& rng);

struct ConfusionDraw {
    std::vector<ClassId> classes;
    std::size_t backfilled = 0;  // trailing entries that came from sample_random
};

ConfusionDraw sample_confusion(ClassId correct, const ConfusionMatrix& cm, std::size_t k, const LabelSet& exclusion,
                               Rng& rng);

std::vector<ClassId> sample_embedding_neighbors(ClassId correct, const ClassEmbeddingIndex& index, std::size_t k,
                                                const LabelSet& exclusion);

enum class DistractorStrategy { Random, Confusion, Embedding };
enum class AnchorMode { ImGT, ReGT, ImGTAndReGT };

std::string_view to_string(DistractorStrategy s);
std::string_view to_string(AnchorMode a);
DistractorStrategy parse_strategy(std::string_view s);
AnchorMode parse_anchor_mode(std::string_view s);

struct MCItem {
    ImageId image_id;
    std::vector<ClassId> options;             // presentation order
    std::vector<ClassId> anchors;             // guaranteed-present classes; anchors[0] is the keyed answer
    std::set<std::size_t> correct_positions;  // options admissible under ReGT
    std::size_t answer_position = 0;          // position of anchors[0]
    std::string strategy_tag;
    std::uint64_t trial_seed = 0;
};

void to_json(nlohmann::json& j, const MCItem& item);
void from_json(const nlohmann::json& j, MCItem& item);

struct DistractorSource {
    const ConfusionMatrix* confusion = nullptr;
    const ClassEmbeddingIndex* index = nullptr;
};

struct AssembleOptions {
    std::size_t k_total = 4;
    // With two anchors, how many slots each anchor's row/neighborhood fills
    // before the remainder is taken from the first anchor.
    std::size_t per_anchor_slots = 1;
};

// Picks the anchor set for an image. For ReGT anchoring of multilabel images
// one ReGT label is drawn with `anchor_seed`; images without ReGT labels fall
// back to the ImGT class.
std::vector<ClassId> choose_anchors(const ImageId& image_id, AnchorMode mode, const LabelStore& labels,
                                    std::uint64_t anchor_seed);

// Exclusion set applied to distractors for the given anchoring.
LabelSet distractor_exclusion(const ImageId& image_id, AnchorMode mode, const LabelStore& labels,
                              const ClassCatalog& catalog);

MCItem assemble_item(const ImageId& image_id, const std::vector<ClassId>& anchors, DistractorStrategy strategy,
                     const LabelSet& exclusion, const LabelStore& labels, const ClassCatalog& catalog,
                     const DistractorSource& source, std::uint64_t trial_seed, const AssembleOptions& options = {});

}  // namespace classbench
