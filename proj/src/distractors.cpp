#include "classbench/distractors.hpp"

#include "classbench/error.hpp"
#include "classbench/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>

namespace classbench {

double ConfusionMatrix::at(ClassId truth, ClassId predicted) const {
    if (truth.value >= n_ || predicted.value >= n_) throw Error(ErrorCode::UnknownClass, "confusion index");
    return counts_[truth.value * n_ + predicted.value];
}

void ConfusionMatrix::set(ClassId truth, ClassId predicted, double count) {
    if (truth.value >= n_ || predicted.value >= n_) throw Error(ErrorCode::UnknownClass, "confusion index");
    if (count < 0.0) throw Error(ErrorCode::ParseError, "negative confusion count");
    counts_[truth.value * n_ + predicted.value] = count;
}

void ConfusionMatrix::add(ClassId truth, ClassId predicted, double count) {
    set(truth, predicted, at(truth, predicted) + count);
}

ConfusionMatrix parse_confusion(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::optional<ConfusionMatrix> cm;
    auto bad = [&]() { return Error(ErrorCode::ParseError, "confusion line " + std::to_string(line_no)); };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (!cm) {
            std::size_t n = 0;
            const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
            if (ec != std::errc() || p != t.data() + t.size() || n == 0) throw bad();
            cm.emplace(n);
            continue;
        }
        const auto f = text::split(t, '\t');
        if (f.size() != 3) throw bad();
        try {
            const auto truth = static_cast<std::uint32_t>(std::stoul(f[0]));
            const auto pred = static_cast<std::uint32_t>(std::stoul(f[1]));
            cm->add(ClassId(truth), ClassId(pred), std::stod(f[2]));
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw bad();
        }
    }
    if (!cm) throw Error(ErrorCode::ParseError, "confusion file has no header");
    return *cm;
}

ConfusionMatrix load_confusion(const std::filesystem::path& path, std::size_t expected_size) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    auto cm = parse_confusion(in);
    if (cm.size() != expected_size) {
        throw Error(ErrorCode::DimensionMismatch, "confusion matrix is " + std::to_string(cm.size()) +
                                                      " wide, catalog has " + std::to_string(expected_size));
    }
    return cm;
}

std::vector<ClassId> sample_random(const LabelSet& correct, std::size_t catalog_size, std::size_t k,
                                   const LabelSet& exclusion, Rng& rng) {
    std::vector<ClassId> pool;
    pool.reserve(catalog_size);
    for (std::uint32_t c = 0; c < catalog_size; ++c) {
        const ClassId id(c);
        if (!correct.count(id) && !exclusion.count(id)) pool.push_back(id);
    }
    if (pool.size() < k) {
        throw Error(ErrorCode::InsufficientClasses,
                    "need " + std::to_string(k) + " distractors, only " + std::to_string(pool.size()) + " eligible");
    }
    // Partial Fisher-Yates: the first k slots are a uniform k-subset in draw order.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

ConfusionDraw sample_confusion(ClassId correct, const ConfusionMatrix& cm, std::size_t k, const LabelSet& exclusion,
                               Rng& rng) {
    if (correct.value >= cm.size()) throw Error(ErrorCode::UnknownClass, "no confusion row " + std::to_string(correct.value));
    std::vector<ClassId> candidates;
    for (std::uint32_t c = 0; c < cm.size(); ++c) {
        const ClassId id(c);
        if (id == correct || exclusion.count(id)) continue;
        if (cm.at(correct, id) > 0.0) candidates.push_back(id);
    }
    // Shuffle then stable sort: equal counts end up in seeded random order.
    rng.shuffle(candidates);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](ClassId a, ClassId b) { return cm.at(correct, a) > cm.at(correct, b); });
    ConfusionDraw draw;
    draw.classes.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(std::min(k, candidates.size())));
    if (draw.classes.size() < k) {
        LabelSet taken(draw.classes.begin(), draw.classes.end());
        taken.insert(exclusion.begin(), exclusion.end());
        const auto fill = sample_random(LabelSet{correct}, cm.size(), k - draw.classes.size(), taken, rng);
        draw.backfilled = fill.size();
        draw.classes.insert(draw.classes.end(), fill.begin(), fill.end());
    }
    return draw;
}

std::vector<ClassId> sample_embedding_neighbors(ClassId correct, const ClassEmbeddingIndex& index, std::size_t k,
                                                const LabelSet& exclusion) {
    if (correct.value >= index.size()) throw Error(ErrorCode::UnknownClass, "class not in index");
    const auto& anchor = index.vector(correct);
    std::vector<std::pair<double, ClassId>> scored;
    for (std::uint32_t c = 0; c < index.size(); ++c) {
        const ClassId id(c);
        if (id == correct || exclusion.count(id)) continue;
        scored.emplace_back(dot(anchor, index.vectors()[c]), id);
    }
    if (scored.size() < k) {
        throw Error(ErrorCode::InsufficientClasses,
                    "need " + std::to_string(k) + " neighbors, only " + std::to_string(scored.size()) + " eligible");
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<ClassId> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
    return out;
}

std::string_view to_string(DistractorStrategy s) {
    switch (s) {
        case DistractorStrategy::Random: return "random";
        case DistractorStrategy::Confusion: return "confusion";
        case DistractorStrategy::Embedding: return "embedding";
    }
    return "?";
}

std::string_view to_string(AnchorMode a) {
    switch (a) {
        case AnchorMode::ImGT: return "imgt";
        case AnchorMode::ReGT: return "regt";
        case AnchorMode::ImGTAndReGT: return "imgt+regt";
    }
    return "?";
}

DistractorStrategy parse_strategy(std::string_view s) {
    for (auto v : {DistractorStrategy::Random, DistractorStrategy::Confusion, DistractorStrategy::Embedding}) {
        if (to_string(v) == s) return v;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown distractor strategy '" + std::string(s) + "'");
}

AnchorMode parse_anchor_mode(std::string_view s) {
    for (auto v : {AnchorMode::ImGT, AnchorMode::ReGT, AnchorMode::ImGTAndReGT}) {
        if (to_string(v) == s) return v;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown anchor mode '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const MCItem& item) {
    auto ids = [](const std::vector<ClassId>& v) {
        std::vector<std::uint32_t> out;
        for (auto c : v) out.push_back(c.value);
        return out;
    };
    j = nlohmann::json{{"image_id", item.image_id},
                       {"options", ids(item.options)},
                       {"anchors", ids(item.anchors)},
                       {"correct_positions", item.correct_positions},
                       {"answer_position", item.answer_position},
                       {"strategy_tag", item.strategy_tag},
                       {"trial_seed", item.trial_seed}};
}

void from_json(const nlohmann::json& j, MCItem& item) {
    auto ids = [](const nlohmann::json& v) {
        std::vector<ClassId> out;
        for (const auto& c : v) out.emplace_back(c.get<std::uint32_t>());
        return out;
    };
    item.image_id = j.at("image_id").get<std::string>();
    item.options = ids(j.at("options"));
    item.anchors = ids(j.at("anchors"));
    item.correct_positions = j.at("correct_positions").get<std::set<std::size_t>>();
    item.answer_position = j.at("answer_position").get<std::size_t>();
    item.strategy_tag = j.at("strategy_tag").get<std::string>();
    item.trial_seed = j.at("trial_seed").get<std::uint64_t>();
}

std::vector<ClassId> choose_anchors(const ImageId& image_id, AnchorMode mode, const LabelStore& labels,
                                    std::uint64_t anchor_seed) {
    const auto gt_it = labels.imgt.find(image_id);
    if (gt_it == labels.imgt.end()) throw Error(ErrorCode::MissingImGT, image_id);
    const ClassId gt = gt_it->second;
    if (mode == AnchorMode::ImGT) return {gt};

    const auto re_it = labels.regt.find(image_id);
    if (re_it == labels.regt.end()) throw Error(ErrorCode::UnknownImage, image_id);
    const LabelSet& regt = re_it->second;
    if (regt.empty()) return {gt};

    ClassId rep = *regt.begin();
    if (regt.size() > 1) {
        Rng rng(anchor_seed);
        rep = *std::next(regt.begin(), static_cast<std::ptrdiff_t>(rng.below(regt.size())));
    }
    if (mode == AnchorMode::ReGT) return {rep};
    if (rep == gt) return {gt};
    return {gt, rep};
}

LabelSet distractor_exclusion(const ImageId& image_id, AnchorMode mode, const LabelStore& labels,
                              const ClassCatalog& catalog) {
    const auto gt_it = labels.imgt.find(image_id);
    if (gt_it == labels.imgt.end()) throw Error(ErrorCode::MissingImGT, image_id);
    LabelSet excl = admissible_labels(image_id, labels, catalog);
    const bool regt_empty = labels.regt.at(image_id).empty();
    if (mode != AnchorMode::ReGT || regt_empty) {
        const auto gt_adm = admissible_labels(LabelSet{gt_it->second}, catalog);
        excl.insert(gt_adm.begin(), gt_adm.end());
    }
    return excl;
}

MCItem assemble_item(const ImageId& image_id, const std::vector<ClassId>& anchors_in, DistractorStrategy strategy,
                     const LabelSet& exclusion, const LabelStore& labels, const ClassCatalog& catalog,
                     const DistractorSource& source, std::uint64_t trial_seed, const AssembleOptions& options) {
    std::vector<ClassId> anchors;
    for (ClassId a : anchors_in) {
        if (!catalog.contains(a)) throw Error(ErrorCode::UnknownClass, std::to_string(a.value));
        if (std::find(anchors.begin(), anchors.end(), a) == anchors.end()) anchors.push_back(a);
    }
    if (anchors.empty()) throw Error(ErrorCode::InvalidConfig, "an MC item needs at least one anchor");
    if (anchors.size() > options.k_total) throw Error(ErrorCode::BadIndex, "more anchors than option slots");

    Rng rng(trial_seed);
    const std::size_t slots = options.k_total - anchors.size();
    LabelSet blocked = exclusion;
    blocked.insert(anchors.begin(), anchors.end());

    std::vector<ClassId> distractors;
    std::size_t backfilled = 0;
    auto remaining = [&]() { return slots - distractors.size(); };
    // Order in which anchors contribute: each gets per_anchor_slots, the first
    // anchor takes whatever is left.
    std::vector<std::pair<ClassId, std::size_t>> quota;
    if (anchors.size() == 1) {
        quota.emplace_back(anchors[0], slots);
    } else {
        for (ClassId a : anchors) quota.emplace_back(a, options.per_anchor_slots);
        quota.emplace_back(anchors[0], slots);
    }

    switch (strategy) {
        case DistractorStrategy::Random:
            distractors = sample_random(LabelSet(anchors.begin(), anchors.end()), catalog.size(), slots, exclusion, rng);
            break;
        case DistractorStrategy::Confusion: {
            if (!source.confusion) throw Error(ErrorCode::InvalidConfig, "confusion strategy needs a confusion matrix");
            for (const auto& [anchor, want] : quota) {
                const std::size_t k = std::min(want, remaining());
                if (k == 0) continue;
                LabelSet excl = blocked;
                excl.insert(distractors.begin(), distractors.end());
                auto draw = sample_confusion(anchor, *source.confusion, k, excl, rng);
                backfilled += draw.backfilled;
                distractors.insert(distractors.end(), draw.classes.begin(), draw.classes.end());
            }
            break;
        }
        case DistractorStrategy::Embedding: {
            if (!source.index) throw Error(ErrorCode::InvalidConfig, "embedding strategy needs a class index");
            for (const auto& [anchor, want] : quota) {
                const std::size_t k = std::min(want, remaining());
                if (k == 0) continue;
                LabelSet excl = blocked;
                excl.insert(distractors.begin(), distractors.end());
                auto picked = sample_embedding_neighbors(anchor, *source.index, k, excl);
                distractors.insert(distractors.end(), picked.begin(), picked.end());
            }
            break;
        }
    }

    MCItem item;
    item.image_id = image_id;
    item.anchors = anchors;
    item.trial_seed = trial_seed;
    item.options = anchors;
    item.options.insert(item.options.end(), distractors.begin(), distractors.end());
    rng.shuffle(item.options);
    item.answer_position = static_cast<std::size_t>(
        std::find(item.options.begin(), item.options.end(), anchors[0]) - item.options.begin());

    const auto re_it = labels.regt.find(image_id);
    if (re_it == labels.regt.end()) throw Error(ErrorCode::UnknownImage, image_id);
    const auto admissible = admissible_labels(re_it->second, catalog);
    for (std::size_t i = 0; i < item.options.size(); ++i) {
        if (admissible.count(item.options[i])) item.correct_positions.insert(i);
    }
    item.strategy_tag = std::string(to_string(strategy));
    if (backfilled) item.strategy_tag += "+backfill:" + std::to_string(backfilled);
    return item;
}

}  // namespace classbench
