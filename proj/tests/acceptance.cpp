// Acceptance gate: one PASS/FAIL line per criterion, each checked against an
// oracle that does not share code with the implementation under test.

#include "classbench/analysis.hpp"
#include "classbench/distractors.hpp"
#include "classbench/error.hpp"
#include "classbench/mapper.hpp"
#include "classbench/metrics.hpp"
#include "classbench/runner.hpp"
#include "run_fixture.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

using namespace classbench;
using namespace classbench::testing;

namespace {

struct CriterionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
    if (!cond) throw CriterionFailure(what);
}

// ---------------------------------------------------------------------------
// Shared oracles

// Admissible set by scanning every equivalence pair.
LabelSet scan_admissible(const LabelSet& labels, const ClassCatalog& catalog) {
    LabelSet out = labels;
    for (const auto& [a, b] : catalog.equivalence()) {
        if (labels.count(a)) out.insert(b);
        if (labels.count(b)) out.insert(a);
    }
    return out;
}

bool oracle_correct(const Prediction& pred, const LabelSet& labels, const ClassCatalog& catalog) {
    if (labels.empty()) return true;
    return pred && scan_admissible(labels, catalog).count(*pred);
}

CategoryTag hand_tag(ClassId gt, const LabelSet& l) {
    if (l.empty()) return CategoryTag::N;
    if (l.size() == 1) return l.count(gt) ? CategoryTag::SPlus : CategoryTag::SMinus;
    return l.count(gt) ? CategoryTag::MPlus : CategoryTag::MMinus;
}

bool hand_member(CategoryTag t, Category c) {
    switch (c) {
        case Category::A: return true;
        case Category::N: return t == CategoryTag::N;
        case Category::S: return t == CategoryTag::SPlus || t == CategoryTag::SMinus;
        case Category::SPlus: return t == CategoryTag::SPlus;
        case Category::SMinus: return t == CategoryTag::SMinus;
        case Category::M: return t == CategoryTag::MPlus || t == CategoryTag::MMinus;
        case Category::MPlus: return t == CategoryTag::MPlus;
        case Category::MMinus: return t == CategoryTag::MMinus;
    }
    return false;
}

struct HandScore {
    std::size_t count = 0;
    std::size_t correct = 0;
};

// Per-category counts with the loop oracle; `singletons` scores ImGT.
std::map<Category, HandScore> hand_score(const PredictionMap& preds, const LabelStore& store, const ClassCatalog& c,
                                         bool singletons) {
    std::map<Category, HandScore> out;
    for (const auto& [img, gt] : store.imgt) {
        const auto tag = hand_tag(gt, store.regt.at(img));
        const LabelSet labels = singletons ? LabelSet{gt} : store.regt.at(img);
        const auto it = preds.find(img);
        const bool ok = oracle_correct(it == preds.end() ? std::nullopt : it->second, labels, c);
        for (Category cat : kAllCategories) {
            if (!hand_member(tag, cat)) continue;
            ++out[cat].count;
            if (ok) ++out[cat].correct;
        }
    }
    return out;
}

std::size_t count_of(const ScoreReport& r, Category c) {
    const auto it = r.per_category.find(c);
    return it == r.per_category.end() ? 0 : it->second.count;
}

std::size_t correct_of(const ScoreReport& r, Category c) {
    const auto it = r.per_category.find(c);
    return it == r.per_category.end() ? 0 : it->second.correct;
}

double hand_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// Average 1-based ranks by counting smaller and equal values.
std::vector<double> hand_ranks(const std::vector<double>& v) {
    std::vector<double> r;
    for (double x : v) {
        double less = 0, equal = 0;
        for (double y : v) {
            if (y < x) ++less;
            if (y == x) ++equal;
        }
        r.push_back(less + (equal + 1) / 2);
    }
    return r;
}

LabelStore simple_store(std::size_t n, std::size_t classes) {
    LabelStore s;
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = "im" + std::to_string(100 + i);
        s.imgt[id] = ClassId(static_cast<std::uint32_t>(i % classes));
        s.regt[id] = {s.imgt[id]};
    }
    return s;
}

std::map<ImageId, std::string> oracle_answers(const LabelStore& s, const ClassCatalog& c) {
    std::map<ImageId, std::string> out;
    for (const auto& [img, gt] : s.imgt) out[img] = c.name(gt);
    return out;
}

const std::vector<std::string> kNames = {"laptop computer", "notebook computer", "tabby cat", "tiger cat",
                                         "golden retriever", "banana", "coffee mug", "water jug",
                                         "drink pitcher", "desk"};

// A CW+ fixture with a mix of exact, near-miss, abstaining and gibberish answers.
RunFixture mixed_fixture(std::uint64_t seed, std::size_t n_images) {
    const auto cat = named_catalog(kNames, {{0, 1}, {7, 8}});
    Rng rng(seed);
    const auto store = random_store(rng, n_images, kNames.size());
    const std::vector<std::string> noise = {"laptop", "tabby", "retriever dog", "mug", "I don't know", "xqzzv blorp",
                                            "jug of water", "wooden desk", "cat"};
    std::map<ImageId, std::string> answers;
    for (const auto& [img, gt] : store.imgt) {
        switch (rng.below(3)) {
            case 0: answers[img] = cat.name(gt); break;
            case 1: answers[img] = noise[rng.below(noise.size())]; break;
            default: answers[img] = kNames[rng.below(kNames.size())];
        }
    }
    return RunFixture(cat, store, answers);
}

// ---------------------------------------------------------------------------
// Criteria

std::string metric_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    std::size_t images = 0;
    for (int f = 0; f < 200; ++f) {
        const std::size_t n_classes = 3 + rng.below(10);
        const auto c = numbered_catalog(n_classes, random_pairs(rng, n_classes, rng.below(4)));
        const auto store = random_store(rng, 5 + rng.below(60), n_classes);
        const auto preds = random_predictions(rng, store, n_classes);
        const auto partition = partition_categories(store);
        images += store.imgt.size();
        for (bool singletons : {false, true}) {
            const auto got = score_predictions(preds, singletons ? store.imgt_as_singletons() : store, c, partition);
            const auto want = hand_score(preds, store, c, singletons);
            for (Category cat : kAllCategories) {
                const auto w = want.count(cat) ? want.at(cat) : HandScore{};
                require(count_of(got, cat) == w.count && correct_of(got, cat) == w.correct,
                        "fixture " + std::to_string(f) + " category " + std::string(to_string(cat)));
                if (w.count) {
                    require(got.per_category.at(cat).accuracy ==
                                static_cast<double>(w.correct) / static_cast<double>(w.count),
                            "accuracy differs in fixture " + std::to_string(f));
                }
            }
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    require(secs < 1.0, "took " + std::to_string(secs) + " s");
    std::ostringstream out;
    out << "200 fixtures, " << images << " images, exact, " << static_cast<int>(secs * 1000) << " ms";
    return out.str();
}

std::string category_algebra() {
    Rng rng(7);
    for (int s = 0; s < 1000; ++s) {
        const std::size_t n_classes = 2 + rng.below(8);
        const auto c = numbered_catalog(n_classes, random_pairs(rng, n_classes, rng.below(3)));
        const auto store = random_store(rng, 1 + rng.below(40), n_classes);
        const auto p = partition_categories(store);
        for (const auto& [img, gt] : store.imgt) require(p.tag(img) == hand_tag(gt, store.regt.at(img)), "tag of " + img);
        require(p.count(Category::A) == store.imgt.size(), "A is not every image");
        require(p.count(Category::A) == p.count(Category::N) + p.count(Category::S) + p.count(Category::M), "A != N+S+M");
        require(p.count(Category::S) == p.count(Category::SPlus) + p.count(Category::SMinus), "S != S+ + S-");
        require(p.count(Category::M) == p.count(Category::MPlus) + p.count(Category::MMinus), "M != M+ + M-");
        const auto r = score_predictions(random_predictions(rng, store, n_classes), store, c, p);
        auto k = [&](Category cat) { return correct_of(r, cat); };
        require(k(Category::A) == k(Category::N) + k(Category::S) + k(Category::M), "correct A != N+S+M");
        require(k(Category::S) == k(Category::SPlus) + k(Category::SMinus), "correct S split");
        require(k(Category::M) == k(Category::MPlus) + k(Category::MMinus), "correct M split");
        require(k(Category::N) == count_of(r, Category::N), "N-rule violated");
    }
    return "1000 stores; partition, tags and correct counts add up";
}

std::string cw_plus_identity() {
    std::size_t checked = 0, oop_total = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto fx = mixed_fixture(seed, 40);
        const auto cfg = fx.config("name = \"plus\"\ntask = \"cw\"\nmap_oop = true\nencoder = \"hash\"\nbatch_size = 8\n"
                                   "trials = 2\nseed = " + std::to_string(seed) + "\nbackend = \"scripted\"\n");
        auto env = fx.environment(cfg);
        const auto rec = run_experiment(cfg, env);
        for (auto variant : {LabelsVariant::ImGT, LabelsVariant::ReGT}) {
            for (std::size_t t = 0; t < rec.trials.size(); ++t) {
                const auto& cw = rec.scores.at("cw").per_trial.at(variant).at(t);
                const auto& plus = rec.scores.at("cw+").per_trial.at(variant).at(t);
                std::size_t mapped_right = 0;
                for (const auto& b : rec.trials[t].batches) {
                    for (const auto& p : b.predictions) {
                        if (!p.oop) continue;
                        if (variant == LabelsVariant::ReGT) ++oop_total;
                        const auto& regt = fx.labels().regt.at(p.image_id);
                        const LabelSet labels = variant == LabelsVariant::ImGT ? LabelSet{fx.labels().imgt.at(p.image_id)} : regt;
                        if (labels.empty()) continue;  // always correct under both protocols
                        if (p.mapped && scan_admissible(labels, fx.catalog()).count(*p.mapped)) ++mapped_right;
                    }
                }
                const auto n = count_of(cw, Category::A);
                const double d_acc = plus.per_category.at(Category::A).accuracy - cw.per_category.at(Category::A).accuracy;
                require(correct_of(plus, Category::A) >= correct_of(cw, Category::A), "CW+ below CW");
                require(correct_of(plus, Category::A) - correct_of(cw, Category::A) == mapped_right,
                        "CW+ - CW differs from correctly mapped OOP count");
                require(std::abs(d_acc - static_cast<double>(mapped_right) / static_cast<double>(n)) <= 1e-15,
                        "accuracy difference drifts");
                ++checked;
            }
        }
    }
    return std::to_string(checked) + " trial/label pairs, " + std::to_string(oop_total) + " OOP answers; identity exact on counts";
}

std::string n_rule() {
    std::size_t cases = 0;
    for (const auto& pairs : {std::vector<std::pair<std::uint32_t, std::uint32_t>>{},
                              std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 1}},
                              std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 1}, {1, 2}}}) {
        const auto c = numbered_catalog(3, pairs);
        for (std::uint32_t mask = 0; mask < 8; ++mask) {
            LabelSet regt;
            for (std::uint32_t i = 0; i < 3; ++i) {
                if (mask & (1u << i)) regt.insert(ClassId(i));
            }
            for (std::uint32_t gt = 0; gt < 3; ++gt) {
                LabelStore s;
                s.imgt["x"] = ClassId(gt);
                s.regt["x"] = regt;
                for (const Prediction& pred : {Prediction{}, Prediction{ClassId(0)}, Prediction{ClassId(1)}, Prediction{ClassId(2)}}) {
                    const bool got = image_correct(pred, "x", s, c);
                    require(got == oracle_correct(pred, regt, c), "image_correct mismatch");
                    if (regt.empty()) require(got, "N image scored wrong");
                    const auto r = score_predictions({{"x", pred}}, s, c, partition_categories(s));
                    require(correct_of(r, Category::A) == (got ? 1u : 0u), "report disagrees");
                    ++cases;
                }
            }
        }
    }
    return std::to_string(cases) + " (pairs, ReGT, ImGT, prediction) cases";
}

std::string mc_integrity() {
    const std::size_t n = 40;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (std::uint32_t i = 0; i < 10; ++i) pairs.emplace_back(2 * i, 2 * i + 1);
    const auto c = numbered_catalog(n, pairs);
    Rng rng(5);
    const auto store = random_store(rng, 1000, n);
    // Dense confusion rows with distinct counts (a shuffled 1..n-1 per row).
    ConfusionMatrix cm(n);
    for (std::uint32_t r = 0; r < n; ++r) {
        std::vector<double> counts;
        for (std::size_t k = 1; k < n; ++k) counts.push_back(static_cast<double>(k));
        rng.shuffle(counts);
        std::size_t k = 0;
        for (std::uint32_t col = 0; col < n; ++col) {
            if (col != r) cm.set(ClassId(r), ClassId(col), counts[k++]);
        }
    }
    std::vector<UnitVector> vecs;
    for (std::size_t i = 0; i < n; ++i) vecs.push_back({std::cos(0.07 * i), std::sin(0.07 * i)});
    const ClassEmbeddingIndex index(vecs, {"{}"}, "plane");
    const DistractorSource src{&cm, &index};

    std::size_t items = 0, topk = 0;
    for (auto strategy : {DistractorStrategy::Random, DistractorStrategy::Confusion, DistractorStrategy::Embedding}) {
        for (auto mode : {AnchorMode::ImGT, AnchorMode::ReGT, AnchorMode::ImGTAndReGT}) {
            std::uint64_t seed = 1000;
            for (const auto& [img, gt] : store.imgt) {
                ++seed;
                const auto anchors = choose_anchors(img, mode, store, seed);
                const auto excl = distractor_exclusion(img, mode, store, c);
                const auto item = assemble_item(img, anchors, strategy, excl, store, c, src, seed);
                ++items;
                const std::set<ClassId> distinct(item.options.begin(), item.options.end());
                require(distinct.size() == item.options.size() && item.options.size() == 4, "repeated option in " + img);
                for (auto a : anchors) require(distinct.count(a) == 1, "missing anchor in " + img);
                require(item.options.at(item.answer_position) == anchors[0], "answer key off in " + img);
                std::vector<ClassId> distractors;
                for (auto o : item.options) {
                    if (std::find(anchors.begin(), anchors.end(), o) == anchors.end()) distractors.push_back(o);
                }
                if (mode == AnchorMode::ImGT) {
                    const auto adm = scan_admissible(store.regt.at(img), c);
                    const auto gt_adm = scan_admissible({gt}, c);
                    for (auto d : distractors) require(!adm.count(d) && !gt_adm.count(d), "admissible distractor in " + img);
                    if (strategy == DistractorStrategy::Confusion) {
                        // Sort oracle: the three largest cells of the anchor row outside the exclusion.
                        std::vector<std::pair<double, ClassId>> row;
                        for (std::uint32_t col = 0; col < n; ++col) {
                            const ClassId id(col);
                            if (id == gt || excl.count(id)) continue;
                            row.emplace_back(cm.at(gt, id), id);
                        }
                        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
                        std::set<ClassId> want;
                        for (std::size_t k = 0; k < 3; ++k) want.insert(row[k].second);
                        require(std::set<ClassId>(distractors.begin(), distractors.end()) == want, "confusion top-k off in " + img);
                        ++topk;
                    }
                }
            }
        }
    }
    return std::to_string(items) + " items over 3 strategies x 3 anchorings; " + std::to_string(topk) + " top-k checks";
}

std::string option_order_invariance() {
    const auto cat = numbered_catalog(12);
    const auto store = simple_store(24, 12);
    const RunFixture fx(cat, store, oracle_answers(store, cat));
    const auto cfg = fx.config("name = \"mc\"\ntask = \"mc\"\ntrials = 10\nseed = 21\nbackend = \"scripted\"\n"
                               "[mc]\nstrategy = \"random\"\nanchors = \"imgt\"\n");
    auto env = fx.environment(cfg);
    const auto rec = run_experiment(cfg, env);
    const auto& agg = rec.scores.at("mc").aggregate.at(LabelsVariant::ImGT);
    require(agg.trial_stats && agg.trial_stats->trial_count == 10, "expected 10 trials");
    require(agg.per_category.at(Category::A).accuracy == 1.0, "accuracy below 1");
    require(agg.trial_stats->ci_halfwidth == 0.0, "non-zero halfwidth");
    std::set<std::pair<ImageId, std::size_t>> placements;
    for (const auto& tr : rec.trials) {
        for (const auto& item : tr.items) placements.emplace(item.image_id, item.answer_position);
    }
    require(placements.size() > store.imgt.size(), "options never moved");
    return "10 trials, accuracy 1.0, halfwidth 0, " + std::to_string(placements.size()) + " distinct (image, slot) pairs";
}

class CountingEmbedder final : public Embedder {
public:
    explicit CountingEmbedder(Embedder& inner) : inner_(inner) {}
    const std::string& encoder_id() const override { return inner_.encoder_id(); }
    std::vector<Embedding> embed(std::span<const std::string> texts) override {
        ++calls;
        return inner_.embed(texts);
    }
    std::size_t calls = 0;

private:
    Embedder& inner_;
};

std::string mapper_scan() {
    Rng rng(20);
    const auto c = numbered_catalog(20);
    std::map<std::string, Embedding> table;
    auto random_vector = [&] {
        Embedding v(16);
        for (auto& x : v) x = static_cast<float>(static_cast<double>(rng.below(2001)) / 1000.0 - 1.0);
        return v;
    };
    for (std::size_t i = 0; i < 20; ++i) table["class " + std::to_string(i)] = random_vector();
    std::vector<std::pair<std::string, Embedding>> queries;
    for (int q = 0; q < 100; ++q) {
        queries.emplace_back("query " + std::to_string(q), random_vector());
        table[queries.back().first] = queries.back().second;
    }
    ScriptedEmbedder base("s", table);
    CountingEmbedder embed(base);
    const auto index = build_index(c, {"{}"}, embed);
    for (const auto& [text, vec] : queries) {
        double sq = 0;
        for (float x : vec) sq += static_cast<double>(x) * static_cast<double>(x);
        std::vector<double> q;
        for (float x : vec) q.push_back(static_cast<double>(x) / std::sqrt(sq));
        ClassId best(0);
        double best_sim = -2.0;
        for (std::size_t k = 0; k < index.size(); ++k) {
            double s = 0;
            for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * index.vectors()[k][i];
            if (s > best_sim) {
                best_sim = s;
                best = ClassId(static_cast<std::uint32_t>(k));
            }
        }
        const auto got = map_output(text, index, embed);
        require(got.class_id == best && got.similarity == best_sim, "scan mismatch for " + text);
    }
    embed.calls = 0;
    const std::vector<std::string> refs, abstain = default_abstain_phrases();
    const ResolveContext ctx{c, index, embed, refs, abstain};
    for (const auto& e : c.entries()) {
        const auto r = resolve(e.canonical_name, ctx);
        require(!r.oop && r.mapped_class == e.id, "exact name not resolved directly");
    }
    require(embed.calls == 0, std::to_string(embed.calls) + " provider calls for exact names");
    return "100 queries bit-exact vs scan; 20 exact names, 0 provider calls";
}

std::string statistics() {
    // t_{0.975,1} has the closed form tan(0.475 pi); t_{0.975,30} is taken to 30 digits.
    const double t1 = std::tan(0.475 * std::numbers::pi), t30 = 2.0422724563012383;
    auto closed_form = [](const std::vector<double>& v, double t) {
        const double k = static_cast<double>(v.size());
        double m = 0;
        for (double x : v) m += x;
        m /= k;
        double ss = 0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::make_pair(m, t * std::sqrt(ss / (k - 1)) / std::sqrt(k));
    };
    const std::vector<double> two{0.6, 0.8};
    const auto ci2 = confidence_interval(two);
    const auto want2 = closed_form(two, t1);
    require(std::abs(ci2.mean - want2.first) <= 1e-12 && std::abs(ci2.halfwidth - want2.second) <= 1e-12, "k=2 interval");
    Rng rng(31);
    std::vector<double> thirty_one;
    for (int i = 0; i < 31; ++i) thirty_one.push_back(static_cast<double>(rng.below(1000)) / 1000.0);
    const auto ci31 = confidence_interval(thirty_one);
    const auto want31 = closed_form(thirty_one, t30);
    require(std::abs(ci31.mean - want31.first) <= 1e-12 && std::abs(ci31.halfwidth - want31.second) <= 1e-12, "k=31 interval");

    // Spearman without ties: 1 - 6 sum d^2 / (n (n^2 - 1)).
    std::map<ClassId, double> x, y;
    const std::vector<double> xs{1, 2, 3, 4, 5, 6, 7}, ys{2, 1, 4, 3, 7, 5, 6};
    for (std::uint32_t i = 0; i < 7; ++i) {
        x[ClassId(i)] = xs[i];
        y[ClassId(i)] = ys[i];
    }
    require(std::abs(spearman(x, y) - (1.0 - 6.0 * 10.0 / (7.0 * 48.0))) <= 1e-12, "spearman without ties");
    // With ties: Pearson of average ranks.
    const std::vector<double> tx{0.1, 0.5, 0.5, 0.7, 0.9, 1.0, 0.3, 0.5}, ty{0.2, 0.4, 0.3, 0.8, 0.8, 1.0, 0.1, 0.6};
    std::map<ClassId, double> mx, my;
    for (std::uint32_t i = 0; i < tx.size(); ++i) {
        mx[ClassId(i)] = tx[i];
        my[ClassId(i)] = ty[i];
    }
    require(std::abs(spearman(mx, my) - hand_pearson(hand_ranks(tx), hand_ranks(ty))) <= 1e-12, "spearman with ties");

    const std::string a_bits = "1101100110", b_bits = "1001101010";
    CorrectnessVector a, b, not_a;
    for (std::size_t i = 0; i < a_bits.size(); ++i) {
        const auto img = "x" + std::to_string(i);
        a[img] = a_bits[i] == '1';
        b[img] = b_bits[i] == '1';
        not_a[img] = a_bits[i] != '1';
    }
    // n11 = 4, n10 = 2, n01 = 1, n00 = 3.
    require(std::abs(phi(a, b) - 10.0 / std::sqrt(600.0)) <= 1e-12, "phi hand fixture");
    require(std::abs(phi(a, a) - 1.0) <= 1e-12, "phi(a, a)");
    require(std::abs(phi(a, not_a) + 1.0) <= 1e-12, "phi(a, not a)");
    return "t intervals k=2,31; spearman (ties and none); phi fixture, identity, complement";
}

std::string determinism_and_resume() {
    const auto fx = mixed_fixture(9, 30);
    const std::string body = "name = \"det\"\ntask = \"cw\"\nmap_oop = true\nencoder = \"hash\"\nbatch_size = 3\n"
                             "trials = 2\nseed = 17\nconcurrency = 4\nbackend = \"scripted\"\n";
    const auto cfg = fx.config(body);
    auto fresh_run = [&](std::optional<std::size_t> max_batches) {
        std::filesystem::remove_all(cfg.output_dir);
        std::filesystem::remove_all(cfg.cache_dir);
        auto env = fx.environment(cfg);
        return run_experiment(cfg, env, RunOptions{max_batches});
    };
    const auto d1 = run_digest(fresh_run(std::nullopt));
    const auto d2 = run_digest(fresh_run(std::nullopt));
    require(d1 == d2, "two uninterrupted runs differ");
    const auto cut = fresh_run(4);
    require(!cut.complete, "interrupted run reports complete");
    auto env = fx.environment(cfg);
    const auto resumed = resume_run(cut.run_dir, env, RunOptions{5});
    require(!resumed.complete, "second leg should still be partial");
    auto env2 = fx.environment(cfg);
    const auto done = resume_run(cut.run_dir, env2);
    require(done.complete && run_digest(done) == d1, "interrupted+resumed differs from uninterrupted");
    auto env3 = fx.environment(cfg);
    require(run_digest(resume_run(cut.run_dir, env3)) == d1 && env3.gateway->remote_calls() == 0, "completed resume not a no-op");
    return "digest " + d1.substr(0, 12) + " stable across runs and a two-stage resume";
}

std::string oop_taxonomy() {
    const auto c = named_catalog(kNames, {{0, 1}});
    const std::vector<std::string> refs;
    require(detect_oop("laptop", c) && classify_oop("laptop", c, refs) == OopKind::Partial, "laptop");
    require(detect_oop("I don't know", c) && classify_oop("I don't know", c, refs) == OopKind::Abstain, "abstain");
    require(!detect_oop("Laptop Computer", c), "exact name flagged");
    require(detect_oop("xqzzv blorp", c) && classify_oop("xqzzv blorp", c, refs) == OopKind::Wrong, "gibberish");

    const auto fx = mixed_fixture(4, 60);
    const auto cfg = fx.config("name = \"oop\"\ntask = \"cw\"\nmap_oop = true\nencoder = \"hash\"\nbatch_size = 10\n"
                               "backend = \"scripted\"\n");
    auto env = fx.environment(cfg);
    const auto rec = run_experiment(cfg, env);
    std::vector<PredictionRecord> preds;
    for (const auto& b : rec.trials[0].batches) preds.insert(preds.end(), b.predictions.begin(), b.predictions.end());
    const auto rows = oop_breakdown(preds, fx.labels(), fx.catalog(), partition_categories(fx.labels()));
    auto oop = [&](Category cat) { return rows.at(cat).oop; };
    require(oop(Category::A) == oop(Category::N) + oop(Category::SPlus) + oop(Category::SMinus) + oop(Category::MPlus) +
                                    oop(Category::MMinus),
            "leaf OOP counts do not sum to A");
    require(oop(Category::S) == oop(Category::SPlus) + oop(Category::SMinus), "S row");
    require(oop(Category::M) == oop(Category::MPlus) + oop(Category::MMinus), "M row");
    std::size_t kinds = 0, direct = 0;
    for (const auto& [k, n] : rows.at(Category::A).kinds) kinds += n;
    for (const auto& p : preds) direct += p.oop;
    require(kinds == oop(Category::A) && direct == oop(Category::A), "kind counts do not cover A");
    return "taxonomy fixture; " + std::to_string(oop(Category::A)) + " OOP answers, rows sum to A";
}

std::string case_outcomes() {
    std::size_t cases = 0;
    const CaseOutcome order[4] = {CaseOutcome::ReplacedByModel, CaseOutcome::PreservedReGT, CaseOutcome::Combined,
                                  CaseOutcome::Other};
    for (const auto& pairs : {std::vector<std::pair<std::uint32_t, std::uint32_t>>{},
                              std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 1}},
                              std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 2}, {1, 2}}}) {
        const auto c = numbered_catalog(3, pairs);
        for (std::uint32_t cm = 0; cm < 8; ++cm) {
            LabelSet chosen;
            for (std::uint32_t i = 0; i < 3; ++i) {
                if (cm & (1u << i)) chosen.insert(ClassId(i));
            }
            const auto expanded = scan_admissible(chosen, c);
            for (std::uint32_t rm = 0; rm < 8; ++rm) {
                LabelSet regt;
                for (std::uint32_t i = 0; i < 3; ++i) {
                    if (rm & (1u << i)) regt.insert(ClassId(i));
                }
                for (const Prediction& pred : {Prediction{}, Prediction{ClassId(0)}, Prediction{ClassId(1)}, Prediction{ClassId(2)}}) {
                    const bool p = pred && expanded.count(*pred);
                    const bool r = std::any_of(regt.begin(), regt.end(), [&](ClassId x) { return expanded.count(x) != 0; });
                    const bool hits[4] = {p && !r, !p && r, p && r, !p && !r};
                    require(hits[0] + hits[1] + hits[2] + hits[3] == 1, "oracle predicates overlap");
                    const auto got = classify_case_outcome(chosen, pred, regt, c);
                    int matched = 0;
                    for (int k = 0; k < 4; ++k) matched += hits[k] && got == order[k];
                    require(matched == 1, "outcome disagrees with predicates");
                    ++cases;
                }
            }
        }
    }
    return std::to_string(cases) + " (pairs, chosen, ReGT, prediction) cases, each exactly one outcome";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<std::string()>>> criteria = {
        {"metric oracle", metric_oracle},
        {"category algebra", category_algebra},
        {"CW+ identity", cw_plus_identity},
        {"N-rule", n_rule},
        {"MC integrity", mc_integrity},
        {"option-order invariance", option_order_invariance},
        {"mapper scan and exact bypass", mapper_scan},
        {"statistics", statistics},
        {"determinism and resume", determinism_and_resume},
        {"OOP taxonomy", oop_taxonomy},
        {"case outcomes", case_outcomes},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& [name, fn] = criteria[i];
        std::string detail;
        bool ok = false;
        try {
            detail = fn();
            ok = true;
        } catch (const CriterionFailure& e) {
            detail = e.what();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        if (!ok) ++failed;
        std::printf("%s  %2zu. %-30s %s\n", ok ? "PASS" : "FAIL", i + 1, name.c_str(), detail.c_str());
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
