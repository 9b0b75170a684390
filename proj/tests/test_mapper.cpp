#include "classbench/error.hpp"
#include "classbench/mapper.hpp"
#include "classbench/modelgate.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace classbench;
using namespace classbench::testing;

namespace {

class CountingEmbedder final : public Embedder {
public:
    explicit CountingEmbedder(std::shared_ptr<Embedder> inner) : inner_(std::move(inner)) {}
    const std::string& encoder_id() const override { return inner_->encoder_id(); }
    std::vector<Embedding> embed(std::span<const std::string> texts) override {
        ++calls;
        return inner_->embed(texts);
    }
    std::size_t calls = 0;

private:
    std::shared_ptr<Embedder> inner_;
};

Embedding basis(std::size_t dim, std::size_t i) {
    Embedding v(dim, 0.0f);
    v[i] = 1.0f;
    return v;
}

Embedding random_vector(Rng& rng, std::size_t dim) {
    Embedding v(dim);
    for (auto& x : v) x = static_cast<float>(static_cast<double>(rng.below(2001)) / 1000.0 - 1.0);
    return v;
}

std::vector<double> unit(const Embedding& v) {
    double sq = 0;
    for (float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    std::vector<double> u;
    for (float x : v) u.push_back(static_cast<double>(x) / std::sqrt(sq));
    return u;
}

// Exhaustive argmax of the dot product; earlier ids win exact ties.
NearestClass linear_scan(const std::vector<double>& q, const std::vector<std::vector<double>>& classes) {
    NearestClass best{ClassId(0), -2.0};
    for (std::size_t c = 0; c < classes.size(); ++c) {
        double s = 0;
        for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * classes[c][i];
        if (s > best.similarity) best = {ClassId(static_cast<std::uint32_t>(c)), s};
    }
    return best;
}

}  // namespace

TEST(Templates, DefaultEnsembleHasSevenWellFormedTemplates) {
    const auto t = default_templates();
    ASSERT_EQ(t.size(), 7u);
    for (const auto& s : t) EXPECT_NO_THROW(instantiate_template(s, "x"));
    EXPECT_EQ(instantiate_template("a photo of the small {}.", "tench"), "a photo of the small tench.");
    EXPECT_THROW(instantiate_template("no placeholder", "x"), Error);
    EXPECT_THROW(instantiate_template("{} and {}", "x"), Error);
}

TEST(BuildIndex, SingleTemplateOneHotGivesBasis) {
    const auto c = named_catalog({"tench", "goldfish", "shark"});
    OneHotEmbedder embed("onehot", {"tench", "goldfish", "shark"});
    const auto index = build_index(c, {"{}"}, embed);
    ASSERT_EQ(index.size(), 3u);
    EXPECT_EQ(index.dimension(), 4u);
    for (std::uint32_t i = 0; i < 3; ++i) {
        for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(index.vector(ClassId(i))[d], d == i ? 1.0 : 0.0);
    }
}

TEST(BuildIndex, OpposedTemplatesCancel) {
    const auto c = named_catalog({"a", "b"});
    ScriptedEmbedder embed("s", {{"x a", {1, 0}}, {"y a", {-1, 0}}, {"x b", {0, 1}}, {"y b", {0, 2}}});
    try {
        build_index(c, {"x {}", "y {}"}, embed);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
    }
}

TEST(BuildIndex, SevenTemplatesMatchSumAndNormalizeLoop) {
    const auto c = named_catalog({"tench", "goldfish", "great white shark", "tiger shark", "hammerhead"});
    HashingEmbedder embed("hash", 64);
    const auto templates = default_templates();
    for (bool each : {true, false}) {
        const auto index = build_index(c, templates, embed, IndexOptions{each});
        for (std::uint32_t k = 0; k < c.size(); ++k) {
            std::vector<double> sum(64, 0.0);
            for (const auto& t : templates) {
                const std::string text = instantiate_template(t, c.name(ClassId(k)));
                const auto v = embed.embed(std::span<const std::string>(&text, 1)).front();
                double norm = 0;
                for (float x : v) norm += static_cast<double>(x) * static_cast<double>(x);
                norm = each ? std::sqrt(norm) : 1.0;
                for (std::size_t i = 0; i < 64; ++i) sum[i] += static_cast<double>(v[i]) / norm;
            }
            double total = 0;
            for (double x : sum) total += x * x;
            for (std::size_t i = 0; i < 64; ++i) {
                EXPECT_NEAR(index.vector(ClassId(k))[i], sum[i] / std::sqrt(total), 1e-12);
            }
        }
    }
}

TEST(BuildIndex, RejectsEmptyAndMalformedTemplates) {
    const auto c = named_catalog({"a"});
    HashingEmbedder embed("hash", 8);
    EXPECT_THROW(build_index(c, {}, embed), Error);
    EXPECT_THROW(build_index(c, {"no slot"}, embed), Error);
}

TEST(DetectOop, CaseAndWhitespaceInsensitiveExactMatch) {
    const auto c = named_catalog({"tench", "goldfish"});
    EXPECT_FALSE(detect_oop("Tench", c));
    EXPECT_FALSE(detect_oop("  TENCH ", c));
    EXPECT_TRUE(detect_oop("a tench swimming", c));
    EXPECT_TRUE(detect_oop("", c));
}

TEST(ClassifyOop, TaxonomyFixture) {
    const auto c = named_catalog({"laptop computer", "tench", "golden retriever"});
    const std::vector<std::string> refs = {"notebook", "retriever dog"};
    EXPECT_EQ(classify_oop("laptop", c, refs), OopKind::Partial);
    EXPECT_EQ(classify_oop("computer laptop", c, refs), OopKind::Partial);
    EXPECT_EQ(classify_oop("Retriever  dog", c, refs), OopKind::In);
    EXPECT_EQ(classify_oop("I don't know", c, refs), OopKind::Abstain);
    EXPECT_EQ(classify_oop("I'm not sure what this is", c, refs), OopKind::Abstain);
    EXPECT_EQ(classify_oop("a small furry mammal", c, refs), OopKind::Wrong);
    EXPECT_EQ(classify_oop("", c, refs), OopKind::Wrong);
}

TEST(ClassifyOop, PartialIsWordOrderInvariant) {
    const auto c = named_catalog({"great white shark", "tiger cat"});
    for (const auto& q : {"white shark", "shark white", "great shark", "cat tiger"}) {
        EXPECT_EQ(classify_oop(q, c, {}), OopKind::Partial) << q;
    }
    EXPECT_EQ(classify_oop("white white shark", c, {}), OopKind::Wrong);
}

TEST(ClassifyOop, KindNamesRoundTrip) {
    for (auto k : {OopKind::Partial, OopKind::In, OopKind::Abstain, OopKind::Wrong}) {
        EXPECT_EQ(parse_oop_kind(to_string(k)), k);
    }
}

TEST(MapOutput, ExactHitOnOneHot) {
    const auto c = named_catalog({"a", "b", "c"});
    OneHotEmbedder embed("onehot", {"a", "b", "c"});
    const auto index = build_index(c, {"{}"}, embed);
    const auto r = map_output("C", index, embed);
    EXPECT_EQ(r.class_id, ClassId(2));
    EXPECT_DOUBLE_EQ(r.similarity, 1.0);
}

TEST(MapOutput, EquidistantQueryTakesLowestId) {
    const auto c = numbered_catalog(6);
    std::map<std::string, Embedding> table;
    for (std::size_t i = 0; i < 6; ++i) table["class " + std::to_string(i)] = basis(8, i);
    table["between"] = {0, 1, 0, 0, 1, 0, 1, 1};
    ScriptedEmbedder embed("s", table);
    const auto index = build_index(c, {"{}"}, embed);
    const auto r = map_output("between", index, embed);
    EXPECT_EQ(r.class_id, ClassId(1));
    EXPECT_DOUBLE_EQ(r.similarity, 0.5);
    // Same answer every time, ties included.
    for (int i = 0; i < 5; ++i) EXPECT_EQ(map_output("between", index, embed).class_id, ClassId(1));
}

TEST(MapOutput, MatchesLinearScanOnSeededFixture) {
    Rng rng(20);
    const auto c = numbered_catalog(20);
    std::map<std::string, Embedding> table;
    std::vector<Embedding> class_vecs;
    for (std::size_t i = 0; i < 20; ++i) {
        class_vecs.push_back(random_vector(rng, 16));
        table["class " + std::to_string(i)] = class_vecs.back();
    }
    std::vector<std::pair<std::string, Embedding>> queries;
    for (int q = 0; q < 100; ++q) {
        queries.emplace_back("query " + std::to_string(q), random_vector(rng, 16));
        table[queries.back().first] = queries.back().second;
    }
    ScriptedEmbedder embed("s", table);
    const auto index = build_index(c, {"{}"}, embed);
    std::vector<std::vector<double>> raw_units;
    for (const auto& v : class_vecs) raw_units.push_back(unit(v));
    for (const auto& [text, vec] : queries) {
        const auto got = map_output(text, index, embed);
        // Scan over the stored index vectors: bit-exact.
        const auto want = linear_scan(unit(vec), index.vectors());
        EXPECT_EQ(got.class_id, want.class_id) << text;
        EXPECT_EQ(got.similarity, want.similarity) << text;
        // Scan over the raw class vectors: same winner.
        EXPECT_EQ(got.class_id, linear_scan(unit(vec), raw_units).class_id) << text;
        EXPECT_GE(got.similarity, -1.0);
        EXPECT_LE(got.similarity, 1.0);
    }
}

TEST(MapOutput, ErrorsOnEmptyTextAndEncoderMismatch) {
    const auto c = named_catalog({"a", "b"});
    OneHotEmbedder embed("onehot", {"a", "b"});
    OneHotEmbedder other("other", {"a", "b"});
    const auto index = build_index(c, {"{}"}, embed);
    try {
        map_output("   ", index, embed);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyText);
    }
    try {
        map_output("a", index, other);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EncoderMismatch);
    }
}

TEST(Resolve, ExactNameBypassesProvider) {
    const std::vector<std::string> names = {"tench", "goldfish", "great white shark", "tiger shark"};
    const auto c = named_catalog(names);
    auto counting = std::make_shared<CountingEmbedder>(std::make_shared<OneHotEmbedder>("onehot", names));
    const auto index = build_index(c, {"{}"}, *counting);
    counting->calls = 0;
    const std::vector<std::string> refs, abstain = default_abstain_phrases();
    const ResolveContext ctx{c, index, *counting, refs, abstain};
    for (const auto& n : names) {
        const auto r = resolve(n, ctx);
        EXPECT_FALSE(r.oop);
        EXPECT_FALSE(r.similarity.has_value());
        EXPECT_EQ(r.mapped_class, c.find_by_name(n));
    }
    EXPECT_EQ(counting->calls, 0u);
    const auto r = resolve("shark", ctx);
    EXPECT_TRUE(r.oop);
    EXPECT_EQ(r.oop_kind, OopKind::Partial);
    EXPECT_TRUE(r.mapped_class.has_value());
    EXPECT_EQ(counting->calls, 1u);
}

TEST(Resolve, MixedBatchMatchesComposition) {
    const std::vector<std::string> names = {"laptop computer", "notebook computer", "tabby cat", "tiger cat",
                                            "golden retriever", "banana"};
    const auto c = named_catalog(names);
    HashingEmbedder embed("hash", 128);
    const auto index = build_index(c, default_templates(), embed);
    const std::vector<std::string> refs = {"kitty"}, abstain = default_abstain_phrases();
    const ResolveContext ctx{c, index, embed, refs, abstain};
    const std::vector<std::string> pool = {"laptop", "Tabby Cat", "kitty", "I don't know", "yellow fruit",
                                           "cat", "dog golden", "banana", "notebook", "unsure"};
    for (int i = 0; i < 50; ++i) {
        const auto& raw = pool[static_cast<std::size_t>(i) % pool.size()];
        const auto r = resolve(raw, ctx);
        EXPECT_EQ(r.raw_text, raw);
        EXPECT_EQ(r.oop, detect_oop(raw, c));
        if (r.oop) {
            EXPECT_EQ(r.oop_kind, classify_oop(raw, c, refs, abstain));
            const auto m = map_output(raw, index, embed);
            EXPECT_EQ(r.mapped_class, m.class_id);
            EXPECT_EQ(r.similarity, m.similarity);
        } else {
            EXPECT_EQ(r.mapped_class, c.find_by_name(raw));
        }
    }
}

TEST(IndexProperty, VectorsAreUnitNorm) {
    const auto c = numbered_catalog(30);
    HashingEmbedder embed("hash", 32);
    const auto index = build_index(c, default_templates(), embed);
    for (const auto& v : index.vectors()) {
        double sq = 0;
        for (double x : v) sq += x * x;
        EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
    }
}
