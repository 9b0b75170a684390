#include "classbench/error.hpp"
#include "classbench/tasks.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <regex>
#include <set>

using namespace classbench;
using namespace classbench::testing;

namespace {

std::vector<ImageId> ids(std::size_t n, const std::string& prefix = "img") {
    std::vector<ImageId> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

// Keys named in the per-request contract, in order.
std::vector<std::string> contract_keys(const std::string& text) {
    static const std::regex kKey("\"(\\d+)\"");
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kKey); it != std::sregex_iterator(); ++it) {
        out.push_back((*it)[1].str());
    }
    return out;
}

PromptBundle keyed_bundle(std::size_t n) {
    PromptBundle b;
    b.image_refs = ids(n);
    b.response_format = ResponseFormat::ClassName;
    return b;
}

PromptBundle mc_bundle() { return build_mc_prompt("x", {"tench", "goldfish", "shark", "whale"}, 2); }

}  // namespace

TEST(CwPrompt, ListsEveryClassNameExactlyOnce) {
    const auto c = named_catalog({"tench", "goldfish", "great white shark", "tiger shark", "hammerhead"});
    const auto b = build_cw_prompt(c, ids(3), ResponseFormat::ClassName);
    for (const auto& e : c.entries()) {
        EXPECT_EQ(count_occurrences(b.system_text, "\"" + e.canonical_name + "\""), 1u) << e.canonical_name;
    }
    EXPECT_EQ(b.system_text.find("{class_list}"), std::string::npos);
    EXPECT_EQ(b.system_text.find("{batch_limit}"), std::string::npos);
    EXPECT_NE(b.system_text.find("up to 50 images"), std::string::npos);
}

TEST(CwPrompt, ThousandClassesTenImagesHasTenKeys) {
    const auto c = numbered_catalog(1000);
    const auto b = build_cw_prompt(c, ids(10), ResponseFormat::ClassName);
    const auto keys = contract_keys(b.per_request_text);
    ASSERT_EQ(keys.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(keys[i], std::to_string(i + 1));
    const auto list_start = b.system_text.find('[');
    const auto list_end = b.system_text.find(']', list_start);
    const auto names = nlohmann::json::parse(b.system_text.substr(list_start, list_end - list_start + 1));
    ASSERT_EQ(names.size(), 1000u);
    for (std::size_t i = 0; i < 1000; ++i) EXPECT_EQ(names[i], "class " + std::to_string(i));
}

TEST(CwPrompt, IdFormatMappingParsesBack) {
    const auto c = named_catalog({"tench", "goldfish", "laptop computer", "notebook computer"}, {{2, 3}});
    const auto b = build_cw_prompt(c, ids(2), ResponseFormat::ClassIdFormat);
    static const std::regex kLine(R"(^(\d+) -- (.+)$)");
    std::istringstream in(b.system_text);
    std::string line;
    std::map<std::uint32_t, std::string> parsed;
    while (std::getline(in, line)) {
        std::smatch m;
        if (std::regex_match(line, m, kLine)) parsed[std::stoul(m[1].str())] = m[2].str();
    }
    ASSERT_EQ(parsed.size(), c.size());
    for (const auto& e : c.entries()) EXPECT_EQ(parsed.at(e.id.value), e.canonical_name);
}

TEST(CwPrompt, EnforcedStyleCarriesKeyedSchema) {
    const auto c = numbered_catalog(3);
    PromptOptions o;
    o.style = BackendStyle::Enforced;
    const auto b = build_cw_prompt(c, ids(3), ResponseFormat::ClassName, o);
    const auto schema = nlohmann::json::parse(b.structure_hint);
    EXPECT_EQ(schema["required"], nlohmann::json({"1", "2", "3"}));
    EXPECT_FALSE(schema["additionalProperties"].get<bool>());
    const auto instructed = build_cw_prompt(c, ids(3), ResponseFormat::ClassName);
    EXPECT_TRUE(instructed.structure_hint.empty());
    EXPECT_NE(instructed.system_text.find("structured as JSON"), std::string::npos);
}

TEST(CwPrompt, RejectsEmptyAndOversizedBatches) {
    const auto c = numbered_catalog(3);
    try {
        build_cw_prompt(c, {}, ResponseFormat::ClassName);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyBatch);
    }
    PromptOptions o;
    o.batch_limit = 4;
    try {
        build_cw_prompt(c, ids(5), ResponseFormat::ClassName, o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::PayloadTooLarge);
    }
}

TEST(OwPrompt, NamesNoClassesAndAsksForDominantObject) {
    const auto c = named_catalog({"tench", "goldfish", "laptop computer"});
    for (auto style : {BackendStyle::Enforced, BackendStyle::Instructed}) {
        PromptOptions o;
        o.style = style;
        const auto b = build_ow_prompt(ids(50), o);
        for (const auto& e : c.entries()) EXPECT_EQ(b.system_text.find(e.canonical_name), std::string::npos);
        EXPECT_NE(b.system_text.find("dominant object"), std::string::npos);
        const auto keys = contract_keys(b.per_request_text);
        ASSERT_EQ(keys.size(), 50u);
        EXPECT_EQ(keys.back(), "50");
    }
}

TEST(McPrompt, LettersFollowPresentationOrder) {
    const auto b = mc_bundle();
    EXPECT_EQ(b.answer_key.at("x"), 'C');
    EXPECT_NE(b.system_text.find("\nA. tench\nB. goldfish\nC. shark\nD. whale"), std::string::npos);
    EXPECT_EQ(option_letter(0), 'A');
    EXPECT_EQ(option_letter(25), 'Z');
    EXPECT_THROW(option_letter(26), Error);
}

TEST(McPrompt, NonFourOptionCountsRewriteLetterRange) {
    const auto b = build_mc_prompt("x", {"a", "b", "c", "d", "e", "f"}, 5);
    EXPECT_NE(b.system_text.find("(A, B, C, D, E, F)"), std::string::npos);
    EXPECT_NE(b.system_text.find("6 multiple-choice"), std::string::npos);
    EXPECT_EQ(b.answer_key.at("x"), 'F');
}

TEST(McPrompt, RejectsDuplicateOptions) {
    try {
        build_mc_prompt("x", {"Tench", "goldfish", "tench ", "shark"}, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DuplicateOption);
    }
    EXPECT_THROW(build_mc_prompt("x", {"a", "b"}, 2), Error);
}

TEST(McPrompt, ShuffledOptionsKeepAnswerKey) {
    Rng rng(3);
    for (int round = 0; round < 100; ++round) {
        std::vector<std::string> opts{"tench", "goldfish", "shark", "whale"};
        rng.shuffle(opts);
        const auto pos = static_cast<std::size_t>(std::find(opts.begin(), opts.end(), "goldfish") - opts.begin());
        const auto b = build_mc_prompt("x", opts, pos);
        const char letter = b.answer_key.at("x");
        EXPECT_EQ(b.options[static_cast<std::size_t>(letter - 'A')], "goldfish");
        EXPECT_NE(b.system_text.find(std::string("\n") + letter + ". goldfish"), std::string::npos);
    }
}

TEST(Templates, OverrideDirectoryReplacesOneTemplate) {
    TempDir dir;
    write_file(dir / "open_world_instructed.txt", "custom {batch_limit}");
    const auto t = PromptTemplates::load(dir.path());
    PromptOptions o;
    o.templates = &t;
    o.batch_limit = 7;
    EXPECT_EQ(build_ow_prompt(ids(1), o).system_text, "custom 7");
    EXPECT_EQ(t.get(TaskKind::ClosedWorld, BackendStyle::Instructed),
              PromptTemplates::defaults().get(TaskKind::ClosedWorld, BackendStyle::Instructed));
}

TEST(Batches, RandomMixedPartitionsImages) {
    const auto store = [] {
        Rng rng(1);
        return random_store(rng, 103, 7);
    }();
    const auto images = all_images(store);
    const auto plan = compose_batches(images, store, 10, Ordering::RandomMixed, 42);
    ASSERT_EQ(plan.batches.size(), 11u);
    std::multiset<ImageId> seen;
    for (std::size_t i = 0; i < plan.batches.size(); ++i) {
        EXPECT_EQ(plan.batches[i].size(), i + 1 < plan.batches.size() ? 10u : 3u);
        seen.insert(plan.batches[i].begin(), plan.batches[i].end());
    }
    EXPECT_EQ(seen, std::multiset<ImageId>(images.begin(), images.end()));
}

TEST(Batches, SameClassBatchesArePure) {
    Rng rng(2);
    const auto store = random_store(rng, 80, 5);
    const auto plan = compose_batches(all_images(store), store, 6, Ordering::SameClass, 9);
    std::size_t total = 0;
    for (const auto& batch : plan.batches) {
        std::set<ClassId> classes;
        for (const auto& img : batch) classes.insert(store.imgt.at(img));
        EXPECT_EQ(classes.size(), 1u);
        total += batch.size();
    }
    EXPECT_EQ(total, 80u);
}

TEST(Batches, SameSeedSamePlanAndJsonRoundTrip) {
    Rng rng(4);
    const auto store = random_store(rng, 30, 4);
    const auto a = compose_batches(all_images(store), store, 4, Ordering::RandomMixed, 17);
    const auto b = compose_batches(all_images(store), store, 4, Ordering::RandomMixed, 17);
    const auto c = compose_batches(all_images(store), store, 4, Ordering::RandomMixed, 18);
    EXPECT_EQ(a.batches, b.batches);
    EXPECT_NE(a.batches, c.batches);
    const BatchPlan back = nlohmann::json(a).get<BatchPlan>();
    EXPECT_EQ(back.batches, a.batches);
    EXPECT_EQ(back.seed, 17u);
    EXPECT_THROW(compose_batches(all_images(store), store, 0, Ordering::RandomMixed, 1), Error);
}

TEST(ParseResponse, KeyedJsonVariants) {
    const auto b = keyed_bundle(3);
    const std::map<ImageId, std::string> want{{"img0", "tench"}, {"img1", "goldfish"}, {"img2", "shark"}};
    EXPECT_EQ(parse_response(R"({"1": "tench", "2": "goldfish", "3": "shark"})", b), want);
    EXPECT_EQ(parse_response("```json\n{\"1\": \"tench\", \"2\": \"goldfish\", \"3\": \"shark\"}\n```", b), want);
    EXPECT_EQ(parse_response("Sure! Here you go: {\"1\": \"tench\", \"2\": [\"goldfish\"], \"3\": \" shark \"} Thanks", b),
              want);
    EXPECT_EQ(parse_response(R"({"img0": "tench", "2": "goldfish", "3": "shark"})", b), want);
}

TEST(ParseResponse, MissingKeysAreAbsentNotEmpty) {
    const auto b = keyed_bundle(3);
    const auto got = parse_response(R"({"1": "tench", "3": null})", b);
    EXPECT_EQ(got.size(), 1u);
    EXPECT_EQ(got.count("img1"), 0u);
    EXPECT_EQ(got.count("img2"), 0u);
}

TEST(ParseResponse, LineOrientedFallback) {
    const auto b = keyed_bundle(3);
    const auto got = parse_response("1: tench\n\"2\": \"goldfish\",\n3. tabby cat\n7: ignored", b);
    EXPECT_EQ(got, (std::map<ImageId, std::string>{{"img0", "tench"}, {"img1", "goldfish"}, {"img2", "tabby cat"}}));
}

TEST(ParseResponse, SingleImagePlainTextAndGarbage) {
    EXPECT_EQ(parse_response("  \"laptop\" ", keyed_bundle(1)).at("img0"), "laptop");
    try {
        parse_response("I cannot help with that.", keyed_bundle(2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnparseableResponse);
    }
}

TEST(ParseResponse, McLetterGoldens) {
    const auto b = mc_bundle();
    for (const char* raw : {"C", " C ", "c", "(C)", "**C**", "C.", "```\nC\n```", R"({"answer": "C"})",
                            "The answer is C", "Answer: (C)", "I think it is C because of the fins"}) {
        EXPECT_EQ(parse_response(raw, b).at("x"), "C") << raw;
    }
    for (const char* raw : {"E", "", "A or B", "none of these"}) {
        EXPECT_THROW(parse_response(raw, b), Error) << raw;
    }
}
