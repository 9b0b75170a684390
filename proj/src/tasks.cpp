#include "classbench/tasks.hpp"

#include "classbench/error.hpp"
#include "classbench/rng.hpp"
#include "classbench/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace classbench {

namespace {

constexpr const char* kCwEnforced =
    "You are an image classifier.\n"
    "You will receive up to {batch_limit} images in order (image \"1\" = first, \"2\" = second, etc.).\n"
    "You are also provided with a list of class names: {class_list}.\n"
    "\n"
    "Classification Rules:\n"
    "- For each image, return the single class name that best represents the main subject of the image.\n"
    "- Choose only one class per image - the most relevant or dominant one.\n"
    "- Only return classes from the provided list.\n"
    "\n"
    "Output Rules:\n"
    "- Return exactly one output per image.\n"
    "- Each output must be only a single class name (no separators or lists).\n"
    "- Do not include explanations, confidence scores, or extra text.\n";

constexpr const char* kCwInstructed =
    "You are an image classifier.\n"
    "You will receive up to {batch_limit} images in order (image \"1\" = first, \"2\" = second, etc.).\n"
    "You are also provided with a list of class names: {class_list}.\n"
    "\n"
    "Your output will be automatically structured as JSON with keys \"1\", \"2\", \"3\", etc. corresponding to "
    "the order of images in the request.\n"
    "Each value should be the predicted class name for that image.\n"
    "\n"
    "Classification Rules:\n"
    "- For each image, return the class name only from the provided list.\n"
    "- Only return classes from the provided list.\n"
    "\n"
    "Output Rules:\n"
    "- Return exactly one JSON key per image (\"1\", \"2\", \"3\", etc.).\n"
    "- Each value must be only class names.\n"
    "- Do not include explanations, confidence scores, or extra text.\n";

constexpr const char* kCwIdEnforced =
    "You are an image classifier.\n"
    "You will receive up to {batch_limit} images in order (image \"1\" = first, \"2\" = second, etc.).\n"
    "You are also provided with an ID -- class name mapping:\n{class_list}\n"
    "\n"
    "Classification Rules:\n"
    "- For each image, return the ID of the single class that best represents the main subject of the image.\n"
    "- Choose only one class per image - the most relevant or dominant one.\n"
    "- Only return IDs from the provided mapping.\n"
    "\n"
    "Output Rules:\n"
    "- Return exactly one output per image.\n"
    "- Each output must be only a single class ID (no names, separators or lists).\n"
    "- Do not include explanations, confidence scores, or extra text.\n";

constexpr const char* kCwIdInstructed =
    "You are an image classifier.\n"
    "You will receive up to {batch_limit} images in order (image \"1\" = first, \"2\" = second, etc.).\n"
    "You are also provided with an ID -- class name mapping:\n{class_list}\n"
    "\n"
    "Your output will be automatically structured as JSON with keys \"1\", \"2\", \"3\", etc. corresponding to "
    "the order of images in the request.\n"
    "Each value should be the predicted class ID for that image.\n"
    "\n"
    "Classification Rules:\n"
    "- For each image, return the class ID only from the provided mapping.\n"
    "- Only return IDs from the provided mapping.\n"
    "\n"
    "Output Rules:\n"
    "- Return exactly one JSON key per image (\"1\", \"2\", \"3\", etc.).\n"
    "- Each value must be only a class ID.\n"
    "- Do not include explanations, confidence scores, or extra text.\n";

constexpr const char* kOwRules =
    "Classification Rules:\n"
    "- For each image, identify the dominant object.\n"
    "- Return the most fine-grained, specific label that accurately describes that object (e.g., \"golden "
    "retriever puppy\", \"1950s red convertible\", \"blue morpho butterfly\", \"ceramic coffee mug with floral "
    "pattern\").\n"
    "- Use natural-language labels that reflect detailed visual distinctions such as species, make/model, style, "
    "color, or material.\n"
    "- Avoid generic terms like \"dog\", \"car\", or \"bird\" when a more specific subtype or description is "
    "visually inferable.\n"
    "- If the dominant object cannot be clearly identified, return a concise descriptive label of its appearance "
    "(e.g., \"abstract metal sculpture\", \"blurry human silhouette\").\n"
    "- Focus only on the dominant object, even if multiple are present.\n"
    "\n"
    "Output Rules:\n"
    "- Return exactly one output per image.\n"
    "- The output must contain only the final label (no punctuation beyond normal text, no explanations, "
    "confidence scores, or extra text).\n";

constexpr const char* kOwHeader =
    "You are an open-set fine-grained image classifier.\n"
    "You will receive up to {batch_limit} images in order (image \"1\" = first, \"2\" = second, etc.).\n"
    "\n";

constexpr const char* kOwStructure =
    "Your output will be automatically structured as JSON with keys \"1\", \"2\", \"3\", etc. corresponding to "
    "the order of images in the request.\n"
    "Each value should be the predicted label for that image.\n"
    "\n";

constexpr const char* kMc =
    "You are an image classifier. You will receive one image. You are also provided with four multiple-choice "
    "options (A, B, C, D).\n"
    "\n"
    "What is the main object in this image? {dynamic_choices}\n"
    "\n"
    "Classification Rules:\n"
    "- For the image, return the letter (A, B, C, or D) that corresponds to the correct option.\n"
    "- Only return one letter.\n"
    "\n"
    "Output Rules:\n"
    "- Return exactly one letter (A, B, C, or D).\n"
    "- Do not include explanations, the class name, or extra text.\n"
    "- Your answer must be only the letter.\n";

std::string template_key(TaskKind task, bool id_format, BackendStyle style) {
    std::string k(to_string(task));
    if (id_format) k += "_id";
    k += "_";
    k += to_string(style);
    return k;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

std::string strip_code_fences(std::string_view raw) {
    std::string s(text::trim(raw));
    const auto open = s.find("```");
    if (open == std::string::npos) return s;
    auto body_start = s.find('\n', open);
    if (body_start == std::string::npos) return s;
    ++body_start;
    const auto close = s.find("```", body_start);
    return std::string(text::trim(std::string_view(s).substr(body_start, close == std::string::npos
                                                                             ? std::string::npos
                                                                             : close - body_start)));
}

std::string strip_quotes(std::string_view s) {
    s = text::trim(s);
    while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
        s = text::trim(s.substr(1, s.size() - 2));
    }
    return std::string(s);
}

std::string json_value_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array() && v.size() == 1) return json_value_text(v.front());
    return v.dump();
}

std::optional<char> parse_letter(std::string_view raw, std::size_t n_options) {
    const char last = option_letter(n_options - 1);
    auto in_range = [&](char c) { return c >= 'A' && c <= last; };

    std::string s = strip_code_fences(raw);
    // A bare letter possibly wrapped in punctuation: "C", "(C)", "**C**", "c."
    std::string core;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) core.push_back(c);
    }
    if (core.size() == 1) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(core[0])));
        if (in_range(c)) return c;
    }
    // A JSON wrapper around the answer.
    const auto lb = s.find('{');
    const auto rb = s.rfind('}');
    if (lb != std::string::npos && rb != std::string::npos && rb > lb) {
        const auto j = nlohmann::json::parse(s.substr(lb, rb - lb + 1), nullptr, false);
        if (j.is_object() && j.size() == 1) return parse_letter(json_value_text(j.begin().value()), n_options);
    }
    static const std::regex kAnswerIs(R"((?:answer|option|choice)\s*(?:is|:)?\s*[\(\*"']*([A-Za-z])\b)",
                                      std::regex::icase);
    std::smatch m;
    if (std::regex_search(s, m, kAnswerIs)) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
        if (in_range(c)) return c;
    }
    // Exactly one distinct standalone capital letter in range.
    static const std::regex kToken(R"(\b([A-Z])\b)");
    std::set<char> seen;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kToken); it != std::sregex_iterator(); ++it) {
        const char c = (*it)[1].str()[0];
        if (in_range(c)) seen.insert(c);
    }
    if (seen.size() == 1) return *seen.begin();
    return std::nullopt;
}

}  // namespace

std::string_view to_string(TaskKind v) {
    switch (v) {
        case TaskKind::OpenWorld: return "open_world";
        case TaskKind::MultipleChoice: return "multiple_choice";
        case TaskKind::ClosedWorld: return "closed_world";
    }
    return "?";
}

std::string_view to_string(ResponseFormat v) {
    switch (v) {
        case ResponseFormat::ClassName: return "class_name";
        case ResponseFormat::ClassIdFormat: return "class_id";
        case ResponseFormat::Letter: return "letter";
    }
    return "?";
}

std::string_view to_string(BackendStyle v) {
    return v == BackendStyle::Enforced ? "enforced" : "instructed";
}

std::string_view to_string(Ordering v) {
    return v == Ordering::RandomMixed ? "random_mixed" : "same_class";
}

TaskKind parse_task_kind(std::string_view s) {
    for (auto v : {TaskKind::OpenWorld, TaskKind::MultipleChoice, TaskKind::ClosedWorld}) {
        if (to_string(v) == s) return v;
    }
    if (s == "ow") return TaskKind::OpenWorld;
    if (s == "mc") return TaskKind::MultipleChoice;
    if (s == "cw") return TaskKind::ClosedWorld;
    throw Error(ErrorCode::InvalidConfig, "unknown task '" + std::string(s) + "'");
}

ResponseFormat parse_response_format(std::string_view s) {
    for (auto v : {ResponseFormat::ClassName, ResponseFormat::ClassIdFormat, ResponseFormat::Letter}) {
        if (to_string(v) == s) return v;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown response format '" + std::string(s) + "'");
}

BackendStyle parse_backend_style(std::string_view s) {
    if (s == "enforced") return BackendStyle::Enforced;
    if (s == "instructed") return BackendStyle::Instructed;
    throw Error(ErrorCode::InvalidConfig, "unknown backend style '" + std::string(s) + "'");
}

Ordering parse_ordering(std::string_view s) {
    if (s == "random_mixed") return Ordering::RandomMixed;
    if (s == "same_class") return Ordering::SameClass;
    throw Error(ErrorCode::InvalidConfig, "unknown ordering '" + std::string(s) + "'");
}

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.texts_[template_key(TaskKind::ClosedWorld, false, BackendStyle::Enforced)] = kCwEnforced;
    t.texts_[template_key(TaskKind::ClosedWorld, false, BackendStyle::Instructed)] = kCwInstructed;
    t.texts_[template_key(TaskKind::ClosedWorld, true, BackendStyle::Enforced)] = kCwIdEnforced;
    t.texts_[template_key(TaskKind::ClosedWorld, true, BackendStyle::Instructed)] = kCwIdInstructed;
    t.texts_[template_key(TaskKind::OpenWorld, false, BackendStyle::Enforced)] = std::string(kOwHeader) + kOwRules;
    t.texts_[template_key(TaskKind::OpenWorld, false, BackendStyle::Instructed)] =
        std::string(kOwHeader) + kOwStructure + kOwRules;
    t.texts_[template_key(TaskKind::MultipleChoice, false, BackendStyle::Enforced)] = kMc;
    t.texts_[template_key(TaskKind::MultipleChoice, false, BackendStyle::Instructed)] = kMc;
    return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    PromptTemplates t = defaults();
    for (auto& [key, value] : t.texts_) {
        const auto path = dir / (key + ".txt");
        if (!std::filesystem::exists(path)) continue;
        std::ifstream in(path);
        std::ostringstream ss;
        ss << in.rdbuf();
        value = ss.str();
    }
    return t;
}

const std::string& PromptTemplates::get(TaskKind task, BackendStyle style, bool id_format) const {
    const auto it = texts_.find(template_key(task, id_format, style));
    if (it == texts_.end()) throw Error(ErrorCode::InvalidConfig, "no prompt template for " + template_key(task, id_format, style));
    return it->second;
}

void PromptTemplates::set(TaskKind task, BackendStyle style, std::string text, bool id_format) {
    texts_[template_key(task, id_format, style)] = std::move(text);
}

std::string render_class_list(const ClassCatalog& catalog, ResponseFormat format) {
    if (format == ResponseFormat::ClassIdFormat) {
        std::string out;
        for (const auto& e : catalog.entries()) {
            out += std::to_string(e.id.value);
            out += " -- ";
            out += e.canonical_name;
            out += '\n';
        }
        if (!out.empty()) out.pop_back();
        return out;
    }
    nlohmann::json names = nlohmann::json::array();
    for (const auto& e : catalog.entries()) names.push_back(e.canonical_name);
    return names.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string render_key_contract(std::size_t n_images) {
    std::string keys;
    for (std::size_t i = 1; i <= n_images; ++i) {
        if (i > 1) keys += ", ";
        keys += "\"" + std::to_string(i) + "\"";
    }
    return "Return JSON with keys " + keys + " (one key per image, in request order).";
}

namespace {

const PromptTemplates& templates_or_default(const PromptOptions& options) {
    static const PromptTemplates kDefaults = PromptTemplates::defaults();
    return options.templates ? *options.templates : kDefaults;
}

std::string keyed_schema(std::size_t n, const char* value_type) {
    nlohmann::json props = nlohmann::json::object();
    nlohmann::json required = nlohmann::json::array();
    for (std::size_t i = 1; i <= n; ++i) {
        props[std::to_string(i)] = {{"type", value_type}};
        required.push_back(std::to_string(i));
    }
    nlohmann::json schema{{"type", "object"},
                          {"properties", props},
                          {"required", required},
                          {"additionalProperties", false}};
    return schema.dump();
}

void check_batch(const std::vector<ImageId>& batch, const PromptOptions& options) {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "prompt needs at least one image");
    if (batch.size() > options.batch_limit) {
        throw Error(ErrorCode::PayloadTooLarge, std::to_string(batch.size()) + " images exceed the limit of " +
                                                    std::to_string(options.batch_limit));
    }
}

}  // namespace

PromptBundle build_cw_prompt(const ClassCatalog& catalog, const std::vector<ImageId>& batch, ResponseFormat format,
                             const PromptOptions& options) {
    check_batch(batch, options);
    if (format == ResponseFormat::Letter) throw Error(ErrorCode::InvalidConfig, "closed world has no letter format");
    std::string sys = templates_or_default(options).get(TaskKind::ClosedWorld, options.style,
                                                        format == ResponseFormat::ClassIdFormat);
    replace_all(sys, "{batch_limit}", std::to_string(options.batch_limit));
    replace_all(sys, "{class_list}", render_class_list(catalog, format));

    PromptBundle b;
    b.task = TaskKind::ClosedWorld;
    b.system_text = std::move(sys);
    b.per_request_text = render_key_contract(batch.size());
    b.image_refs = batch;
    b.response_format = format;
    if (options.style == BackendStyle::Enforced) b.structure_hint = keyed_schema(batch.size(), "string");
    return b;
}

PromptBundle build_ow_prompt(const std::vector<ImageId>& batch, const PromptOptions& options) {
    check_batch(batch, options);
    std::string sys = templates_or_default(options).get(TaskKind::OpenWorld, options.style);
    replace_all(sys, "{batch_limit}", std::to_string(options.batch_limit));
    PromptBundle b;
    b.task = TaskKind::OpenWorld;
    b.system_text = std::move(sys);
    b.per_request_text = render_key_contract(batch.size());
    b.image_refs = batch;
    b.response_format = ResponseFormat::ClassName;
    if (options.style == BackendStyle::Enforced) b.structure_hint = keyed_schema(batch.size(), "string");
    return b;
}

char option_letter(std::size_t index) {
    if (index >= kMaxOptions) throw Error(ErrorCode::BadIndex, "option index " + std::to_string(index));
    return static_cast<char>('A' + index);
}

PromptBundle build_mc_prompt(const ImageId& image_id, const std::vector<std::string>& options,
                             std::size_t answer_index, const PromptOptions& prompt_options) {
    if (options.size() < 2 || options.size() > kMaxOptions) {
        throw Error(ErrorCode::BadIndex, "need between 2 and 26 options, got " + std::to_string(options.size()));
    }
    if (answer_index >= options.size()) throw Error(ErrorCode::BadIndex, "answer index out of range");
    std::set<std::string> seen;
    for (const auto& o : options) {
        if (!seen.insert(text::normalize_name(o)).second) throw Error(ErrorCode::DuplicateOption, o);
    }
    std::string sys = templates_or_default(prompt_options).get(TaskKind::MultipleChoice, prompt_options.style);
    if (options.size() != 4) {
        std::vector<std::string> letters;
        for (std::size_t i = 0; i < options.size(); ++i) letters.emplace_back(1, option_letter(i));
        auto or_list = letters;
        or_list.back() = "or " + or_list.back();
        replace_all(sys, "four multiple-choice", std::to_string(options.size()) + " multiple-choice");
        replace_all(sys, "(A, B, C, D)", "(" + text::join(letters, ", ") + ")");
        replace_all(sys, "(A, B, C, or D)", "(" + text::join(or_list, ", ") + ")");
    }
    std::string choices;
    for (std::size_t i = 0; i < options.size(); ++i) {
        choices += "\n";
        choices += option_letter(i);
        choices += ". ";
        choices += options[i];
    }
    replace_all(sys, "{dynamic_choices}", choices);

    PromptBundle b;
    b.task = TaskKind::MultipleChoice;
    b.system_text = std::move(sys);
    b.image_refs = {image_id};
    b.response_format = ResponseFormat::Letter;
    b.answer_key[image_id] = option_letter(answer_index);
    b.options = options;
    return b;
}

void to_json(nlohmann::json& j, const BatchPlan& plan) {
    j = nlohmann::json{{"batches", plan.batches},
                       {"batch_size", plan.batch_size},
                       {"ordering", std::string(to_string(plan.ordering))},
                       {"seed", plan.seed}};
}

void from_json(const nlohmann::json& j, BatchPlan& plan) {
    plan.batches = j.at("batches").get<std::vector<std::vector<ImageId>>>();
    plan.batch_size = j.at("batch_size").get<std::size_t>();
    plan.ordering = parse_ordering(j.at("ordering").get<std::string>());
    plan.seed = j.at("seed").get<std::uint64_t>();
}

BatchPlan compose_batches(const std::vector<ImageId>& images, const LabelStore& labels, std::size_t size,
                          Ordering ordering, std::uint64_t seed) {
    if (size == 0) throw Error(ErrorCode::InvalidConfig, "batch size must be at least 1");
    BatchPlan plan;
    plan.batch_size = size;
    plan.ordering = ordering;
    plan.seed = seed;

    std::vector<ImageId> order = images;
    Rng rng(seed);
    rng.shuffle(order);

    auto chunk = [&](const std::vector<ImageId>& group) {
        for (std::size_t i = 0; i < group.size(); i += size) {
            plan.batches.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(i),
                                      group.begin() + static_cast<std::ptrdiff_t>(std::min(group.size(), i + size)));
        }
    };

    if (ordering == Ordering::RandomMixed) {
        chunk(order);
        return plan;
    }
    std::map<ClassId, std::vector<ImageId>> groups;
    for (const auto& img : order) {
        const auto it = labels.imgt.find(img);
        if (it == labels.imgt.end()) throw Error(ErrorCode::MissingImGT, img);
        groups[it->second].push_back(img);
    }
    for (const auto& [cls, group] : groups) chunk(group);
    return plan;
}

std::map<ImageId, std::string> parse_response(std::string_view raw, const PromptBundle& bundle) {
    std::map<ImageId, std::string> out;
    const std::size_t n = bundle.image_refs.size();

    if (bundle.response_format == ResponseFormat::Letter) {
        const std::size_t n_options = bundle.options.empty() ? 4 : bundle.options.size();
        const auto letter = parse_letter(raw, n_options);
        if (!letter) throw Error(ErrorCode::UnparseableResponse, "no option letter in: " + std::string(raw));
        out[bundle.image_refs.front()] = std::string(1, *letter);
        return out;
    }

    const std::string s = strip_code_fences(raw);
    const auto lb = s.find('{');
    const auto rb = s.rfind('}');
    if (lb != std::string::npos && rb != std::string::npos && rb > lb) {
        const auto j = nlohmann::json::parse(s.substr(lb, rb - lb + 1), nullptr, false);
        if (j.is_object()) {
            for (std::size_t i = 0; i < n; ++i) {
                const auto& img = bundle.image_refs[i];
                auto it = j.find(std::to_string(i + 1));
                if (it == j.end()) it = j.find(img);
                if (it == j.end() || it->is_null()) continue;
                out[img] = std::string(text::trim(json_value_text(*it)));
            }
            return out;
        }
    }

    // Line-oriented fallback: `1: tench`, `"2": "goldfish",`, `3. tabby cat`.
    static const std::regex kLine(R"(^\s*["']?(\d+)["']?\s*[:=.)\-]+\s*(.*?)\s*,?\s*$)");
    std::istringstream lines(s);
    std::string line;
    bool any_structure = false;
    while (std::getline(lines, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, kLine)) continue;
        const std::size_t key = std::stoul(m[1].str());
        if (key < 1 || key > n) continue;
        any_structure = true;
        out.emplace(bundle.image_refs[key - 1], strip_quotes(m[2].str()));
    }
    if (any_structure) return out;

    if (n == 1 && !s.empty()) {
        out[bundle.image_refs.front()] = strip_quotes(s);
        return out;
    }
    throw Error(ErrorCode::UnparseableResponse, "no keyed answers recoverable");
}

}  // namespace classbench
