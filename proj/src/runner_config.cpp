#include "classbench/digest.hpp"
#include "classbench/error.hpp"
#include "classbench/runner.hpp"
#include "classbench/text.hpp"

#include <toml.hpp>

#include <fstream>
#include <sstream>

namespace classbench {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename T>
T require(const toml::table& t, std::string_view key) {
    const auto v = t[key].value<T>();
    if (!v) throw Error(ErrorCode::InvalidConfig, "missing or mistyped key '" + std::string(key) + "'");
    return *v;
}

std::size_t count_value(const toml::table& t, std::string_view key, std::size_t fallback) {
    const auto v = t[key].value<std::int64_t>();
    if (!v) return fallback;
    if (*v < 0) throw Error(ErrorCode::InvalidConfig, std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(*v);
}

}  // namespace

std::string ExperimentConfig::run_id() const {
    if (!name.empty()) return name;
    return "run-" + source_digest.substr(0, 12);
}

std::vector<std::string> ExperimentConfig::protocols() const {
    switch (task) {
        case TaskKind::ClosedWorld:
            if (map_oop) return {"cw", "cw+"};
            return {"cw"};
        case TaskKind::OpenWorld: return {"ow"};
        case TaskKind::MultipleChoice: return {"mc"};
    }
    return {};
}

void ExperimentConfig::validate() const {
    auto bad = [](const std::string& m) { return Error(ErrorCode::InvalidConfig, m); };
    if (trials < 1) throw bad("trials must be at least 1");
    if (backend.empty()) throw bad("no chat backend configured");
    if (catalog.empty() || imgt.empty() || regt.empty() || manifest.empty()) {
        throw bad("paths.catalog, paths.imgt, paths.regt and paths.manifest are required");
    }
    if (batch_size < 1) throw bad("batch_size must be at least 1");
    if (batch_size > batch_limit) throw bad("batch_size exceeds batch_limit");
    if (temperature < 0.0) throw bad("temperature must be non-negative");
    if (map_oop && task != TaskKind::ClosedWorld) throw bad("map_oop applies to closed-world runs only");
    if ((task == TaskKind::OpenWorld || map_oop) && encoder.empty()) throw bad("open-world and CW+ runs need an encoder");
    if (task == TaskKind::MultipleChoice) {
        if (!mc.strategy) throw bad("multiple-choice runs need mc.strategy");
        if (batch_size != 1) throw bad("multiple-choice runs present one image per request");
        if (response_format != ResponseFormat::Letter) throw bad("multiple-choice runs answer with letters");
        if (mc.options < 2 || mc.options > kMaxOptions) throw bad("mc.options must be between 2 and 26");
        if (*mc.strategy == DistractorStrategy::Confusion && mc.confusion.empty()) {
            throw bad("the confusion strategy needs mc.confusion");
        }
        if (*mc.strategy == DistractorStrategy::Embedding && encoder.empty()) {
            throw bad("the embedding strategy needs an encoder");
        }
    } else if (response_format == ResponseFormat::Letter) {
        throw bad("letter answers only exist for multiple-choice runs");
    }
    if (task == TaskKind::OpenWorld && response_format != ResponseFormat::ClassName) {
        throw bad("open-world runs answer with free text");
    }
}

ExperimentConfig parse_experiment_config(std::string_view toml_text, const fs::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        throw Error(ErrorCode::ParseError, "config: " + std::string(e.description()));
    }
    ExperimentConfig c;
    c.source_text = std::string(toml_text);
    c.source_digest = sha256_hex(toml_text);

    c.name = root["name"].value_or(std::string());
    c.task = parse_task_kind(require<std::string>(root, "task"));
    if (c.task == TaskKind::MultipleChoice) c.response_format = ResponseFormat::Letter;
    if (auto f = root["response_format"].value<std::string>()) c.response_format = parse_response_format(*f);
    if (auto s = root["backend_style"].value<std::string>()) c.backend_style = parse_backend_style(*s);
    if (auto o = root["ordering"].value<std::string>()) c.ordering = parse_ordering(*o);
    c.map_oop = root["map_oop"].value_or(false);
    c.batch_size = count_value(root, "batch_size", 1);
    c.batch_limit = count_value(root, "batch_limit", kDefaultBatchLimit);
    c.trials = count_value(root, "trials", 1);
    c.concurrency = std::max<std::size_t>(1, count_value(root, "concurrency", 4));
    if (auto s = root["seed"].value<std::int64_t>()) c.seed = static_cast<std::uint64_t>(*s);
    c.backend = root["backend"].value_or(std::string());
    c.encoder = root["encoder"].value_or(std::string());
    c.no_cache = root["no_cache"].value_or(false);
    c.temperature = root["temperature"].value_or(0.0);
    c.max_tokens = static_cast<int>(root["max_tokens"].value_or(std::int64_t{4096}));
    c.normalize_each_template = root["normalize_each_template"].value_or(true);
    if (auto p = root["templates"].value<std::string>()) c.templates = resolve(base_dir, *p);
    if (auto p = root["abstain"].value<std::string>()) c.abstain = resolve(base_dir, *p);
    if (auto p = root["prompts_dir"].value<std::string>()) c.prompts_dir = resolve(base_dir, *p);

    if (const auto* mc = root["mc"].as_table()) {
        if (auto s = (*mc)["strategy"].value<std::string>()) c.mc.strategy = parse_strategy(*s);
        if (auto a = (*mc)["anchors"].value<std::string>()) c.mc.anchors = parse_anchor_mode(*a);
        if (auto p = (*mc)["confusion"].value<std::string>()) c.mc.confusion = resolve(base_dir, *p);
        c.mc.per_anchor_slots = count_value(*mc, "per_anchor_slots", 1);
        c.mc.options = count_value(*mc, "options", 4);
    }

    const auto* paths = root["paths"].as_table();
    if (!paths) throw Error(ErrorCode::InvalidConfig, "missing [paths] table");
    auto path_of = [&](std::string_view key, const char* fallback) -> fs::path {
        if (auto p = (*paths)[key].value<std::string>()) return resolve(base_dir, *p);
        return fallback ? resolve(base_dir, fallback) : fs::path();
    };
    c.catalog = path_of("catalog", nullptr);
    c.imgt = path_of("imgt", nullptr);
    c.regt = path_of("regt", nullptr);
    c.manifest = path_of("manifest", nullptr);
    c.output_dir = path_of("output_dir", "runs");
    c.backends = path_of("backends", "backends.toml");
    c.cache_dir = (*paths)["cache_dir"].value<std::string>() ? path_of("cache_dir", nullptr) : c.output_dir / "cache";
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    auto c = parse_experiment_config(read_text(path), path.parent_path());
    c.source_path = fs::absolute(path).lexically_normal();
    return c;
}

std::vector<std::pair<ImageId, fs::path>> load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<std::pair<ImageId, fs::path>> out;
    std::set<ImageId> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty() || line.front() == '#') continue;
        const auto f = text::split(line, '\t');
        if (f.size() != 2 || f[0].empty()) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected image_id<TAB>path");
        }
        if (!seen.insert(f[0]).second) throw Error(ErrorCode::ParseError, "duplicate image id " + f[0]);
        out.emplace_back(f[0], resolve(path.parent_path(), f[1]));
    }
    return out;
}

RunInputs load_inputs(const ExperimentConfig& config) {
    RunInputs in;
    in.catalog = load_catalog(config.catalog);
    const LabelStore all = load_labels(config.imgt, config.regt);
    for (const auto& [id, path] : load_manifest(config.manifest)) {
        const auto gt = all.imgt.find(id);
        if (gt == all.imgt.end()) throw Error(ErrorCode::MissingImGT, id);
        const auto re = all.regt.find(id);
        if (re == all.regt.end()) throw Error(ErrorCode::UnknownImage, "no ReGT entry for " + id);
        in.labels.imgt.emplace(id, gt->second);
        in.labels.regt.emplace(id, re->second);
        in.images.push_back(id);
        in.image_paths.emplace(id, path);
    }
    if (in.images.empty()) throw Error(ErrorCode::EmptySubset, "manifest lists no images");
    in.labels.validate(in.catalog);
    in.partition = partition_categories(in.labels);
    return in;
}

RunEnvironment make_environment(const ExperimentConfig& config) {
    const auto backends = load_backend_configs(config.backends);
    auto find = [&](const std::string& id, BackendKind kind) -> const BackendConfig& {
        for (const auto& b : backends) {
            if (b.id == id && b.kind == kind) return b;
        }
        throw Error(ErrorCode::UnknownBackend, "'" + id + "' not found in " + config.backends.string());
    };
    RunEnvironment env;
    env.gateway = std::make_shared<ModelGateway>(config.cache_dir / "chat");
    const auto& chat = find(config.backend, BackendKind::Chat);
    env.gateway->add_backend(chat.id, make_chat_backend(chat), chat.limits);
    if (!config.encoder.empty()) {
        const auto& enc = find(config.encoder, BackendKind::Embed);
        env.embedder = std::make_shared<CachingEmbedder>(make_embedder(enc),
                                                         std::make_shared<EmbeddingCache>(config.cache_dir / "embeddings.bin"));
    }
    return env;
}

}  // namespace classbench
