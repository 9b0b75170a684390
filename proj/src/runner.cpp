#include "classbench/runner.hpp"

#include "classbench/digest.hpp"
#include "classbench/error.hpp"
#include "classbench/rng.hpp"
#include "classbench/text.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace classbench {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Serialization

std::string_view to_string(BatchStatus s) {
    switch (s) {
        case BatchStatus::Pending: return "pending";
        case BatchStatus::Done: return "done";
        case BatchStatus::Failed: return "failed";
    }
    return "?";
}

std::string_view to_string(LabelsVariant v) { return v == LabelsVariant::ImGT ? "imgt" : "regt"; }

LabelsVariant parse_labels_variant(std::string_view s) {
    const auto l = text::to_lower(s);
    if (l == "imgt") return LabelsVariant::ImGT;
    if (l == "regt") return LabelsVariant::ReGT;
    throw Error(ErrorCode::InvalidConfig, "labels must be imgt or regt, got '" + std::string(s) + "'");
}

void to_json(json& j, const PredictionRecord& r) {
    j = json{{"image_id", r.image_id}, {"trial", r.trial}, {"batch", r.batch}, {"position", r.position},
             {"oop", r.oop}};
    j["raw"] = r.raw ? json(*r.raw) : json(nullptr);
    j["exact"] = r.exact ? json(r.exact->value) : json(nullptr);
    j["oop_kind"] = r.oop_kind ? json(std::string(to_string(*r.oop_kind))) : json(nullptr);
    j["mapped"] = r.mapped ? json(r.mapped->value) : json(nullptr);
    j["similarity"] = r.similarity ? json(*r.similarity) : json(nullptr);
}

void from_json(const json& j, PredictionRecord& r) {
    r = PredictionRecord{};
    r.image_id = j.at("image_id").get<std::string>();
    r.trial = j.at("trial").get<std::size_t>();
    r.batch = j.at("batch").get<std::size_t>();
    r.position = j.at("position").get<std::size_t>();
    r.oop = j.at("oop").get<bool>();
    if (!j.at("raw").is_null()) r.raw = j["raw"].get<std::string>();
    if (!j.at("exact").is_null()) r.exact = ClassId(j["exact"].get<std::uint32_t>());
    if (!j.at("oop_kind").is_null()) r.oop_kind = parse_oop_kind(j["oop_kind"].get<std::string>());
    if (!j.at("mapped").is_null()) r.mapped = ClassId(j["mapped"].get<std::uint32_t>());
    if (!j.at("similarity").is_null()) r.similarity = j["similarity"].get<double>();
}

namespace {

// ---------------------------------------------------------------------------
// Run directory layout

struct Layout {
    fs::path root;

    fs::path snapshot() const { return root / "config.snapshot"; }
    fs::path failures() const { return root / "failures.log"; }
    fs::path calls() const { return root / "calls.jsonl"; }
    fs::path plan(std::size_t t) const { return root / "plan" / ("trial-" + std::to_string(t) + ".json"); }
    fs::path raw(std::size_t t, std::size_t b) const { return root / "raw" / trial_dir(t) / batch_file(b); }
    fs::path mapped(std::size_t t, std::size_t b) const { return root / "mapped" / trial_dir(t) / batch_file(b); }
    fs::path scores() const { return root / "scores"; }

    static std::string trial_dir(std::size_t t) { return "trial-" + std::to_string(t); }
    static std::string batch_file(std::size_t b) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "batch-%04zu.json", b);
        return buf;
    }
};

void write_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
        out << content;
        if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp);
    }
    fs::rename(tmp, path);
}

void append_line(const fs::path& path, const std::string& line) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path.string());
    out << line << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open image " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string media_type_for(const fs::path& path) {
    const auto ext = text::to_lower(path.extension().string());
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "application/octet-stream";
}

json trial_plan_json(const TrialRecord& t) {
    return json{{"trial", t.trial}, {"seed", t.seed}, {"plan", t.plan}, {"items", t.items}};
}

// Everything a batch execution needs, built once per process.
struct Engine {
    const ExperimentConfig& cfg;
    RunEnvironment& env;
    Layout layout;
    RunInputs in;
    PromptTemplates prompts;
    std::vector<std::string> reference_names;
    std::vector<std::string> abstain;
    std::optional<ClassEmbeddingIndex> index;
    std::optional<ConfusionMatrix> confusion;

    Engine(const ExperimentConfig& c, RunEnvironment& e, fs::path root)
        : cfg(c), env(e), layout{std::move(root)}, in(load_inputs(c)) {
        if (!env.gateway) throw Error(ErrorCode::InvalidConfig, "run environment has no gateway");
        prompts = cfg.prompts_dir ? PromptTemplates::load(*cfg.prompts_dir) : PromptTemplates::defaults();
        reference_names = in.catalog.all_alt_names();
        abstain = cfg.abstain ? load_abstain_phrases(*cfg.abstain) : default_abstain_phrases();
        const bool needs_index = cfg.task == TaskKind::OpenWorld || cfg.map_oop ||
                                 (cfg.mc.strategy && *cfg.mc.strategy == DistractorStrategy::Embedding &&
                                  cfg.task == TaskKind::MultipleChoice);
        if (needs_index) {
            if (!env.embedder) throw Error(ErrorCode::InvalidConfig, "run needs an encoder but none is configured");
            const auto templates = cfg.templates ? load_templates(*cfg.templates) : default_templates();
            index = build_index(in.catalog, templates, *env.embedder, IndexOptions{cfg.normalize_each_template});
        }
        if (cfg.task == TaskKind::MultipleChoice && *cfg.mc.strategy == DistractorStrategy::Confusion) {
            confusion = load_confusion(cfg.mc.confusion, in.catalog.size());
        }
    }

    PromptOptions prompt_options() const { return PromptOptions{cfg.backend_style, cfg.batch_limit, &prompts}; }

    TrialRecord plan_trial(std::size_t t) const {
        TrialRecord tr;
        tr.trial = t;
        tr.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(t));
        if (cfg.task != TaskKind::MultipleChoice) {
            tr.plan = compose_batches(in.images, in.labels, cfg.batch_size, cfg.ordering, tr.seed);
            return tr;
        }
        tr.plan = compose_batches(in.images, in.labels, 1, cfg.ordering, tr.seed);
        // Anchors come from a run-level seed so they stay fixed across trials.
        const std::uint64_t anchor_root = derive_seed(cfg.seed, std::string_view("anchor"));
        const DistractorSource source{confusion ? &*confusion : nullptr, index ? &*index : nullptr};
        for (const auto& batch : tr.plan.batches) {
            const auto& img = batch.front();
            const auto anchors = choose_anchors(img, cfg.mc.anchors, in.labels, derive_seed(anchor_root, img));
            const auto exclusion = distractor_exclusion(img, cfg.mc.anchors, in.labels, in.catalog);
            auto item = assemble_item(img, anchors, *cfg.mc.strategy, exclusion, in.labels, in.catalog, source,
                                      derive_seed(tr.seed, img), AssembleOptions{cfg.mc.options, cfg.mc.per_anchor_slots});
            item.strategy_tag = std::string(to_string(cfg.mc.anchors)) + "+" + item.strategy_tag;
            tr.items.push_back(std::move(item));
        }
        return tr;
    }

    PromptBundle bundle_for(const TrialRecord& tr, std::size_t b) const {
        const auto& batch = tr.plan.batches.at(b);
        switch (cfg.task) {
            case TaskKind::ClosedWorld: return build_cw_prompt(in.catalog, batch, cfg.response_format, prompt_options());
            case TaskKind::OpenWorld: return build_ow_prompt(batch, prompt_options());
            case TaskKind::MultipleChoice: {
                const auto& item = tr.items.at(b);
                std::vector<std::string> names;
                for (auto c : item.options) names.push_back(in.catalog.name(c));
                return build_mc_prompt(item.image_id, names, item.answer_position, prompt_options());
            }
        }
        throw Error(ErrorCode::InvalidConfig, "unknown task");
    }

    std::optional<ClassId> exact_match(const std::string& raw, const TrialRecord& tr, std::size_t b) const {
        if (cfg.task == TaskKind::MultipleChoice) {
            if (raw.size() != 1) return std::nullopt;
            const std::size_t idx = static_cast<std::size_t>(raw[0] - 'A');
            const auto& options = tr.items.at(b).options;
            if (idx >= options.size()) return std::nullopt;
            return options[idx];
        }
        if (cfg.response_format == ResponseFormat::ClassIdFormat) {
            const auto t = text::trim(raw);
            std::uint32_t v = 0;
            const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
            if (ec == std::errc() && p != t.data() && in.catalog.contains(ClassId(v))) return ClassId(v);
        }
        return in.catalog.find_by_name(raw);
    }

    BatchRecord execute(const TrialRecord& tr, std::size_t b) const {
        const auto bundle = bundle_for(tr, b);
        ChatRequest req;
        req.backend_id = cfg.backend;
        req.system_text = bundle.system_text;
        req.user_text = bundle.per_request_text;
        for (const auto& img : bundle.image_refs) {
            const auto& path = in.image_paths.at(img);
            req.images.push_back(ImagePayload{read_bytes(path), media_type_for(path)});
        }
        req.decode = DecodeParams{cfg.temperature, cfg.max_tokens, bundle.structure_hint};
        if (cfg.task == TaskKind::MultipleChoice) req.cache_salt = "trial=" + std::to_string(tr.trial);

        BatchRecord br;
        br.index = b;
        br.images = bundle.image_refs;
        br.cache_key = cache_key(req);
        br.response = env.gateway->chat(req, !cfg.no_cache);

        std::map<ImageId, std::string> answers;
        try {
            answers = parse_response(br.response, bundle);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::UnparseableResponse) throw;
        }
        const bool mapping = index && (cfg.task == TaskKind::OpenWorld || cfg.map_oop);
        for (std::size_t i = 0; i < bundle.image_refs.size(); ++i) {
            PredictionRecord p;
            p.image_id = bundle.image_refs[i];
            p.trial = tr.trial;
            p.batch = b;
            p.position = i + 1;
            if (const auto it = answers.find(p.image_id); it != answers.end()) p.raw = it->second;
            if (p.raw) {
                p.exact = exact_match(*p.raw, tr, b);
                if (p.exact) {
                    p.mapped = p.exact;
                } else if (cfg.task != TaskKind::MultipleChoice) {
                    p.oop = true;
                    p.oop_kind = classify_oop(*p.raw, in.catalog, reference_names, abstain);
                    if (mapping) {
                        try {
                            const auto nn = map_output(*p.raw, *index, *env.embedder);
                            p.mapped = nn.class_id;
                            p.similarity = nn.similarity;
                        } catch (const Error& e) {
                            if (e.code() != ErrorCode::EmptyText) throw;
                        }
                    }
                }
            }
            br.predictions.push_back(std::move(p));
        }
        br.status = BatchStatus::Done;
        return br;
    }

    void persist(const TrialRecord& tr, const BatchRecord& br) const {
        // mapped/ first, raw/ last: a batch counts as done once raw/ exists.
        write_atomic(layout.mapped(tr.trial, br.index), json{{"predictions", br.predictions}}.dump(1));
        write_atomic(layout.raw(tr.trial, br.index), json{{"trial", tr.trial},
                                                          {"batch", br.index},
                                                          {"images", br.images},
                                                          {"cache_key", br.cache_key},
                                                          {"response", br.response}}
                                                         .dump(1));
    }
};

TrialRecord read_plan(const Layout& layout, std::size_t t) {
    const auto j = read_json(layout.plan(t));
    TrialRecord tr;
    tr.trial = j.at("trial").get<std::size_t>();
    tr.seed = j.at("seed").get<std::uint64_t>();
    tr.plan = j.at("plan").get<BatchPlan>();
    tr.items = j.at("items").get<std::vector<MCItem>>();
    return tr;
}

std::set<std::pair<std::size_t, std::size_t>> read_failures(const Layout& layout) {
    std::set<std::pair<std::size_t, std::size_t>> out;
    std::ifstream in(layout.failures());
    std::string line;
    while (std::getline(in, line)) {
        const auto j = json::parse(line, nullptr, false);
        if (j.is_object() && j.contains("trial") && j.contains("batch")) {
            out.emplace(j["trial"].get<std::size_t>(), j["batch"].get<std::size_t>());
        }
    }
    return out;
}

// Runs every batch that has no raw/ file yet. Returns false when the batch
// budget ran out first.
bool execute_pending(const Engine& engine, const RunOptions& options) {
    const auto& cfg = engine.cfg;
    std::size_t budget = options.max_batches.value_or(SIZE_MAX);
    std::mutex log_mu;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const TrialRecord tr = read_plan(engine.layout, t);
        std::vector<std::size_t> pending;
        for (std::size_t b = 0; b < tr.plan.batches.size(); ++b) {
            if (!fs::exists(engine.layout.raw(t, b))) pending.push_back(b);
        }
        bool truncated = false;
        if (pending.size() > budget) {
            pending.resize(budget);
            truncated = true;
        }
        budget -= pending.size();

        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < pending.size(); i = next++) {
                const std::size_t b = pending[i];
                try {
                    engine.persist(tr, engine.execute(tr, b));
                } catch (const std::exception& e) {
                    std::lock_guard lock(log_mu);
                    append_line(engine.layout.failures(), json{{"trial", t}, {"batch", b}, {"error", e.what()}}.dump());
                }
            }
        };
        const std::size_t n_workers = std::min(cfg.concurrency, pending.size());
        std::vector<std::thread> pool;
        for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();
        if (truncated) return false;
    }
    return true;
}

void append_call_log(const Layout& layout, const ModelGateway& gateway, std::size_t from) {
    const auto log = gateway.call_log();
    for (std::size_t i = from; i < log.size(); ++i) {
        const auto& e = log[i];
        append_line(layout.calls(), json{{"key", e.key},
                                         {"backend", e.backend_id},
                                         {"cache_hit", e.cache_hit},
                                         {"attempts", e.attempts},
                                         {"latency_ms", e.latency_ms},
                                         {"prompt_tokens", e.prompt_tokens},
                                         {"completion_tokens", e.completion_tokens},
                                         {"response_digest", e.response_digest},
                                         {"diverged", e.diverged}}
                                        .dump());
    }
}

json scores_json(const std::map<std::string, ProtocolScores>& scores) {
    json out = json::object();
    for (const auto& [protocol, ps] : scores) {
        json p = json::object();
        for (const auto& [variant, agg] : ps.aggregate) {
            p[std::string(to_string(variant))] = {{"aggregate", agg}, {"trials", ps.per_trial.at(variant)}};
        }
        out[protocol] = std::move(p);
    }
    return out;
}

}  // namespace

std::string format_score_table(const ScoreReport& r) {
    std::ostringstream out;
    out << std::left << std::setw(6) << "cat" << std::right << std::setw(8) << "count" << std::setw(10) << "acc"
        << std::setw(10) << "ci95" << '\n';
    for (const auto& [cat, s] : r.per_category) {
        out << std::left << std::setw(6) << to_string(cat) << std::right << std::setw(8) << s.count << std::setw(10)
            << std::fixed << std::setprecision(4) << s.accuracy;
        if (s.ci_halfwidth) {
            out << std::setw(10) << *s.ci_halfwidth;
        } else {
            out << std::setw(10) << "-";
        }
        out << '\n';
    }
    out << "oop_rate " << std::fixed << std::setprecision(4) << r.oop_rate;
    if (r.both_correct) out << "  im_and_re " << *r.both_correct;
    if (r.partial) out << "  PARTIAL";
    out << '\n';
    return out.str();
}

namespace {

RunRecord finalize(const fs::path& run_dir) {
    RunRecord rec = load_run(run_dir);
    if (!rec.complete) return rec;
    const Layout layout{run_dir};
    json summary{{"run_id", rec.run_id},
                 {"digest", run_digest(rec)},
                 {"partial", rec.partial},
                 {"scores", scores_json(rec.scores)}};
    write_atomic(layout.scores() / "summary.json", summary.dump(2));
    std::ostringstream txt;
    for (const auto& [protocol, ps] : rec.scores) {
        for (const auto& [variant, agg] : ps.aggregate) {
            txt << "== " << protocol << " / " << to_string(variant) << " ==\n" << format_score_table(agg) << '\n';
        }
    }
    write_atomic(layout.scores() / "summary.txt", txt.str());
    return rec;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points

RunRecord run_experiment(const ExperimentConfig& config, RunEnvironment& env, const RunOptions& options) {
    config.validate();
    const fs::path run_dir = config.output_dir / config.run_id();
    const Layout layout{run_dir};
    if (fs::exists(layout.snapshot())) {
        throw Error(ErrorCode::InvalidConfig, "run '" + config.run_id() + "' already exists; use resume");
    }
    Engine engine(config, env, run_dir);
    write_atomic(layout.snapshot(), json{{"path", config.source_path.string()},
                                         {"digest", config.source_digest},
                                         {"text", config.source_text}}
                                        .dump(2));
    for (std::size_t t = 0; t < config.trials; ++t) {
        write_atomic(layout.plan(t), trial_plan_json(engine.plan_trial(t)).dump(1));
    }
    const std::size_t log_start = env.gateway->call_log().size();
    execute_pending(engine, options);
    append_call_log(layout, *env.gateway, log_start);
    return finalize(run_dir);
}

ExperimentConfig load_run_config(const fs::path& run_dir) {
    const Layout layout{run_dir};
    if (!fs::exists(layout.snapshot())) throw Error(ErrorCode::UnknownRun, run_dir.string());
    const auto snap = read_json(layout.snapshot());
    const fs::path source = snap.at("path").get<std::string>();
    const auto digest = snap.at("digest").get<std::string>();
    if (!source.empty() && fs::exists(source)) {
        std::ifstream in(source, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        if (sha256_hex(ss.str()) != digest) {
            throw Error(ErrorCode::ConfigDrift, source.string() + " changed since the run started");
        }
    }
    auto cfg = parse_experiment_config(snap.at("text").get<std::string>(),
                                       source.empty() ? run_dir : source.parent_path());
    cfg.source_path = source;
    return cfg;
}

RunRecord resume_run(const fs::path& run_dir, RunEnvironment& env, const RunOptions& options) {
    const ExperimentConfig cfg = load_run_config(run_dir);
    bool pending = false;
    const Layout layout{run_dir};
    for (std::size_t t = 0; t < cfg.trials && !pending; ++t) {
        const auto tr = read_plan(layout, t);
        for (std::size_t b = 0; b < tr.plan.batches.size() && !pending; ++b) pending = !fs::exists(layout.raw(t, b));
    }
    if (!pending) return finalize(run_dir);
    Engine engine(cfg, env, run_dir);
    const std::size_t log_start = env.gateway->call_log().size();
    execute_pending(engine, options);
    append_call_log(layout, *env.gateway, log_start);
    return finalize(run_dir);
}

RunRecord load_run(const fs::path& run_dir) {
    const Layout layout{run_dir};
    if (!fs::exists(layout.snapshot())) throw Error(ErrorCode::UnknownRun, run_dir.string());
    const auto snap = read_json(layout.snapshot());
    const fs::path source = snap.at("path").get<std::string>();
    RunRecord rec;
    rec.config = parse_experiment_config(snap.at("text").get<std::string>(),
                                         source.empty() ? run_dir : source.parent_path());
    rec.config.source_path = source;
    rec.run_id = rec.config.run_id();
    rec.run_dir = run_dir;

    const auto failures = read_failures(layout);
    rec.complete = true;
    for (std::size_t t = 0; t < rec.config.trials; ++t) {
        TrialRecord tr = read_plan(layout, t);
        for (std::size_t b = 0; b < tr.plan.batches.size(); ++b) {
            BatchRecord br;
            br.index = b;
            br.images = tr.plan.batches[b];
            if (fs::exists(layout.raw(t, b))) {
                const auto raw = read_json(layout.raw(t, b));
                br.status = BatchStatus::Done;
                br.cache_key = raw.at("cache_key").get<std::string>();
                br.response = raw.at("response").get<std::string>();
                br.predictions = read_json(layout.mapped(t, b)).at("predictions").get<std::vector<PredictionRecord>>();
            } else if (failures.count({t, b})) {
                br.status = BatchStatus::Failed;
                rec.partial = true;
            } else {
                br.status = BatchStatus::Pending;
                rec.complete = false;
            }
            tr.batches.push_back(std::move(br));
        }
        rec.trials.push_back(std::move(tr));
    }
    if (rec.complete) rec.scores = score_run(rec, load_inputs(rec.config));
    return rec;
}

fs::path find_run(const fs::path& runs_dir, const std::string& run_id) {
    const auto dir = runs_dir / run_id;
    if (!fs::exists(dir / "config.snapshot")) throw Error(ErrorCode::UnknownRun, run_id + " under " + runs_dir.string());
    return dir;
}

PredictionMap protocol_predictions(const TrialRecord& trial, const std::string& protocol,
                                   const std::vector<ImageId>& images) {
    PredictionMap out;
    for (const auto& img : images) out.emplace(img, std::nullopt);
    const bool use_mapped = protocol == "cw+" || protocol == "ow";
    if (!use_mapped && protocol != "cw" && protocol != "mc") {
        throw Error(ErrorCode::InvalidConfig, "unknown protocol '" + protocol + "'");
    }
    for (const auto& b : trial.batches) {
        if (b.status != BatchStatus::Done) continue;
        for (const auto& p : b.predictions) {
            const auto it = out.find(p.image_id);
            if (it == out.end()) continue;
            it->second = use_mapped ? p.mapped : p.exact;
        }
    }
    return out;
}

std::map<std::string, ProtocolScores> score_run(const RunRecord& record, const RunInputs& inputs) {
    const LabelStore imgt_labels = inputs.labels.imgt_as_singletons();
    const double n_all = static_cast<double>(inputs.images.size());
    std::map<std::string, ProtocolScores> out;
    for (const auto& protocol : record.config.protocols()) {
        ProtocolScores ps;
        for (const auto& tr : record.trials) {
            const auto preds = protocol_predictions(tr, protocol, inputs.images);
            std::size_t oop = 0;
            for (const auto& b : tr.batches) {
                for (const auto& p : b.predictions) oop += p.oop ? 1 : 0;
            }
            auto im = score_predictions(preds, imgt_labels, inputs.catalog, inputs.partition);
            auto re = score_predictions(preds, inputs.labels, inputs.catalog, inputs.partition);
            const auto c_im = correctness(preds, imgt_labels, inputs.catalog, inputs.images);
            const auto c_re = correctness(preds, inputs.labels, inputs.catalog, inputs.images);
            std::size_t both = 0;
            for (const auto& [img, ok] : c_im) both += (ok && c_re.at(img)) ? 1 : 0;
            for (auto* r : {&im, &re}) {
                r->oop_rate = static_cast<double>(oop) / n_all;
                r->both_correct = static_cast<double>(both) / n_all;
                r->partial = record.partial;
            }
            ps.per_trial[LabelsVariant::ImGT].push_back(std::move(im));
            ps.per_trial[LabelsVariant::ReGT].push_back(std::move(re));
        }
        for (const auto& [variant, reports] : ps.per_trial) ps.aggregate[variant] = aggregate_trials(reports);
        out[protocol] = std::move(ps);
    }
    return out;
}

ScoreReport score(const RunRecord& record, const RunInputs& inputs, LabelsVariant labels, const std::string& protocol) {
    if (!record.complete) throw Error(ErrorCode::UnscoredRun, record.run_id + " still has pending batches");
    const auto scores = score_run(record, inputs);
    const std::string p = protocol.empty() ? record.config.protocols().front() : protocol;
    const auto it = scores.find(p);
    if (it == scores.end()) throw Error(ErrorCode::InvalidConfig, "run has no protocol '" + p + "'");
    return it->second.aggregate.at(labels);
}

json record_json(const RunRecord& record) {
    json trials = json::array();
    for (const auto& tr : record.trials) {
        json batches = json::array();
        for (const auto& b : tr.batches) {
            batches.push_back({{"index", b.index},
                               {"status", std::string(to_string(b.status))},
                               {"cache_key", b.cache_key},
                               {"response", b.response},
                               {"predictions", b.predictions}});
        }
        trials.push_back({{"trial", tr.trial},
                          {"seed", tr.seed},
                          {"plan", tr.plan},
                          {"items", tr.items},
                          {"batches", std::move(batches)}});
    }
    return json{{"run_id", record.run_id},
                {"config_digest", record.config.source_digest},
                {"complete", record.complete},
                {"partial", record.partial},
                {"trials", std::move(trials)},
                {"scores", scores_json(record.scores)}};
}

std::string run_digest(const RunRecord& record) { return sha256_hex(record_json(record).dump()); }

}  // namespace classbench
